"""fractube: tube volumes, Minkowski contents and certified
conformal-image factors for self-similar attractors."""

from .conformal import (
    CounterexampleReport,
    DistortionPartition,
    ImageContentReport,
    build_partition,
    conformal_factor,
    counterexample_report,
    eps0,
    image_avg_content,
    image_tube_volume,
    min_scaling,
)
from .content import (
    ContentReport,
    cesaro_avg_content,
    content_bounds,
    dim_regression,
    gatzouras_avg_content,
    oscillation_amplitude,
)
from .errors import (
    CertificateError,
    ConfigError,
    FractubeError,
    MapDomainError,
    MapParseError,
    NumericError,
    ResourceLimitError,
    SscViolationError,
    WindowViolationError,
)
from .ifs_core import (
    IfsSpec,
    LatticeType,
    Similarity,
    Word,
    classify_lattice,
    code_point,
    compute_kappa,
    entropy_term,
    from_similarities,
    ifs_from_json,
    moran_dimension,
    similarity_1d,
    stopping_words,
)
from .local_content import (
    CylinderMeasureTable,
    build_measure_table,
    cylinder_window,
    image_local_density,
    local_avg_content_exact,
    local_cesaro_content,
    local_tube_volume_1d,
)
from .map_expr import (
    ConformalMap,
    cantor_function,
    estimate_holder,
    eval_deriv_mag,
    eval_map,
    parse_map,
)
from .tube_exact_1d import (
    GapStream,
    TubeProfile,
    gap_stream,
    scaling_function_1d,
    tube_profile,
    tube_volume_exact,
)
from .tube_numeric_nd import (
    TubeEstimate,
    attractor_cloud,
    distance_to_attractor,
    tube_volume_grid,
    tube_volume_mc,
)

__version__ = "0.1.0"
