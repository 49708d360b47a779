"""Local (average) Minkowski content on cylinder windows.

The local average content of a 1-D self-similar attractor is the global
content times the natural cylinder weight r_w^delta.  The numeric side
evaluates windowed tube volumes lambda(K_eps ∩ A_w) exactly, where A_w
stretches from the midpoint of the gap left of the cylinder hull to the
midpoint of the gap on its right; on hull-extreme sides the window is
unbounded so that the tube overhang belongs to its own cylinder and local
volumes add up exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal import DEFAULT_DELTA_DIST, conformal_factor
from .content import ContentReport, gatzouras_avg_content
from .errors import ConfigError, WindowViolationError
from .ifs_core import IfsSpec, Word, tight_interval_hull
from .map_expr import ConformalMap
from .tube_exact_1d import gap_stream, tube_volume_window


# ---------------------------------------------------------------------------
# cylinder windows


@dataclass(frozen=True)
class CylinderWindow:
    """Gap-midpoint window around a cylinder with its validity scale.

    For eps < validity_eps the eps-neighborhood of the cylinder piece is
    contained in the window and no other piece's neighborhood enters it.
    Touching neighbors give validity 0; hull-extreme sides are unbounded.
    """

    lo: float
    hi: float
    validity_eps: float


def _cyl_interval(ifs: IfsSpec, letters: tuple, hull: tuple[float, float]):
    sim = ifs.word_map(letters)
    x = float(sim.apply(np.array([hull[0]]))[0])
    y = float(sim.apply(np.array([hull[1]]))[0])
    return (min(x, y), max(x, y))


def cylinder_window(ifs: IfsSpec, word: Word) -> CylinderWindow:
    """Window of phi_w(K) bounded by the adjacent gap midpoints."""
    if ifs.ambient_dim != 1:
        raise ConfigError("cylinder windows are 1-D only")
    if not word.letters:
        return CylinderWindow(-math.inf, math.inf, math.inf)
    hull = tight_interval_hull(ifs)
    letters = word.letters
    tol = 1e-12 * max(ifs.diameter(), 1.0)
    lo, hi = -math.inf, math.inf
    gap_left: float | None = None
    gap_right: float | None = None
    for level in range(len(letters), 0, -1):
        parent = letters[: level - 1]
        target = _cyl_interval(ifs, letters[:level], hull)
        boxes = sorted(
            _cyl_interval(ifs, parent + (i,), hull) for i in range(1, ifs.n_maps + 1)
        )
        pos = min(
            range(len(boxes)),
            key=lambda k: abs(boxes[k][0] - target[0]) + abs(boxes[k][1] - target[1]),
        )
        if gap_left is None and pos > 0:
            g = boxes[pos][0] - boxes[pos - 1][1]
            gap_left = max(g, 0.0) if g > tol else 0.0
            lo = boxes[pos - 1][1] + 0.5 * max(g, 0.0)
        if gap_right is None and pos < len(boxes) - 1:
            g = boxes[pos + 1][0] - boxes[pos][1]
            gap_right = max(g, 0.0) if g > tol else 0.0
            hi = boxes[pos][1] + 0.5 * max(g, 0.0)
        if gap_left is not None and gap_right is not None:
            break
    left = math.inf if gap_left is None else gap_left
    right = math.inf if gap_right is None else gap_right
    return CylinderWindow(lo, hi, 0.5 * min(left, right))


# ---------------------------------------------------------------------------
# local tube volumes and contents


def local_tube_volume_1d(ifs: IfsSpec, eps: float, word: Word) -> float:
    """Exact lambda(K_eps ∩ A_w) for eps inside the window validity.

    Within validity this equals r_w * lambda(K_{eps/r_w}) by exact
    self-similar localization; the gap-restricted evaluation is kept as
    the computation path so the identity stays a testable property.
    """
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    window = cylinder_window(ifs, word)
    if eps >= window.validity_eps:
        raise WindowViolationError(
            f"eps = {eps:.6g} not below the window validity "
            f"{window.validity_eps:.6g} of cylinder {word}"
        )
    return tube_volume_window(ifs, eps, (window.lo, window.hi))


def windowed_tube_volume(ifs: IfsSpec, eps: float, word: Word) -> float:
    """lambda(K_eps ∩ A_w) for arbitrary eps > 0 (window fixed by the
    word, neighborhoods of other pieces may enter it)."""
    window = cylinder_window(ifs, word)
    return tube_volume_window(ifs, eps, (window.lo, window.hi))


def local_avg_content_exact(
    ifs: IfsSpec, word: Word, report: ContentReport | None = None
) -> float:
    """Closed-form local average content of the cylinder: M(K) * r_w^delta."""
    if report is None:
        report = gatzouras_avg_content(ifs)
    return report.avg_content * word.ratio ** report.delta


def local_cesaro_content(
    ifs: IfsSpec,
    word: Word,
    T: float,
    nodes_per_decade: int = 64,
) -> float:
    """Numeric Cesaro average of windowed tube volumes on the cylinder.

    |ln T|^-1 int_T^1 eps^(delta-d-1) lambda(K_eps ∩ A_w) d eps via
    composite Simpson on the log grid; below the window validity the
    exact localization identity r_w * lambda(K_{eps/r_w}) is used so deep
    cutoffs stay cheap.
    """
    if not 0.0 < T < 1.0:
        raise ConfigError("T must lie in (0,1)")
    delta = ifs.dimension()
    stream = gap_stream(ifs)
    window = cylinder_window(ifs, word)
    t_end = -math.log(T)
    n = max(4, math.ceil(t_end / math.log(10.0) * nodes_per_decade))
    if n % 2 == 1:
        n += 1
    t = np.linspace(0.0, t_end, n + 1)
    eps = np.exp(-t)
    lam = np.empty_like(eps)
    r_w = word.ratio
    # localization identity below the validity scale, positional above
    safe = eps < window.validity_eps
    if np.any(safe):
        lam[safe] = r_w * stream.tube_volume_many(eps[safe] / r_w)
    for k in np.nonzero(~safe)[0]:
        lam[k] = tube_volume_window(ifs, float(eps[k]), (window.lo, window.hi))
    psi = eps ** (delta - 1.0) * lam
    h = t[1] - t[0]
    integral = h / 3.0 * (
        psi[0] + psi[-1] + 4.0 * np.sum(psi[1:-1:2]) + 2.0 * np.sum(psi[2:-1:2])
    )
    return float(integral / t_end)


# ---------------------------------------------------------------------------
# image cylinder measures (the delta-conformal weights)


def image_local_density(
    ifs: IfsSpec,
    cmap: ConformalMap,
    word: Word,
    delta_dist: float = DEFAULT_DELTA_DIST,
    factor: tuple[float, float] | None = None,
) -> tuple[float, float, float, float]:
    """(density_lo, density_hi, measure_lo, measure_hi) of the image
    cylinder g(phi_w K) under the normalized |g'|^delta weighting.

    measure = r_w^delta * (cylinder average of |g'|^delta) / int |g'|^delta,
    enclosed through certified per-cylinder derivative bounds; densities
    are the pointwise bounds of the normalized |g'|^delta on the cylinder.
    """
    cmap = cmap if cmap.domain_box is not None else cmap.bind(ifs)
    delta = ifs.dimension()
    if factor is None:
        factor = conformal_factor(ifs, cmap, delta_dist)
    f_lo, f_hi = factor
    box = ifs.cylinder_box(word.letters)
    m_lo, m_hi = cmap.deriv_mag_range(box)
    dens_lo = m_lo ** delta / f_hi
    dens_hi = m_hi ** delta / f_lo
    w = word.ratio ** delta
    return (dens_lo, dens_hi, w * dens_lo, w * dens_hi)


# ---------------------------------------------------------------------------
# cylinder measure tables


@dataclass(frozen=True)
class CylinderMeasureTable:
    """Per-cylinder weights, local contents and image measures.

    entries: word -> (mu_delta, local_content_exact, local_content_numeric,
    image_measure_lo, image_measure_hi); total_content is the global
    average content the local values refine.
    """

    entries: dict
    total_content: float

    def to_csv(self) -> str:
        lines = [
            "word,mu_delta,local_content_exact,local_content_numeric,"
            "image_measure_lo,image_measure_hi"
        ]
        for word, row in self.entries.items():
            cells = ",".join(f"{v:.12g}" for v in row)
            lines.append(f"{word},{cells}")
        return "\n".join(lines) + "\n"


def build_measure_table(
    ifs: IfsSpec,
    words: list[Word],
    cmap: ConformalMap | None = None,
    T: float = 1e-6,
    delta_dist: float = DEFAULT_DELTA_DIST,
) -> CylinderMeasureTable:
    """Assemble the per-cylinder table over the given words."""
    report = gatzouras_avg_content(ifs)
    delta = report.delta
    factor = None
    if cmap is not None:
        cmap = cmap if cmap.domain_box is not None else cmap.bind(ifs)
        factor = conformal_factor(ifs, cmap, delta_dist)
    entries: dict = {}
    for w in words:
        mu = w.ratio ** delta
        exact = report.avg_content * mu
        numeric = local_cesaro_content(ifs, w, T)
        if cmap is None:
            lo = hi = mu
        else:
            _, _, lo, hi = image_local_density(ifs, cmap, w, delta_dist, factor)
        entries[str(w)] = (mu, exact, numeric, lo, hi)
    return CylinderMeasureTable(entries=entries, total_content=report.avg_content)
