import math

import numpy as np
import pytest

from fractube.conformal import (
    build_partition,
    conformal_factor,
    counterexample_report,
    eps0,
    image_avg_content,
    image_cesaro_mc,
    image_tube_volume,
    image_tube_volume_exact,
    min_scaling,
    _mu_barycenter,
)
from fractube.content import gatzouras_avg_content
from fractube.errors import ConfigError, MapDomainError
from fractube.map_expr import parse_map
from fractube.tube_exact_1d import tube_volume_exact

LN = math.log


@pytest.fixture(scope="module")
def exp_map(cantor):
    return parse_map("exp").bind(cantor)


# ---------------------------------------------------------------------------
# scaling bounds and thresholds


def test_min_scaling_identity_affine(cantor):
    assert min_scaling(parse_map("identity").bind(cantor), cantor) == pytest.approx(1.0)
    assert min_scaling(parse_map("affine -3 1").bind(cantor), cantor) == pytest.approx(3.0)


def test_min_scaling_exp(cantor, exp_map):
    # monotone derivative: the minimum sits at the left end of [-1/2, 3/2]
    assert min_scaling(exp_map, cantor) == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_min_scaling_is_lower_bound(cantor):
    m = parse_map("poly 0 1 0 1").bind(cantor)
    s = min_scaling(m, cantor)
    for x in np.linspace(-0.5, 1.5, 200):
        assert m.deriv_mag(np.array([x])) >= s - 1e-9


def test_eps0_formula_exp(cantor, exp_map):
    dd = 0.07
    s_g = math.exp(-0.5)
    holder_l = math.exp(1.5)
    kappa = 1 / 6
    r_min = 1 / 3
    expected = s_g * r_min * (dd * s_g / holder_l) * kappa / (1 + 2 * kappa * r_min)
    assert eps0(cantor, exp_map, dd) == pytest.approx(expected, rel=1e-9)


def test_eps0_constant_deriv_cap(cantor):
    ident = parse_map("identity").bind(cantor)
    assert eps0(cantor, ident, 0.3) == pytest.approx(min(1 / 6 * 1 / 3, 1 / 6), rel=1e-12)


def test_eps0_monotone_in_delta_dist(cantor, exp_map):
    vals = [eps0(cantor, exp_map, dd) for dd in (0.01, 0.02, 0.04, 0.08)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# partitions


def test_partition_identity_trivial(cantor):
    part = build_partition(cantor, parse_map("identity").bind(cantor), 0.5, 0.0)
    assert all(lo == hi == 1.0 for lo, hi in part.deriv_bounds)


def test_partition_certificate_and_threshold(cantor, exp_map):
    part = build_partition(cantor, exp_map, 0.1, 0.0)
    assert part.b > 0.0
    for w, (lo, hi) in zip(part.words, part.deriv_bounds):
        assert hi / lo <= 1.1 + 1e-12
        assert w.ratio <= part.b  # diam = 1 here
    parents = {w.letters[:-1] for w in part.words}
    for p in parents:
        r = math.prod(cantor.ratios[v - 1] for v in p)
        assert r > part.b


def test_partition_monotone_in_delta_dist(cantor, exp_map):
    p1 = build_partition(cantor, exp_map, 0.1, 0.0)
    p2 = build_partition(cantor, exp_map, 0.05, 0.0)
    assert p2.b < p1.b
    assert len(p2.words) >= len(p1.words)


def test_partition_covering_depth12(cantor, exp_map):
    part = build_partition(cantor, exp_map, 0.2, 0.0)
    rng = np.random.default_rng(4)
    for _ in range(40):
        letters = tuple(rng.integers(1, 3, size=12))
        assert any(letters[: len(w.letters)] == w.letters for w in part.words)


def test_partition_disjointness_below_eps0(cantor, exp_map):
    e0 = eps0(cantor, exp_map, 0.1)
    eps = 0.5 * e0
    part = build_partition(cantor, exp_map, 0.1, eps)
    pad = eps / part.s_g
    ivs = sorted(
        (cantor.cylinder_box(w.letters)[0][0] - pad,
         cantor.cylinder_box(w.letters)[0][1] + pad)
        for w in part.words
    )
    assert all(b_lo > a_hi for (_, a_hi), (b_lo, _) in zip(ivs, ivs[1:]))


def test_partition_covering_precondition(cantor, exp_map):
    with pytest.raises(ConfigError):
        build_partition(cantor, exp_map, 0.01, 1.0)


def test_partition_requires_ssc(c2):
    m = parse_map("exp").bind(c2)
    from fractube.errors import SscViolationError

    with pytest.raises(SscViolationError):
        build_partition(c2, m, 0.1, 0.0)


# ---------------------------------------------------------------------------
# conformal factor


def test_factor_identity(cantor):
    lo, hi = conformal_factor(cantor, parse_map("identity").bind(cantor))
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi == pytest.approx(1.0, abs=1e-12)


def test_factor_affine_exact(cantor):
    delta = cantor.dimension()
    lo, hi = conformal_factor(cantor, parse_map("affine 2 0").bind(cantor))
    assert lo == hi == pytest.approx(2 ** delta, rel=1e-14)


def test_factor_exp_nesting_and_shrink(cantor, exp_map):
    enclosures = {dd: conformal_factor(cantor, exp_map, dd) for dd in (0.04, 0.02, 0.01)}
    widths = []
    for (lo1, hi1), (lo2, hi2) in zip(
        list(enclosures.values()), list(enclosures.values())[1:]
    ):
        assert max(lo1, lo2) <= min(hi1, hi2)  # overlap
    for dd, (lo, hi) in enclosures.items():
        widths.append(hi - lo)
    assert widths[0] / widths[1] >= 1.5
    assert widths[1] / widths[2] >= 1.5
    mid_02 = 0.5 * sum(enclosures[0.02])
    mid_01 = 0.5 * sum(enclosures[0.01])
    assert mid_02 == pytest.approx(mid_01, abs=1e-4 * mid_01)


def test_factor_exp_contains_cylinder_oracle(cantor, exp_map):
    # independent depth-14 cylinder midpoint quadrature of the integral
    delta = cantor.dimension()
    pts = np.array([[0.5]])
    weights = np.array([1.0])
    for _ in range(14):
        pts = np.concatenate([m.apply(pts) for m in cantor.maps], axis=0)
        weights = np.concatenate([m.ratio ** delta * weights for m in cantor.maps])
    oracle = float(np.sum(weights * np.exp(pts[:, 0]) ** delta))
    lo, hi = conformal_factor(cantor, exp_map, 0.02)
    assert lo <= oracle <= hi


def test_factor_devil_encloses_log2(cantor):
    # beta * delta = 1 and the staircase pushes the natural measure to
    # Lebesgue, so the integral is int_0^1 du/(1+u) = ln 2 exactly
    m = parse_map("devil_staircase").bind(cantor)
    lo, hi = conformal_factor(cantor, m, 0.02)
    assert lo <= LN(2) <= hi


def _cylinder_quadrature_oracle(ifs, cmap, depth):
    delta = ifs.dimension()
    pts = np.array([_mu_barycenter(ifs)])
    weights = np.ones(1)
    for _ in range(depth):
        pts = np.concatenate([m.apply(pts) for m in ifs.maps], axis=0)
        weights = np.concatenate([m.ratio ** delta * weights for m in ifs.maps])
    vals = np.array([cmap.deriv_mag(p) for p in pts])
    return float(np.sum(weights * vals ** delta))


@pytest.mark.parametrize("text", ["poly 0 1 0 1", "mobius 2 1 1 3"])
def test_factor_other_kinds_contain_oracle(cantor, text):
    m = parse_map(text).bind(cantor)
    oracle = _cylinder_quadrature_oracle(cantor, m, 14)
    for dd in (0.05, 0.02):
        lo, hi = conformal_factor(cantor, m, dd)
        assert lo <= oracle <= hi


def test_factor_2d_complex_square():
    # shifted triangle system away from the critical point of z^2: the
    # whole certified pipeline (2-D kappa, min_scaling branch and bound,
    # per-cylinder subdivision certificates) runs in the plane
    from fractube.ifs_core import Similarity, from_similarities

    h = math.sqrt(3.0) / 2.0
    maps = [
        Similarity(0.25, np.eye(2), np.array([0.75 * (vx + 3.0), 0.75 * vy]), 2)
        for vx, vy in [(0.0, 0.0), (1.0, 0.0), (0.5, h)]
    ]
    tri = from_similarities(maps)
    m = parse_map("complex_poly 0 0 1").bind(tri)
    lo, hi = conformal_factor(tri, m, 0.05)
    oracle = _cylinder_quadrature_oracle(tri, m, 8)
    assert lo <= oracle <= hi
    assert hi / lo < 1.25


# ---------------------------------------------------------------------------
# image tube volumes


def test_image_tube_identity(cantor):
    m = parse_map("identity").bind(cantor)
    est = image_tube_volume(cantor, m, 0.05, method="grid", resolution=60_000)
    exact = tube_volume_exact(cantor, 0.05)
    assert est.lower <= exact <= est.upper


def test_image_tube_affine_covariance(cantor):
    m = parse_map("affine 2 0").bind(cantor)
    eps = 0.04
    expected = 2.0 * tube_volume_exact(cantor, eps / 2.0)
    est = image_tube_volume(cantor, m, eps, method="mc", n_samples=200_000, seed=8)
    assert abs(est.value - expected) <= est.ci_half_width
    exact = image_tube_volume(cantor, m, eps, method="exact")
    assert exact.value == pytest.approx(expected, rel=1e-12)


def test_image_tube_devil_bracket(cantor):
    m = parse_map("devil_staircase").bind(cantor)
    est = image_tube_volume(cantor, m, 1e-4, method="grid", resolution=1 << 21)
    assert est.value > 0.0
    assert est.lower <= est.value <= est.upper
    exact = image_tube_volume_exact(cantor, m, 1e-4)
    assert est.lower <= exact <= est.upper


def test_image_tube_exp_exact_vs_mc(cantor, exp_map):
    eps = 0.01
    exact = image_tube_volume_exact(cantor, exp_map, eps)
    est = image_tube_volume(cantor, exp_map, eps, method="mc", n_samples=400_000, seed=13)
    assert abs(est.value - exact) <= est.ci_half_width + 1e-4


# ---------------------------------------------------------------------------
# image average content


def test_image_content_identity(cantor):
    rep = image_avg_content(cantor, parse_map("identity").bind(cantor))
    base = gatzouras_avg_content(cantor).avg_content
    assert rep.value == pytest.approx(base, rel=1e-12)
    assert rep.certified


def test_image_content_affine_covariance(cantor):
    delta = cantor.dimension()
    rep = image_avg_content(cantor, parse_map("affine 2 0").bind(cantor))
    base = gatzouras_avg_content(cantor).avg_content
    assert rep.value == pytest.approx(2 ** delta * base, rel=1e-10)
    assert rep.half_width <= 1e-10


def test_image_content_devil_theory(cantor):
    m = parse_map("devil_staircase").bind(cantor)
    rep = image_avg_content(cantor, m, 0.02)
    theory = gatzouras_avg_content(cantor).avg_content * LN(2)
    assert abs(rep.value - theory) <= rep.half_width + 1e-12


def test_image_content_uncertified_fallback(c2):
    m = parse_map("exp").bind(c2)
    rep = image_avg_content(c2, m)
    assert not rep.certified
    assert rep.value > 0.0


def test_image_mc_crosscheck_smoke(cantor, exp_map):
    rep = image_avg_content(cantor, exp_map, 0.02)
    mc = image_cesaro_mc(cantor, exp_map, T=1e-3, nodes=16, n_samples=100_000, seed=2)
    assert abs(mc - rep.value) / rep.value < 0.05


def test_injectivity_check_2d():
    # z^2 has a vanishing derivative at 0; binding to a system whose
    # padded hull contains the origin must be rejected
    from fractube.ifs_core import Similarity, from_similarities

    ifs = from_similarities(
        [
            Similarity(0.25, np.eye(2), np.array([-0.4, 0.0]), 2),
            Similarity(0.25, np.eye(2), np.array([0.4, 0.0]), 2),
        ]
    )
    with pytest.raises(MapDomainError):
        parse_map("complex_poly 0 0 1").bind(ifs)
    # away from the origin the same map binds fine
    shifted = from_similarities(
        [
            Similarity(0.25, np.eye(2), np.array([3.0, 0.0]), 2),
            Similarity(0.25, np.eye(2), np.array([3.8, 0.0]), 2),
        ]
    )
    bound = parse_map("complex_poly 0 0 1").bind(shifted)
    assert bound.deriv_mag_range(shifted.hull)[0] > 0.0


# ---------------------------------------------------------------------------
# the counterexample


def test_counterexample_window_too_short():
    with pytest.raises(ConfigError):
        counterexample_report(0.0, 2.0)


def test_counterexample_smoke():
    rep = counterexample_report(
        LN(6), LN(6) + 3 * LN(3), samples=24, resolution=1 << 18
    )
    assert rep.amplitude_k > 0.05
    assert rep.amplitude_f < rep.amplitude_k
    assert rep.ratio > 1.0
    lines = rep.to_csv().splitlines()
    assert lines[0] == "t,psi_K,psi_F"
    assert len(lines) == 25


def test_mu_barycenter_cantor(cantor):
    assert _mu_barycenter(cantor)[0] == pytest.approx(0.5, abs=1e-12)
