import math

import numpy as np
import pytest

from fractube.errors import ConfigError, MapDomainError, MapParseError
from fractube.map_expr import (
    LOG2_OVER_LOG3,
    LOG3_OVER_LOG2,
    _STAIRCASE,
    cantor_function,
    estimate_holder,
    eval_deriv_mag,
    eval_map,
    parse_map,
)

BOX = np.array([[-0.5, 1.5]])


# ---------------------------------------------------------------------------
# parsing


def test_parse_identity():
    m = parse_map("identity", domain_box=BOX)
    assert m.deriv_mag(np.array([0.3])) == 1.0


def test_parse_affine():
    m = parse_map("affine 2 5", domain_box=BOX)
    assert eval_map(m, np.array([0.25])) == pytest.approx(5.5)
    assert eval_deriv_mag(m, np.array([0.25])) == 2.0


def test_parse_errors_carry_position():
    with pytest.raises(MapParseError):
        parse_map("affine 2")
    with pytest.raises(MapParseError):
        parse_map("affine two 5")
    with pytest.raises(MapParseError):
        parse_map("warp 1 2")
    with pytest.raises(MapParseError):
        parse_map("")


def test_parse_rejects_vanishing_derivative():
    # derivative of x^2 vanishes at 0, inside the box
    with pytest.raises((MapDomainError, Exception)):
        parse_map("poly 0 0 1", domain_box=np.array([[-1.0, 1.0]]))


def test_mobius_pole_rejected():
    with pytest.raises(MapDomainError):
        parse_map("mobius 1 0 1 -1", domain_box=np.array([[0.0, 2.0]]))


def test_complex_literals():
    m = parse_map("complex_poly 0 1+2i")
    out = eval_map(m, np.array([1.0, 0.0]))
    assert out == pytest.approx([1.0, 2.0])
    m = parse_map("complex_mobius 1 -2i 0 1")
    out = eval_map(m, np.array([0.0, 0.0]))
    assert out == pytest.approx([0.0, -2.0])


# ---------------------------------------------------------------------------
# evaluation and derivative exactness


def test_poly_derivative_finite_difference():
    m = parse_map("poly 0 1 0 1", domain_box=np.array([[-0.1, 1.1]]))
    rng = np.random.default_rng(1)
    for x in rng.uniform(0.0, 1.0, size=40):
        an = m.deriv_mag(np.array([x]))
        assert an == pytest.approx(1.0 + 3.0 * x * x, rel=1e-12)
        h = 1e-6
        fd = (m.eval(np.array([x + h])) - m.eval(np.array([x - h]))) / (2 * h)
        assert an == pytest.approx(abs(fd), rel=1e-6)


def test_exp_at_zero():
    m = parse_map("exp", domain_box=BOX)
    assert m.deriv_mag(np.array([0.0])) == 1.0


def test_complex_square_derivative():
    m = parse_map("complex_poly 0 0 1")
    assert m.deriv_mag(np.array([1.0, 0.0])) == pytest.approx(2.0)


@pytest.mark.parametrize(
    "text,box",
    [
        ("affine -1.5 2", BOX),
        ("poly 1 2 0 0.5", np.array([[0.0, 1.0]])),
        ("exp", BOX),
        ("mobius 2 1 1 3", np.array([[0.0, 1.0]])),
    ],
)
def test_derivative_matches_finite_differences(text, box):
    m = parse_map(text, domain_box=box)
    rng = np.random.default_rng(7)
    lo, hi = box[0]
    pad = 0.05 * (hi - lo)
    for x in rng.uniform(lo + pad, hi - pad, size=25):
        h = 1e-6
        fd = (m.eval(np.array([x + h])) - m.eval(np.array([x - h]))) / (2 * h)
        assert m.deriv_mag(np.array([x])) == pytest.approx(abs(fd), rel=1e-6)


def test_deriv_range_sound():
    m = parse_map("mobius 2 1 1 3", domain_box=np.array([[0.0, 1.0]]))
    lo, hi = m.deriv_mag_range(np.array([[0.2, 0.8]]))
    for x in np.linspace(0.2, 0.8, 50):
        v = m.deriv_mag(np.array([x]))
        assert lo - 1e-12 <= v <= hi + 1e-12


def test_complex_mobius_deriv_range_exact():
    # z -> 1/z has |g'| = 1/|z|^2; over [1,2]x[0,1] the pole distance
    # ranges from 1 (corner (1,0)) to sqrt(5), so the range is exact
    m = parse_map("complex_mobius 0 1 1 0")
    lo, hi = m.deriv_mag_range(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert lo == pytest.approx(1.0 / 5.0, rel=1e-12)
    assert hi == pytest.approx(1.0, rel=1e-12)
    assert m.deriv_mag(np.array([1.0, 1.0])) == pytest.approx(0.5, rel=1e-12)


def test_affine_composition_with_identity():
    ident = parse_map("identity", domain_box=BOX)
    aff = parse_map("affine 2 5", domain_box=BOX)
    for x in np.linspace(-0.4, 1.4, 17):
        assert aff.eval(ident.eval(np.array([x]))) == aff.eval(np.array([x]))


def test_out_of_domain_rejected():
    m = parse_map("exp", domain_box=BOX)
    with pytest.raises(MapDomainError):
        m.eval(np.array([5.0]))


# ---------------------------------------------------------------------------
# the staircase map


def test_cantor_function_values():
    assert cantor_function(1 / 3) == 0.5
    assert cantor_function(0.5) == 0.5
    assert cantor_function(2 / 3) == 0.5
    assert cantor_function(0.25) == pytest.approx(1 / 3, abs=1e-15)
    assert cantor_function(1 / 9) == pytest.approx(0.25, abs=1e-15)
    assert cantor_function(-1.0) == 0.0
    assert cantor_function(2.0) == 1.0


def test_devil_deriv_at_half():
    m = parse_map("devil_staircase", domain_box=BOX)
    expected = (1.5) ** (-LOG3_OVER_LOG2)
    assert m.deriv_mag(np.array([0.5])) == pytest.approx(expected, rel=1e-14)
    assert m.alpha == pytest.approx(LOG2_OVER_LOG3)


def test_devil_monotone_and_bounded():
    m = parse_map("devil_staircase", domain_box=BOX)
    xs = np.linspace(0.0, 1.0, 301)
    vals = [m.eval(np.array([x])) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    g1 = vals[-1] - vals[0]
    assert 0.0 < g1 <= 1.0


def _staircase_oracle(depth):
    """Independent Lebesgue-sum bracket for g(1): gap terms are exact,
    the level-`depth` dust is bracketed by the endpoint integrand values."""
    beta = LOG3_OVER_LOG2
    gaps = 0.0
    for n in range(1, depth + 1):
        for k in range(2 ** (n - 1)):
            f_val = (2 * k + 1) / 2 ** n
            gaps += 3.0 ** -n * (f_val + 1.0) ** -beta
    lo = hi = gaps
    for j in range(2 ** depth):
        lo += 3.0 ** -depth * ((j + 1) / 2 ** depth + 1.0) ** -beta
        hi += 3.0 ** -depth * (j / 2 ** depth + 1.0) ** -beta
    return lo, hi


def test_devil_integral_inside_independent_bracket():
    lo, hi = _STAIRCASE.g_enclosure(1.0)
    olo, ohi = _staircase_oracle(14)
    assert olo <= hi and lo <= ohi
    assert hi - lo < 1e-13


def test_devil_enclosures_interior_points():
    olo_full, ohi_full = _staircase_oracle(14)
    for x in (0.1, 1 / 3, 0.5, 0.9):
        lo, hi = _STAIRCASE.g_enclosure(x)
        assert hi - lo < 1e-12
        assert 0.0 < lo <= hi < ohi_full + 1e-12


def test_devil_derivative_finite_difference():
    m = parse_map("devil_staircase", domain_box=BOX)
    # at gap interiors g is locally linear, so FD is essentially exact
    for x in (0.45, 0.5, 0.55, 2 / 9 + 0.01):
        h = 1e-8
        fd = (m.eval(np.array([x + h])) - m.eval(np.array([x - h]))) / (2 * h)
        assert m.deriv_mag(np.array([x])) == pytest.approx(fd, rel=1e-7)


# ---------------------------------------------------------------------------
# Holder estimation


def test_holder_identity_affine_zero(cantor):
    ident = parse_map("identity").bind(cantor)
    aff = parse_map("affine 3 1").bind(cantor)
    assert estimate_holder(ident, cantor, 1.0, samples=500) == 0.0
    assert estimate_holder(aff, cantor, 1.0, samples=500) == 0.0


def test_holder_exp_converges_below_sup(cantor):
    m = parse_map("exp", domain_box=np.array([[0.0, 1.0]]))
    est = estimate_holder(m, cantor, 1.0, samples=30_000, safety=1.5, seed=3)
    # sup |g''| on [0,1] is e; the sampled quotient approaches it from below
    assert est / 1.5 <= math.e + 1e-9
    assert est >= 0.8 * math.e
    assert est <= 1.5 * math.e + 1e-9


def test_holder_analytic_bound(cantor):
    m = parse_map("exp").bind(cantor)
    assert m.holder_constant() == pytest.approx(math.exp(1.5), rel=1e-12)
    dev = parse_map("devil_staircase").bind(cantor)
    assert dev.holder_constant() == pytest.approx(2.0 * LOG3_OVER_LOG2, rel=1e-12)


def test_holder_invalid_args(cantor):
    m = parse_map("exp").bind(cantor)
    with pytest.raises(ConfigError):
        estimate_holder(m, cantor, 0.0)
    with pytest.raises(ConfigError):
        estimate_holder(m, cantor, 1.0, safety=0.5)
