import math

import numpy as np
import pytest

from conftest import random_ssc_system
from fractube.errors import ConfigError, ResourceLimitError
from fractube.ifs_core import Word, code_point
from fractube.tube_exact_1d import tube_volume_exact
from fractube.tube_numeric_nd import (
    CSV_HEADER,
    attractor_cloud,
    distance_to_attractor,
    estimates_to_csv,
    mc_estimate,
    tube_volume_grid,
    tube_volume_mc,
)


# ---------------------------------------------------------------------------
# certified distances


def test_distance_cantor_center(cantor):
    lo, hi = distance_to_attractor(cantor, np.array([0.5]), 1e-9)
    # oracle: dense depth-10 code point set
    pts = np.array([0.0])
    for _ in range(10):
        pts = np.concatenate([pts / 3.0, pts / 3.0 + 2.0 / 3.0])
    oracle = np.min(np.abs(pts - 0.5))
    assert lo <= oracle + 1e-9
    assert hi >= oracle - (1 / 3) ** 10
    assert lo == pytest.approx(1 / 6, abs=1e-9)
    assert hi - lo <= 1e-9


def test_distance_outside_hull(cantor):
    lo, hi = distance_to_attractor(cantor, np.array([-1.0]), 1e-9)
    assert lo == pytest.approx(1.0, abs=1e-9)


def test_distance_at_code_point(cantor):
    pt, _ = code_point(cantor, Word.from_letters([1, 2, 2, 1], cantor.ratios), 1e-13)
    lo, hi = distance_to_attractor(cantor, pt, 1e-10)
    assert lo <= 1e-10
    assert hi <= 1e-9


def test_distance_2d(triangle):
    lo, hi = distance_to_attractor(triangle, np.array([0.5, 0.1]), 1e-8)
    assert hi - lo <= 1e-8
    assert lo > 0.0


# ---------------------------------------------------------------------------
# cloud engine


def test_cloud_radius_certificate(cantor):
    cloud = attractor_cloud(cantor, 1e-4)
    assert cloud.radius <= 1e-4
    # every cloud point is at distance ~0 from K
    for x in cloud.points[::97, 0]:
        lo, _ = distance_to_attractor(cantor, np.array([x]), 1e-10)
        assert lo <= 1e-10


def test_cloud_cap():
    rng = np.random.default_rng(0)
    ifs = random_ssc_system(rng)
    with pytest.raises(ResourceLimitError):
        attractor_cloud(ifs, 1e-12, cap=1000)


# ---------------------------------------------------------------------------
# grid brackets


def test_grid_bracket_contains_exact(cantor):
    est = tube_volume_grid(cantor, 1 / 6, 100_000)
    assert est.lower <= 4 / 3 <= est.upper
    assert est.method == "grid"


def test_grid_bracket_random_systems():
    rng = np.random.default_rng(21)
    for _ in range(6):
        ifs = random_ssc_system(rng)
        eps = float(rng.uniform(0.005, 0.2))
        exact = tube_volume_exact(ifs, eps)
        est = tube_volume_grid(ifs, eps, 40_000)
        assert est.lower <= exact <= est.upper


def test_grid_monotone_in_eps(cantor):
    values = []
    for eps in (0.01, 0.02, 0.05, 0.1):
        est = tube_volume_grid(cantor, eps, 50_000)
        values.append((est.value, est.ci_half_width))
    for (v1, w1), (v2, w2) in zip(values, values[1:]):
        assert v2 >= v1 - (w1 + w2)


def test_grid_ball_lower_sanity(triangle):
    # any tube volume beats the volume of one eps-ball around a point of K
    eps = triangle.diameter()
    est = tube_volume_grid(triangle, eps, 128)
    assert est.upper >= math.pi * eps ** 2


def test_grid_memory_cap(cantor):
    with pytest.raises(ResourceLimitError):
        tube_volume_grid(cantor, 0.1, 10 ** 9)


# ---------------------------------------------------------------------------
# Monte-Carlo


def test_mc_within_ci_and_deterministic(cantor):
    est = tube_volume_mc(cantor, 1 / 6, 200_000, seed=11)
    assert abs(est.value - 4 / 3) <= est.ci_half_width + 1e-12
    est2 = tube_volume_mc(cantor, 1 / 6, 200_000, seed=11)
    assert est.value == est2.value and est.ci_half_width == est2.ci_half_width
    est3 = tube_volume_mc(cantor, 1 / 6, 200_000, seed=11, threads=4)
    assert est.value == est3.value


def test_mc_box_saturation(cantor):
    # eps so large that K_eps covers the sampling box entirely
    est = tube_volume_mc(cantor, 2.0, 1000, seed=5)
    assert est.value == pytest.approx(5.0, abs=1e-12)
    assert est.ci_half_width == pytest.approx(0.0, abs=1e-12)


def test_mc_coverage_seeded(cantor):
    exact = tube_volume_exact(cantor, 0.03)
    cloud = attractor_cloud(cantor, 1e-3 * 0.03)
    inside = sum(
        1
        for s in range(30)
        if abs(mc_estimate(cloud, 0.03, 30_000, seed=s).value - exact)
        <= mc_estimate(cloud, 0.03, 30_000, seed=s).ci_half_width
    )
    assert inside >= 25


def test_mc_minimum_samples(cantor):
    with pytest.raises(ConfigError):
        tube_volume_mc(cantor, 0.1, 10, seed=0)


def test_csv_emission(cantor):
    est = tube_volume_mc(cantor, 0.1, 1000, seed=2)
    csv = estimates_to_csv([est])
    lines = csv.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1].endswith(",mc,2")


# ---------------------------------------------------------------------------
# 2-D consistency


def test_triangle_grid_vs_mc(triangle):
    grid = tube_volume_grid(triangle, 1.0, 384)
    mc = tube_volume_mc(triangle, 1.0, 200_000, seed=9)
    lo = mc.value - mc.ci_half_width
    hi = mc.value + mc.ci_half_width
    assert lo <= grid.upper and grid.lower <= hi
