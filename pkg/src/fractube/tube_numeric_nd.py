"""Brute-force tube volume estimators in any dimension.

These are the independent oracles the closed forms are checked against.
Certified point-to-set distances come from two engines:

* a per-point best-first branch and bound over cylinder hull boxes,
* a batched engine against a deterministic point cloud of depth-m code
  points, whose covering radius r_max^m * diam(hull) is a rigorous bound.

Grid estimates carry rigorous lower/upper brackets; Monte-Carlo uses a
counter-based generator keyed by (seed, chunk index) so results are
bit-identical for a fixed seed at any thread count.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, ResourceLimitError
from .ifs_core import IfsSpec

MEMBERSHIP_TOL_FACTOR = 1e-3
DEFAULT_CLOUD_CAP = 4_000_000
DEFAULT_GRID_CELL_CAP = 50_000_000
MC_CHUNK = 262_144


@dataclass(frozen=True)
class TubeEstimate:
    """A tube volume estimate with its uncertainty.

    For the grid method [lower, upper] is a rigorous bracket and value its
    midpoint; for Monte-Carlo ci_half_width is the 95% normal-approximation
    half width; the exact engines report ci_half_width 0.
    """

    eps: float
    value: float
    ci_half_width: float
    method: str
    seed: int | None = None
    lower: float | None = None
    upper: float | None = None

    def csv_row(self) -> str:
        seed = "" if self.seed is None else str(self.seed)
        return f"{self.eps:.12g},{self.value:.12g},{self.ci_half_width:.12g},{self.method},{seed}"


CSV_HEADER = "eps,value,ci_half_width,method,seed"


# ---------------------------------------------------------------------------
# point clouds


class PointCloud:
    """A finite point set P inside a compact set S with covering radius r:
    every point of S is within r of P and P is a subset of S (up to the
    stated placement slack).  Distances to S are then certified by
    d(x, P) - r <= d(x, S) <= d(x, P)."""

    def __init__(self, points: np.ndarray, radius: float, box: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        self.radius = float(radius)
        self.box = np.asarray(box, dtype=float)
        self.dim = pts.shape[1]
        if self.dim == 1:
            self._sorted = np.sort(pts[:, 0])
            self._tree = None
        else:
            self._sorted = None
            self._tree = cKDTree(pts)

    def cloud_distances(self, queries: np.ndarray) -> np.ndarray:
        q = np.asarray(queries, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        if self.dim == 1:
            xs = q[:, 0]
            idx = np.searchsorted(self._sorted, xs)
            left = np.where(idx > 0, np.abs(xs - self._sorted[np.maximum(idx - 1, 0)]), np.inf)
            right = np.where(
                idx < len(self._sorted),
                np.abs(self._sorted[np.minimum(idx, len(self._sorted) - 1)] - xs),
                np.inf,
            )
            return np.minimum(left, right)
        dist, _ = self._tree.query(q, k=1)
        return np.asarray(dist)

    def distance_intervals(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self.cloud_distances(queries)
        return np.maximum(d - self.radius, 0.0), d


def attractor_cloud(
    ifs: IfsSpec, tol: float, cap: int = DEFAULT_CLOUD_CAP
) -> PointCloud:
    """Deterministic depth-m code point cloud with covering radius <= tol.

    Seeded with every map's fixed point, so the extreme points of 1-D
    attractors belong to the cloud exactly.
    """
    if tol <= 0.0:
        raise ConfigError("cloud tolerance must be positive")
    diam = ifs.diameter()
    depth = max(1, math.ceil(math.log(tol / diam) / math.log(ifs.r_max)))
    n = ifs.n_maps
    if n ** (depth + 1) > cap:
        raise ResourceLimitError("cloud_points", cap)
    pts = np.asarray([m.fixed_point() for m in ifs.maps])
    for _ in range(depth):
        pts = np.concatenate([m.apply(pts) for m in ifs.maps], axis=0)
    radius = ifs.r_max ** depth * diam
    return PointCloud(pts, radius, ifs.hull)


# ---------------------------------------------------------------------------
# certified per-point distance


def distance_to_attractor(
    ifs: IfsSpec, x: np.ndarray, tol: float
) -> tuple[float, float]:
    """Certified enclosure of d(x, K) with width <= tol.

    Best-first branch and bound over cylinder hull boxes; cylinders whose
    box distance exceeds the current upper bound are pruned.
    """
    if tol <= 0.0:
        raise ConfigError("tol must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    anchors = np.asarray([m.fixed_point() for m in ifs.maps])
    diam = ifs.diameter()

    def box_dist(box: np.ndarray) -> float:
        gap = np.maximum(box[:, 0] - x, x - box[:, 1])
        return float(np.linalg.norm(np.maximum(gap, 0.0)))

    ub = float(np.min(np.linalg.norm(anchors - x, axis=1)))
    heap: list = [(box_dist(ifs.hull), 0, ())]
    counter = 1
    while heap:
        lb, _, letters = heapq.heappop(heap)
        if lb >= ub - tol * 0.5:
            return min(lb, ub), ub
        r_w = math.prod(ifs.ratios[v - 1] for v in letters)
        if r_w * diam <= tol * 0.5:
            # cylinder smaller than the tolerance; its anchor settles it
            sim = ifs.word_map(letters)
            ub = min(ub, float(np.linalg.norm(sim.apply(anchors[0]) - x)))
            continue
        for i in range(1, ifs.n_maps + 1):
            child = letters + (i,)
            box = ifs.cylinder_box(child)
            d = box_dist(box)
            if d < ub:
                sim = ifs.word_map(child)
                pts = sim.apply(anchors)
                ub = min(ub, float(np.min(np.linalg.norm(pts - x, axis=1))))
                heapq.heappush(heap, (d, counter, child))
                counter += 1
    # every branch was pruned at >= ub or settled within tol/2 of ub
    return max(ub - tol * 0.5, 0.0), ub


# ---------------------------------------------------------------------------
# grid bracket


def _grid_centers(
    box: np.ndarray, resolution: int, cap: int
) -> tuple[np.ndarray, float, float]:
    d = box.shape[0]
    if resolution < 2:
        raise ConfigError("resolution must be >= 2 cells per axis")
    if resolution ** d > cap:
        raise ResourceLimitError("grid_cells", cap)
    axes = []
    sides = []
    for k in range(d):
        edges = np.linspace(box[k, 0], box[k, 1], resolution + 1)
        axes.append(0.5 * (edges[:-1] + edges[1:]))
        sides.append(edges[1] - edges[0])
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.reshape(-1) for m in mesh], axis=1)
    cell_vol = math.prod(sides)
    cell_rad = 0.5 * math.sqrt(sum(s * s for s in sides))
    return centers, cell_vol, cell_rad


def grid_bracket(cloud: PointCloud, eps: float, resolution: int,
                 cap: int = DEFAULT_GRID_CELL_CAP) -> TubeEstimate:
    """Rigorous [lower, upper] bracket of the tube volume of the cloud's
    underlying set, from cells certified inside / possibly intersecting."""
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    box = np.stack([cloud.box[:, 0] - eps, cloud.box[:, 1] + eps], axis=1)
    centers, cell_vol, cell_rad = _grid_centers(box, resolution, cap)
    d_lo, d_hi = cloud.distance_intervals(centers)
    inside = int(np.sum(d_hi + cell_rad <= eps))
    maybe = int(np.sum(d_lo - cell_rad <= eps))
    lower = inside * cell_vol
    upper = maybe * cell_vol
    return TubeEstimate(
        eps=eps,
        value=0.5 * (lower + upper),
        ci_half_width=0.5 * (upper - lower),
        method="grid",
        lower=lower,
        upper=upper,
    )


def tube_volume_grid(
    ifs: IfsSpec,
    eps: float,
    resolution: int,
    cloud: PointCloud | None = None,
) -> TubeEstimate:
    """Grid bracket of lambda(K_eps); the bracket always contains it."""
    if cloud is None:
        cloud = attractor_cloud(ifs, MEMBERSHIP_TOL_FACTOR * eps)
    return grid_bracket(cloud, eps, resolution)


# ---------------------------------------------------------------------------
# Monte-Carlo


def _mc_chunk_counts(cloud: PointCloud, eps: float, box: np.ndarray,
                     seed: int, index: int, size: int) -> tuple[int, int]:
    bitgen = np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    rng = np.random.Generator(bitgen)
    pts = rng.uniform(box[:, 0], box[:, 1], size=(size, box.shape[0]))
    d_lo, d_hi = cloud.distance_intervals(pts)
    # ambiguous points count as inside for the upper tally, outside for the
    # lower, so the true hit count is bracketed
    return int(np.sum(d_hi <= eps)), int(np.sum(d_lo <= eps))


def mc_estimate(
    cloud: PointCloud,
    eps: float,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> TubeEstimate:
    if n_samples < 100:
        raise ConfigError("need at least 100 samples")
    box = np.stack([cloud.box[:, 0] - eps, cloud.box[:, 1] + eps], axis=1)
    vol_box = float(np.prod(box[:, 1] - box[:, 0]))
    chunks = [
        (i, min(MC_CHUNK, n_samples - i * MC_CHUNK))
        for i in range((n_samples + MC_CHUNK - 1) // MC_CHUNK)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(
                pool.map(
                    lambda c: _mc_chunk_counts(cloud, eps, box, seed, c[0], c[1]),
                    chunks,
                )
            )
    else:
        counts = [_mc_chunk_counts(cloud, eps, box, seed, i, sz) for i, sz in chunks]
    hits_lo = sum(c[0] for c in counts)
    hits_hi = sum(c[1] for c in counts)
    p = 0.5 * (hits_lo + hits_hi) / n_samples
    value = vol_box * p
    ci = 1.96 * vol_box * math.sqrt(max(p * (1.0 - p), 0.0) / n_samples)
    ci += 0.5 * vol_box * (hits_hi - hits_lo) / n_samples
    return TubeEstimate(
        eps=eps, value=value, ci_half_width=ci, method="mc", seed=seed
    )


def tube_volume_mc(
    ifs: IfsSpec,
    eps: float,
    n_samples: int,
    seed: int,
    cloud: PointCloud | None = None,
    threads: int = 1,
) -> TubeEstimate:
    """Unbiased Monte-Carlo estimate of lambda(K_eps) over the padded hull."""
    if cloud is None:
        cloud = attractor_cloud(ifs, MEMBERSHIP_TOL_FACTOR * eps)
    return mc_estimate(cloud, eps, n_samples, seed, threads=threads)


def estimates_to_csv(estimates: Iterable[TubeEstimate]) -> str:
    lines = [CSV_HEADER]
    lines.extend(e.csv_row() for e in estimates)
    return "\n".join(lines) + "\n"
