"""Iterated function systems of contracting similarities.

Houses the system description (maps, hull, separation constant kappa),
the finite-word combinatorics (stopping partitions, code points), the
Moran dimension solver and the lattice / nonlattice classifier.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ResourceLimitError, SscViolationError

ORTHO_TOL = 1e-12
MORAN_TOL = 1e-13
DEFAULT_LATTICE_TOL = 1e-9
DEFAULT_CF_DEPTH = 50
DEFAULT_WORD_CAP = 10_000_000


# ---------------------------------------------------------------------------
# similarities and systems


@dataclass(frozen=True, eq=False)
class Similarity:
    """A contracting similarity x -> ratio * Q x + t with Q orthogonal."""

    ratio: float
    rotation: np.ndarray
    translation: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError(f"ratio must lie in (0,1), got {self.ratio}")
        q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        d = int(self.ambient_dim)
        if q.shape != (d, d) or t.shape != (d,):
            raise ConfigError("rotation/translation shape does not match ambient_dim")
        if np.max(np.abs(q.T @ q - np.eye(d))) > ORTHO_TOL:
            raise ConfigError("rotation matrix is not orthogonal within 1e-12")
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "ambient_dim", d)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply the map to one point (d,) or a batch (..., d)."""
        pts = np.asarray(points, dtype=float)
        return self.ratio * (pts @ self.rotation.T) + self.translation

    def fixed_point(self) -> np.ndarray:
        d = self.ambient_dim
        return np.linalg.solve(np.eye(d) - self.ratio * self.rotation, self.translation)

    def compose(self, other: "Similarity") -> "Similarity":
        """self o other as a single similarity."""
        return Similarity(
            ratio=self.ratio * other.ratio,
            rotation=self.rotation @ other.rotation,
            translation=self.ratio * (self.rotation @ other.translation) + self.translation,
            ambient_dim=self.ambient_dim,
        )


def similarity_1d(ratio: float, offset: float, reflect: bool = False) -> Similarity:
    """Convenience constructor for x -> ratio*x + offset on the line."""
    q = np.array([[-1.0 if reflect else 1.0]])
    return Similarity(ratio, q, np.array([float(offset)]), 1)


@dataclass(frozen=True, eq=False)
class IfsSpec:
    """An IFS with an invariant-enclosing axis-aligned hull box.

    hull has shape (d, 2) with hull[:,0] the lower and hull[:,1] the upper
    corners.  kappa, when set, is a certified enclosure of half the minimal
    distance between first-level pieces.
    """

    maps: tuple[Similarity, ...]
    hull: np.ndarray
    kappa: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.maps) < 2:
            raise ConfigError("an IFS needs at least two maps")
        d = self.maps[0].ambient_dim
        if any(m.ambient_dim != d for m in self.maps):
            raise ConfigError("all maps must share the ambient dimension")
        hull = np.asarray(self.hull, dtype=float)
        if hull.shape != (d, 2) or np.any(hull[:, 0] > hull[:, 1]):
            raise ConfigError("hull must have shape (d,2) with lo <= hi")
        hull.flags.writeable = False
        object.__setattr__(self, "hull", hull)
        object.__setattr__(self, "maps", tuple(self.maps))
        _check_hull_invariance(self.maps, hull)

    # -- basic accessors ----------------------------------------------------
    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @property
    def ambient_dim(self) -> int:
        return self.maps[0].ambient_dim

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(m.ratio for m in self.maps)

    @property
    def r_min(self) -> float:
        return min(self.ratios)

    @property
    def r_max(self) -> float:
        return max(self.ratios)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.hull[:, 1] - self.hull[:, 0]))

    def dimension(self) -> float:
        """Moran exponent of the ratio list, checked against ambient_dim."""
        return moran_dimension(self.ratios, max_dim=self.ambient_dim)

    def interval_hull(self) -> tuple[float, float]:
        if self.ambient_dim != 1:
            raise ConfigError("interval hull only defined for 1-D systems")
        return float(self.hull[0, 0]), float(self.hull[0, 1])

    def word_map(self, letters: Sequence[int]) -> Similarity:
        """Composition phi_w = phi_{w1} o ... o phi_{wn}.

        The empty word gives the identity, returned without the ratio < 1
        validation so it can be applied like any other affine map.
        """
        d = self.ambient_dim
        q, r, t = np.eye(d), 1.0, np.zeros(d)
        for letter in letters:
            m = self.maps[letter - 1]
            t = r * (q @ m.translation) + t
            q = q @ m.rotation
            r = r * m.ratio
        out = object.__new__(Similarity)
        q = np.asarray(q, dtype=float)
        t = np.asarray(t, dtype=float)
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(out, "ratio", r)
        object.__setattr__(out, "rotation", q)
        object.__setattr__(out, "translation", t)
        object.__setattr__(out, "ambient_dim", d)
        return out

    def cylinder_box(self, letters: Sequence[int]) -> np.ndarray:
        """Axis-aligned enclosure of phi_w(hull), shape (d,2)."""
        sim = self.word_map(letters)
        center = 0.5 * (self.hull[:, 0] + self.hull[:, 1])
        half = 0.5 * (self.hull[:, 1] - self.hull[:, 0])
        c = sim.apply(center)
        h = sim.ratio * (np.abs(sim.rotation) @ half)
        return np.stack([c - h, c + h], axis=1)

    def scaled(self, factor: float) -> "IfsSpec":
        """The image system c*K: conjugate every map by x -> c x."""
        if factor <= 0:
            raise ConfigError("scale factor must be positive")
        maps = tuple(
            Similarity(m.ratio, m.rotation, factor * m.translation, m.ambient_dim)
            for m in self.maps
        )
        return IfsSpec(maps=maps, hull=self.hull * factor, kappa=None)


def _check_hull_invariance(maps: tuple[Similarity, ...], hull: np.ndarray) -> None:
    center = 0.5 * (hull[:, 0] + hull[:, 1])
    half = 0.5 * (hull[:, 1] - hull[:, 0])
    tol = 1e-9 * max(np.max(2 * half), 1.0)
    for i, m in enumerate(maps):
        c = m.apply(center)
        h = m.ratio * (np.abs(m.rotation) @ half)
        if np.any(c - h < hull[:, 0] - tol) or np.any(c + h > hull[:, 1] + tol):
            raise ConfigError(f"hull is not invariant under map {i + 1}")


def _auto_hull(maps: Sequence[Similarity]) -> np.ndarray:
    """Invariant bounding box found by iterating the box enclosure map."""
    d = maps[0].ambient_dim
    r_max = max(m.ratio for m in maps)
    if r_max * math.sqrt(d) >= 1.0 and d > 1:
        if any(np.max(np.abs(m.rotation - np.eye(d))) > ORTHO_TOL for m in maps):
            raise ConfigError(
                "cannot certify an invariant hull for rotated maps with "
                "r_max*sqrt(d) >= 1; supply a hull explicitly"
            )
    p = maps[0].fixed_point()
    radius = max(float(np.linalg.norm(m.apply(p) - p)) for m in maps)
    radius = radius / (1.0 - r_max) + 1.0
    lo = p - radius
    hi = p + radius
    for _ in range(600):
        new_lo = np.full(d, np.inf)
        new_hi = np.full(d, -np.inf)
        c = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        for m in maps:
            mc = m.apply(c)
            mh = m.ratio * (np.abs(m.rotation) @ h)
            new_lo = np.minimum(new_lo, mc - mh)
            new_hi = np.maximum(new_hi, mc + mh)
        if np.allclose(new_lo, lo, rtol=0, atol=0) and np.allclose(new_hi, hi, rtol=0, atol=0):
            break
        lo, hi = new_lo, new_hi
    return np.stack([lo, hi], axis=1)


def from_similarities(maps: Sequence[Similarity], hull: np.ndarray | None = None) -> IfsSpec:
    """Build an IfsSpec, computing an invariant hull when none is given."""
    maps = tuple(maps)
    if hull is None:
        hull = _auto_hull(maps)
    return IfsSpec(maps=maps, hull=np.asarray(hull, dtype=float))


def tight_interval_hull(ifs: IfsSpec) -> tuple[float, float]:
    """Convex hull [min K, max K] of a 1-D attractor.

    The supplied hull only needs to be invariant; this iterates the
    interval enclosure map to its fixed point, which is the tight hull.
    """
    a, b = ifs.interval_hull()
    for _ in range(400):
        lo, hi = math.inf, -math.inf
        for m in ifs.maps:
            x = float(m.apply(np.array([a]))[0])
            y = float(m.apply(np.array([b]))[0])
            lo = min(lo, x, y)
            hi = max(hi, x, y)
        if lo == a and hi == b:
            break
        a, b = lo, hi
    return a, b


# -- JSON ingestion ---------------------------------------------------------

_IFS_KEYS = {"dim", "maps"}
_MAP_KEYS = {"ratio", "rotation", "translation"}


def ifs_from_json(obj: dict) -> IfsSpec:
    """Ingest the normative JSON document {"dim": d, "maps": [...]}.

    rotation omitted means identity; unknown fields are rejected.
    """
    if not isinstance(obj, dict):
        raise ConfigError("IFS document must be a JSON object")
    unknown = set(obj) - _IFS_KEYS
    if unknown:
        raise ConfigError(f"unknown IFS fields: {sorted(unknown)}")
    if "dim" not in obj or "maps" not in obj:
        raise ConfigError("IFS document needs 'dim' and 'maps'")
    d = obj["dim"]
    if not isinstance(d, int) or d < 1:
        raise ConfigError("'dim' must be a positive integer")
    maps = []
    for k, entry in enumerate(obj["maps"]):
        if not isinstance(entry, dict):
            raise ConfigError(f"map {k} must be an object")
        unknown = set(entry) - _MAP_KEYS
        if unknown:
            raise ConfigError(f"map {k}: unknown fields {sorted(unknown)}")
        if "ratio" not in entry or "translation" not in entry:
            raise ConfigError(f"map {k} needs 'ratio' and 'translation'")
        rot = np.asarray(entry.get("rotation", np.eye(d)), dtype=float)
        maps.append(
            Similarity(
                ratio=float(entry["ratio"]),
                rotation=rot,
                translation=np.asarray(entry["translation"], dtype=float),
                ambient_dim=d,
            )
        )
    return from_similarities(maps)


def ifs_to_json(ifs: IfsSpec) -> dict:
    return {
        "dim": ifs.ambient_dim,
        "maps": [
            {
                "ratio": m.ratio,
                "rotation": m.rotation.tolist(),
                "translation": m.translation.tolist(),
            }
            for m in ifs.maps
        ],
    }


# ---------------------------------------------------------------------------
# words


@dataclass(frozen=True)
class Word:
    """A finite word over {1,..,N} with its contraction ratio."""

    letters: tuple[int, ...]
    ratio: float

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(v) for v in self.letters))

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        if not self.letters:
            return "-"
        if max(self.letters) <= 9:
            return "".join(str(v) for v in self.letters)
        return ".".join(str(v) for v in self.letters)

    @staticmethod
    def from_letters(letters: Iterable[int], ratios: Sequence[float]) -> "Word":
        letters = tuple(int(v) for v in letters)
        if any(not 1 <= v <= len(ratios) for v in letters):
            raise ConfigError(f"letters out of alphabet range 1..{len(ratios)}")
        return Word(letters, math.prod(ratios[v - 1] for v in letters))

    @staticmethod
    def parse(text: str, ratios: Sequence[float]) -> "Word":
        text = text.strip()
        if text in ("", "-"):
            return Word((), 1.0)
        parts = text.split(".") if "." in text else list(text)
        try:
            letters = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"cannot parse word {text!r}") from exc
        return Word.from_letters(letters, ratios)


EMPTY_WORD = Word((), 1.0)


# ---------------------------------------------------------------------------
# Moran dimension


def moran_dimension(ratios: Sequence[float], max_dim: int | None = None) -> float:
    """Unique exponent s with sum(r_i^s) = 1, residual below 1e-13.

    Bisection bracketing with Newton refinement; s -> sum r_i^s is strictly
    decreasing so the root is unique.
    """
    r = [float(v) for v in ratios]
    if len(r) < 2:
        raise ConfigError("need at least two ratios")
    if any(not 0.0 < v < 1.0 for v in r):
        raise ConfigError("ratios must lie in (0,1)")
    ln_r = [math.log(v) for v in r]

    def f(s: float) -> float:
        return math.fsum(math.exp(s * lr) for lr in ln_r) - 1.0

    def fprime(s: float) -> float:
        return math.fsum(lr * math.exp(s * lr) for lr in ln_r)

    hi = 1.0
    for _ in range(80):
        if f(hi) <= 0.0:
            break
        hi *= 2.0
    else:  # pragma: no cover - ratios in (0,1) always bracket
        raise NumericError("failed to bracket the Moran exponent")
    lo = 0.0
    s = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        s = 0.5 * (lo + hi)
        # Newton polish once the bracket is tight; run to machine level
        if hi - lo < 1e-6:
            for _ in range(10):
                fs = f(s)
                if abs(fs) <= 1e-16:
                    break
                s_new = s - fs / fprime(s)
                if not lo <= s_new <= hi or s_new == s:
                    break
                s = s_new
            if abs(f(s)) <= MORAN_TOL:
                break
    if abs(f(s)) > MORAN_TOL:  # pragma: no cover - bisection guarantees this
        raise NumericError(f"Moran solver residual {f(s):.3e} above tolerance")
    if max_dim is not None and s > max_dim + 1e-9:
        raise ConfigError(
            f"Moran exponent {s:.6f} exceeds the ambient dimension {max_dim}; "
            "no OSC arrangement exists for these ratios"
        )
    return s


def entropy_term(ratios: Sequence[float], delta: float) -> float:
    """-sum r_i^delta ln r_i; times delta this is the shift entropy of the
    weight distribution (r_1^delta, ..., r_N^delta)."""
    val = -math.fsum(v ** delta * math.log(v) for v in ratios)
    if val <= 0.0:  # pragma: no cover - impossible for ratios in (0,1)
        raise NumericError("entropy prefactor must be positive")
    return val


# ---------------------------------------------------------------------------
# lattice / nonlattice classification


@dataclass(frozen=True)
class LatticeType:
    """Classification verdict with explicit confidence depth.

    kind is one of "lattice", "nonlattice", "undecided".  For the lattice
    case h > 0 is the maximal common spacing of the log-ratios.
    """

    kind: str
    h: float | None = None
    depth: int = 0

    @property
    def is_lattice(self) -> bool:
        return self.kind == "lattice"


def _best_small_rational(theta: float, tol: float, q_cap: int):
    """Smallest-denominator convergent p/q with q <= q_cap approximating
    theta within tol, or None.  Convergents are optimal approximants, so
    scanning them suffices."""
    tol = max(tol, 1e-13)
    p_prev, q_prev = 1, 0
    p_cur, q_cur = int(math.floor(theta)), 1
    x = theta - math.floor(theta)
    for _ in range(64):
        if q_cur > q_cap:
            return None
        if abs(theta - p_cur / q_cur) <= tol:
            return p_cur, q_cur
        if x < 1e-15:
            return None
        x = 1.0 / x
        a = int(math.floor(x))
        x -= a
        p_prev, p_cur = p_cur, a * p_cur + p_prev
        q_prev, q_cur = q_cur, a * q_cur + q_prev
    return None


def classify_lattice(
    ratios: Sequence[float],
    tol: float = DEFAULT_LATTICE_TOL,
    max_depth: int = DEFAULT_CF_DEPTH,
) -> LatticeType:
    """Lattice/nonlattice verdict for the log-ratio set.

    Each ln r_i / ln r_1 is tested for a rational approximation with
    denominator at most max_depth; no hit for some i means nonlattice at
    that depth.  Hits give the candidate spacing h = -ln r_1 / lcm(q_i),
    maximal because the p_i/q_i are in lowest terms; the verdict is
    lattice only if every ln r_i / h sits within tol of an integer.
    Floating-point rationality is undecidable, so verdicts carry the
    search depth.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    if max_depth < 1:
        raise ConfigError("max_depth must be >= 1")
    xs = [-math.log(float(v)) for v in ratios]
    x1 = xs[0]
    denominators = []
    for x in xs:
        theta = x / x1
        hit = _best_small_rational(theta, 2.0 * tol * theta, max_depth)
        if hit is None:
            return LatticeType("nonlattice", None, depth=max_depth)
        denominators.append(hit[1])
    lcm = 1
    for q in denominators:
        lcm = lcm * q // math.gcd(lcm, q)
    h = x1 / lcm
    for x in xs:
        m = x / h
        if abs(m - round(m)) > tol * max(1.0, abs(m)):
            return LatticeType("undecided", None, depth=max_depth)
    return LatticeType("lattice", h, depth=max_depth)


# ---------------------------------------------------------------------------
# separation constant kappa


def _box_distance(box_a: np.ndarray, box_b: np.ndarray) -> float:
    gap = np.maximum(box_a[:, 0] - box_b[:, 1], box_b[:, 0] - box_a[:, 1])
    return float(np.linalg.norm(np.maximum(gap, 0.0)))


def compute_kappa(ifs: IfsSpec, depth: int = 10) -> tuple[float, float]:
    """Certified enclosure of kappa = min_{i != j} d(phi_i K, phi_j K) / 2.

    Best-first branch and bound over pairs of cylinder boxes: box distances
    give the lower bound, distances between in-set anchor points the upper.
    Raises SscViolationError when no positive lower bound is certified at
    the requested depth.
    """
    if depth < 1:
        raise ConfigError("depth must be >= 1")
    n = ifs.n_maps
    anchors = [m.fixed_point() for m in ifs.maps]
    if ifs.ambient_dim == 1:
        a, b = tight_interval_hull(ifs)
        # tight hull endpoints of a 1-D attractor always belong to it
        anchors = anchors + [np.array([a]), np.array([b])]
    anchors = np.asarray(anchors)

    def node(letters: tuple[int, ...]):
        box = ifs.cylinder_box(letters)
        sim = ifs.word_map(letters)
        pts = sim.apply(anchors)
        return box, pts

    heap: list = []
    ub = math.inf
    counter = 0
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            (box_i, pts_i), (box_j, pts_j) = node((i,)), node((j,))
            lb = _box_distance(box_i, box_j)
            d2 = np.linalg.norm(pts_i[:, None, :] - pts_j[None, :, :], axis=-1)
            ub = min(ub, float(d2.min()))
            heapq.heappush(heap, (lb, counter, (i,), (j,)))
            counter += 1
    diam = ifs.diameter()
    tol = 1e-12 * max(diam, 1.0)
    lb_final = 0.0
    while heap:
        lb, _, wa, wb = heapq.heappop(heap)
        lb_final = lb
        if ub - lb <= tol or lb > ub:
            lb_final = min(lb, ub)
            break
        if len(wa) >= depth and len(wb) >= depth:
            break
        # split the word owning the larger cylinder
        ra = math.prod(ifs.ratios[v - 1] for v in wa)
        rb = math.prod(ifs.ratios[v - 1] for v in wb)
        if (ra >= rb and len(wa) < depth) or len(wb) >= depth:
            parents = [(wa + (k,), wb) for k in range(1, n + 1)]
        else:
            parents = [(wa, wb + (k,)) for k in range(1, n + 1)]
        for new_a, new_b in parents:
            (box_a, pts_a), (box_b, pts_b) = node(new_a), node(new_b)
            child_lb = max(lb, _box_distance(box_a, box_b))
            d2 = np.linalg.norm(pts_a[:, None, :] - pts_b[None, :, :], axis=-1)
            ub = min(ub, float(d2.min()))
            heapq.heappush(heap, (child_lb, counter, new_a, new_b))
            counter += 1
    kappa_lo, kappa_hi = lb_final / 2.0, ub / 2.0
    if kappa_lo <= 0.0:
        raise SscViolationError(
            f"SSC violation: pieces are not separated (kappa_hi = {kappa_hi:.3e} "
            f"at depth {depth})",
            kappa_hi=kappa_hi,
        )
    return kappa_lo, kappa_hi


# ---------------------------------------------------------------------------
# stopping partitions and code points


def stopping_words(
    ifs: IfsSpec, b: float, max_words: int = DEFAULT_WORD_CAP
) -> list[Word]:
    """Maximal prefix-free word set with r_w <= b < r_{parent}.

    For b >= 1 the convention is to return the single letters (the empty
    word has r = 1 and thresholds above 1 never occur downstream).
    """
    if not 0.0 < b:
        raise ConfigError("threshold b must be positive")
    ratios = ifs.ratios
    n = ifs.n_maps
    if b >= 1.0:
        return [Word((i,), ratios[i - 1]) for i in range(1, n + 1)]
    out: list[Word] = []
    stack: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
    while stack:
        letters, r = stack.pop()
        for i in range(n, 0, -1):
            child = letters + (i,)
            cr = r * ratios[i - 1]
            if cr <= b:
                out.append(Word(child, cr))
                if len(out) > max_words:
                    raise ResourceLimitError("max_words", max_words)
            else:
                stack.append((child, cr))
    out.sort(key=lambda w: w.letters)
    return out


def code_point(ifs: IfsSpec, word: Word, tol: float) -> tuple[np.ndarray, float]:
    """Point of K coded by the word repeated periodically.

    Returns the center of phi_w(hull) for the internally extended word,
    with certified radius r_w * diam(hull) <= tol.
    """
    if not word.letters:
        raise ConfigError("code_point needs a nonempty word")
    if tol <= 0:
        raise ConfigError("tol must be positive")
    diam = ifs.diameter()
    letters = list(word.letters)
    r = word.ratio
    while r * diam > tol:
        letters.extend(word.letters)
        r *= word.ratio
        if len(letters) > 100_000:
            break
    box = ifs.cylinder_box(letters)
    center = 0.5 * (box[:, 0] + box[:, 1])
    radius = r * diam
    return center, radius
