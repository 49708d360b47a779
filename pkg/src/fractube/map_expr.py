"""Conformal map expressions: parsing, exact evaluation, certified bounds.

Grammar (whitespace separated tokens):

    identity | affine a b | poly c0 c1 ... ck | exp | mobius a b c d |
    devil_staircase | complex_poly c0 c1 ... | complex_mobius a b c d

The 1-D kinds act on the line, the complex kinds on the plane (points are
(x, y) pairs, coefficients parsed as "a+bi").  Every kind evaluates g, the
derivative magnitude |g'|, a certified |g'| range over a box, and an
enclosure of the image of a box, which is what the distance engines prune
with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, MapDomainError, MapParseError
from .ifs_core import IfsSpec

LOG3_OVER_LOG2 = math.log(3.0) / math.log(2.0)
LOG2_OVER_LOG3 = math.log(2.0) / math.log(3.0)
_VANISH_SAMPLES = 10_000
DEFAULT_HOLDER_SAMPLES = 100_000
DEFAULT_HOLDER_SAFETY = 1.5


# ---------------------------------------------------------------------------
# Cantor function and the staircase integral


def cantor_function(x: float) -> float:
    """The Cantor function on [0,1], extended by 0 and 1 outside.

    Evaluated exactly from the ternary expansion; constant on gaps.
    """
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    y = 0.0
    p = 0.5
    for _ in range(80):
        x *= 3.0
        digit = math.floor(x)
        if digit == 1:
            return y + p
        if digit >= 2:
            y += p
            x -= 2.0
            if x <= 0.0:
                return y
        p *= 0.5
        if x <= 0.0:
            return y
    return y


class _StaircaseIntegral:
    """Certified evaluation of g(x) = int_0^x (f(y)+1)^(-beta) dy.

    f is the Cantor function and beta = ln3/ln2.  The integral over a
    complete level-l Cantor interval with f-offset c equals
    3^(-l) * J(1+c, 2^(-l)) where J(c,s) = int_0^1 (c + s f(u))^(-beta) du.
    J is evaluated through the self-similar recursion

        J(c,s) = (J(c,s/2) + (c+s/2)^(-beta) + J(c+s/2,s/2)) / 3

    switched to a moment series in s/c once s/c is small; both stages give
    two-sided bounds.  Descent along the ternary expansion of x terminates
    at CUTOFF levels with an endpoint-bounded remainder (the integrand is
    monotone in f).
    """

    CUTOFF = 40
    SERIES_THRESHOLD = 1.0 / 256.0
    N_MOMENTS = 40

    def __init__(self, beta: float = LOG3_OVER_LOG2):
        self.beta = beta
        self._memo: dict[tuple[float, float], tuple[float, float]] = {}
        self._moments = self._cantor_moments(self.N_MOMENTS)

    @staticmethod
    def _cantor_moments(n: int) -> np.ndarray:
        # m_k = int_0^1 f(u)^k du via the self-similar recursion
        m = np.zeros(n + 1)
        m[0] = 1.0
        binom = [[1]]
        for k in range(1, n + 1):
            row = [1] + [binom[-1][j - 1] + binom[-1][j] for j in range(1, k)] + [1]
            binom.append(row)
            acc = math.fsum(row[j] * m[j] for j in range(k))
            m[k] = (2.0 ** -k / 3.0) * (1.0 + acc) / (1.0 - (2.0 / 3.0) * 2.0 ** -k)
        return m

    def _series(self, c: float, s: float) -> tuple[float, float]:
        # J(c,s) = c^-beta * sum_k binom(-beta,k) (s/c)^k m_k, |s/c| small
        x = s / c
        beta = self.beta
        term = 1.0
        total = self._moments[0]
        k = 0
        while True:
            k += 1
            term *= -(beta + k - 1.0) / k * x
            contrib = term * self._moments[k]
            total += contrib
            ratio = (beta + k) / (k + 1.0) * x
            rem = abs(term) * self._moments[k] * ratio / (1.0 - ratio)
            if rem <= 1e-17 * abs(total) or k >= self.N_MOMENTS - 1:
                break
        scale = c ** -beta
        return scale * (total - rem), scale * (total + rem)

    def _j(self, c: float, s: float) -> tuple[float, float]:
        if s / c <= self.SERIES_THRESHOLD:
            return self._series(c, s)
        key = (c, s)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        lo1, hi1 = self._j(c, 0.5 * s)
        lo2, hi2 = self._j(c + 0.5 * s, 0.5 * s)
        mid = (c + 0.5 * s) ** -self.beta
        val = ((lo1 + mid + lo2) / 3.0, (hi1 + mid + hi2) / 3.0)
        self._memo[key] = val
        return val

    def integrand(self, x: float) -> float:
        return (cantor_function(x) + 1.0) ** -self.beta

    def g_enclosure(self, x: float) -> tuple[float, float]:
        """(lower, upper) bounds of g(x) for any real x."""
        if x <= 0.0:
            return (x, x)
        if x > 1.0:
            lo1, hi1 = self.g_enclosure(1.0)
            tail = (x - 1.0) * 2.0 ** -self.beta
            return (lo1 + tail, hi1 + tail)
        beta = self.beta
        acc_lo = 0.0
        acc_hi = 0.0
        a = 0.0
        foff = 0.0
        level = 0
        while level < self.CUTOFF:
            third = 3.0 ** -(level + 1)
            half_f = 2.0 ** -(level + 1)
            rel = x - a
            if rel <= 0.0:
                return (acc_lo, acc_hi)
            if rel <= third:
                level += 1
                continue
            jlo, jhi = self._j(1.0 + foff, half_f)
            left_lo, left_hi = third * jlo, third * jhi
            gap_height = (1.0 + foff + half_f) ** -beta
            if rel < 2.0 * third:
                part = (rel - third) * gap_height
                return (acc_lo + left_lo + part, acc_hi + left_hi + part)
            acc_lo += left_lo + third * gap_height
            acc_hi += left_hi + third * gap_height
            a += 2.0 * third
            foff += half_f
            level += 1
        rel = max(x - a, 0.0)
        h_hi = (1.0 + foff) ** -beta
        h_lo = (1.0 + foff + 2.0 ** -level) ** -beta
        return (acc_lo + rel * h_lo, acc_hi + rel * h_hi)

    def g(self, x: float) -> float:
        lo, hi = self.g_enclosure(x)
        return 0.5 * (lo + hi)


_STAIRCASE = _StaircaseIntegral()


# ---------------------------------------------------------------------------
# map kinds


class _Node:
    """Base evaluation node.  Subclasses are immutable."""

    dim = 1

    def eval(self, x):
        raise NotImplementedError

    def deriv_mag(self, x) -> float:
        raise NotImplementedError

    def deriv_mag_range(self, box: np.ndarray) -> tuple[float, float]:
        """Certified [min, max] of |g'| over an axis box (d,2)."""
        raise NotImplementedError

    def image_box(self, box: np.ndarray) -> np.ndarray:
        """Axis-box enclosure of g(box)."""
        raise NotImplementedError

    def second_deriv_bound(self, box: np.ndarray) -> float | None:
        """Upper bound of the Lipschitz constant of |g'| over the box,
        None when no analytic bound is available."""
        return None

    @property
    def constant_deriv(self) -> bool:
        return False


def _as_scalar(x) -> float:
    arr = np.asarray(x, dtype=float)
    if arr.shape not in ((), (1,)):
        raise ConfigError("expected a 1-D point")
    return float(arr.reshape(-1)[0]) if arr.shape else float(arr)


class _Affine(_Node):
    def __init__(self, a: float, b: float):
        if a == 0.0:
            raise MapDomainError("affine map needs a nonzero slope")
        self.a, self.b = float(a), float(b)

    def eval(self, x):
        return self.a * _as_scalar(x) + self.b

    def deriv_mag(self, x) -> float:
        return abs(self.a)

    def deriv_mag_range(self, box):
        return (abs(self.a), abs(self.a))

    def image_box(self, box):
        lo, hi = sorted((self.a * box[0, 0] + self.b, self.a * box[0, 1] + self.b))
        return np.array([[lo, hi]])

    def second_deriv_bound(self, box):
        return 0.0

    @property
    def constant_deriv(self) -> bool:
        return True


class _Poly(_Node):
    def __init__(self, coeffs: Sequence[float]):
        self.coeffs = np.asarray(coeffs, dtype=float)
        if len(self.coeffs) < 2 or np.all(self.coeffs[1:] == 0.0):
            raise MapDomainError("polynomial map must have positive degree")
        k = np.arange(1, len(self.coeffs))
        self.dcoeffs = self.coeffs[1:] * k
        if len(self.dcoeffs) > 1:
            kk = np.arange(1, len(self.dcoeffs))
            self.ddcoeffs = self.dcoeffs[1:] * kk
        else:
            self.ddcoeffs = np.zeros(1)

    def eval(self, x):
        return float(np.polyval(self.coeffs[::-1], _as_scalar(x)))

    def deriv_mag(self, x) -> float:
        return abs(float(np.polyval(self.dcoeffs[::-1], _as_scalar(x))))

    @staticmethod
    def _interval_poly(coeffs: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
        # interval Horner, refined by subdivision for tightness
        def horner(a: float, b: float) -> tuple[float, float]:
            vlo = vhi = float(coeffs[-1])
            for c in coeffs[-2::-1]:
                cands = (vlo * a, vlo * b, vhi * a, vhi * b)
                vlo, vhi = min(cands) + c, max(cands) + c
            return vlo, vhi

        pieces = np.linspace(lo, hi, 33)
        los, his = zip(*(horner(a, b) for a, b in zip(pieces[:-1], pieces[1:])))
        return min(los), max(his)

    def deriv_mag_range(self, box):
        lo, hi = self._interval_poly(self.dcoeffs, box[0, 0], box[0, 1])
        if lo <= 0.0 <= hi:
            # certified sign would have been checked at parse time; keep sound
            return (0.0, max(abs(lo), abs(hi)))
        return (min(abs(lo), abs(hi)), max(abs(lo), abs(hi)))

    def image_box(self, box):
        # derivative has a fixed sign on valid domains, so g is monotone
        va, vb = self.eval(box[0, 0]), self.eval(box[0, 1])
        lo, hi = sorted((va, vb))
        return np.array([[lo, hi]])

    def second_deriv_bound(self, box):
        lo, hi = self._interval_poly(self.ddcoeffs, box[0, 0], box[0, 1])
        return max(abs(lo), abs(hi))


class _Exp(_Node):
    def eval(self, x):
        return math.exp(_as_scalar(x))

    def deriv_mag(self, x) -> float:
        return math.exp(_as_scalar(x))

    def deriv_mag_range(self, box):
        return (math.exp(box[0, 0]), math.exp(box[0, 1]))

    def image_box(self, box):
        return np.array([[math.exp(box[0, 0]), math.exp(box[0, 1])]])

    def second_deriv_bound(self, box):
        return math.exp(box[0, 1])


class _Mobius(_Node):
    def __init__(self, a: float, b: float, c: float, d: float):
        self.a, self.b, self.c, self.d = (float(v) for v in (a, b, c, d))
        self.det = self.a * self.d - self.b * self.c
        if self.det == 0.0:
            raise MapDomainError("mobius map is degenerate (ad - bc = 0)")

    def _denom(self, x: float) -> float:
        return self.c * x + self.d

    def eval(self, x):
        x = _as_scalar(x)
        den = self._denom(x)
        if den == 0.0:
            raise MapDomainError("mobius pole hit")
        return (self.a * x + self.b) / den

    def deriv_mag(self, x) -> float:
        return abs(self.det) / self._denom(_as_scalar(x)) ** 2

    def _denom_range(self, lo: float, hi: float) -> tuple[float, float]:
        va, vb = self._denom(lo), self._denom(hi)
        if va * vb <= 0.0:
            raise MapDomainError("mobius pole inside the box")
        amin, amax = sorted((abs(va), abs(vb)))
        return amin, amax

    def deriv_mag_range(self, box):
        dmin, dmax = self._denom_range(box[0, 0], box[0, 1])
        return (abs(self.det) / dmax ** 2, abs(self.det) / dmin ** 2)

    def image_box(self, box):
        va, vb = self.eval(box[0, 0]), self.eval(box[0, 1])
        lo, hi = sorted((va, vb))
        return np.array([[lo, hi]])

    def second_deriv_bound(self, box):
        dmin, _ = self._denom_range(box[0, 0], box[0, 1])
        return 2.0 * abs(self.c) * abs(self.det) / dmin ** 3


class _DevilStaircase(_Node):
    """g(x) = int_0^x (f(y)+1)^(-ln3/ln2) dy with f the Cantor function.

    |g'| = (f+1)^(-beta) is exact; g itself carries a certified enclosure
    from the piecewise integration of the staircase.
    """

    beta = LOG3_OVER_LOG2

    def eval(self, x):
        return _STAIRCASE.g(_as_scalar(x))

    def eval_enclosure(self, x) -> tuple[float, float]:
        return _STAIRCASE.g_enclosure(_as_scalar(x))

    def deriv_mag(self, x) -> float:
        return (cantor_function(_as_scalar(x)) + 1.0) ** -self.beta

    def deriv_mag_range(self, box):
        # f nondecreasing, so |g'| is nonincreasing
        return (self.deriv_mag(box[0, 1]), self.deriv_mag(box[0, 0]))

    def image_box(self, box):
        lo, _ = _STAIRCASE.g_enclosure(box[0, 0])
        _, hi = _STAIRCASE.g_enclosure(box[0, 1])
        return np.array([[lo, hi]])


class _ComplexPoly(_Node):
    dim = 2

    def __init__(self, coeffs: Sequence[complex]):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        if len(self.coeffs) < 2 or np.all(self.coeffs[1:] == 0):
            raise MapDomainError("complex polynomial must have positive degree")
        k = np.arange(1, len(self.coeffs))
        self.dcoeffs = self.coeffs[1:] * k
        if len(self.dcoeffs) > 1:
            kk = np.arange(1, len(self.dcoeffs))
            self.ddcoeffs = self.dcoeffs[1:] * kk
        else:
            self.ddcoeffs = np.zeros(1, dtype=complex)

    @staticmethod
    def _z(x) -> complex:
        arr = np.asarray(x, dtype=float).reshape(-1)
        return complex(arr[0], arr[1])

    def eval(self, x):
        w = np.polyval(self.coeffs[::-1], self._z(x))
        return np.array([w.real, w.imag])

    def deriv_mag(self, x) -> float:
        return abs(np.polyval(self.dcoeffs[::-1], self._z(x)))

    def _abs_bound(self, coeffs: np.ndarray, radius: float) -> float:
        k = np.arange(len(coeffs))
        return float(np.sum(np.abs(coeffs) * radius ** k))

    def deriv_mag_range(self, box):
        center = complex(0.5 * (box[0, 0] + box[0, 1]), 0.5 * (box[1, 0] + box[1, 1]))
        rho = 0.5 * math.hypot(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0])
        base = abs(np.polyval(self.dcoeffs[::-1], center))
        lip = self._abs_bound(self.ddcoeffs, abs(center) + rho)
        return (max(base - lip * rho, 0.0), base + lip * rho)

    def image_box(self, box):
        center = complex(0.5 * (box[0, 0] + box[0, 1]), 0.5 * (box[1, 0] + box[1, 1]))
        rho = 0.5 * math.hypot(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0])
        w = np.polyval(self.coeffs[::-1], center)
        sup = self._abs_bound(self.dcoeffs, abs(center) + rho)
        r = sup * rho
        return np.array([[w.real - r, w.real + r], [w.imag - r, w.imag + r]])

    def second_deriv_bound(self, box):
        rho = 0.5 * math.hypot(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0])
        center = complex(0.5 * (box[0, 0] + box[0, 1]), 0.5 * (box[1, 0] + box[1, 1]))
        return self._abs_bound(self.ddcoeffs, abs(center) + rho)


class _ComplexMobius(_Node):
    dim = 2

    def __init__(self, a: complex, b: complex, c: complex, d: complex):
        self.a, self.b, self.c, self.d = (complex(v) for v in (a, b, c, d))
        self.det = self.a * self.d - self.b * self.c
        if self.det == 0:
            raise MapDomainError("complex mobius map is degenerate")

    @staticmethod
    def _z(x) -> complex:
        arr = np.asarray(x, dtype=float).reshape(-1)
        return complex(arr[0], arr[1])

    def eval(self, x):
        z = self._z(x)
        den = self.c * z + self.d
        if den == 0:
            raise MapDomainError("mobius pole hit")
        w = (self.a * z + self.b) / den
        return np.array([w.real, w.imag])

    def deriv_mag(self, x) -> float:
        z = self._z(x)
        return abs(self.det) / abs(self.c * z + self.d) ** 2

    def _pole_distance_range(self, box) -> tuple[float, float]:
        if self.c == 0:
            return (math.inf, math.inf)
        pole = -self.d / self.c
        px, py = pole.real, pole.imag
        dx_lo = max(box[0, 0] - px, px - box[0, 1], 0.0)
        dy_lo = max(box[1, 0] - py, py - box[1, 1], 0.0)
        near = math.hypot(dx_lo, dy_lo)
        dx_hi = max(abs(px - box[0, 0]), abs(px - box[0, 1]))
        dy_hi = max(abs(py - box[1, 0]), abs(py - box[1, 1]))
        far = math.hypot(dx_hi, dy_hi)
        if near == 0.0:
            raise MapDomainError("mobius pole inside the box")
        return near, far

    def deriv_mag_range(self, box):
        if self.c == 0:
            v = abs(self.a / self.d)
            return (v, v)
        near, far = self._pole_distance_range(box)
        ac2 = abs(self.c) ** 2
        return (abs(self.det) / (ac2 * far ** 2), abs(self.det) / (ac2 * near ** 2))

    def image_box(self, box):
        center = np.array(
            [0.5 * (box[0, 0] + box[0, 1]), 0.5 * (box[1, 0] + box[1, 1])]
        )
        rho = 0.5 * math.hypot(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0])
        w = self.eval(center)
        # |g'| on the rho-disk, bounded through the pole distance
        if self.c == 0:
            sup = abs(self.a / self.d)
        else:
            near, _ = self._pole_distance_range(box)
            shrunk = max(near - rho, near * 0.5)
            sup = abs(self.det) / (abs(self.c) ** 2 * shrunk ** 2)
        r = sup * rho
        return np.array([[w[0] - r, w[0] + r], [w[1] - r, w[1] + r]])

    def second_deriv_bound(self, box):
        if self.c == 0:
            return 0.0
        near, _ = self._pole_distance_range(box)
        return 2.0 * abs(self.det) / (abs(self.c) * near ** 3)

    @property
    def constant_deriv(self) -> bool:
        return self.c == 0


class _Identity(_Affine):
    def __init__(self):
        super().__init__(1.0, 0.0)


# ---------------------------------------------------------------------------
# the public map object


@dataclass(frozen=True, eq=False)
class ConformalMap:
    """A parsed map with Holder data and an optional bound domain box."""

    kind: str
    ast: _Node
    alpha: float
    holder_L: float | None = None
    domain_box: np.ndarray | None = None

    @property
    def ambient_dim(self) -> int:
        return self.ast.dim

    @property
    def constant_deriv(self) -> bool:
        return self.ast.constant_deriv

    def _check_domain(self, x) -> None:
        if self.domain_box is None:
            return
        pt = np.asarray(x, dtype=float).reshape(-1)
        slack = 1e-9 * max(1.0, float(np.max(np.abs(self.domain_box))))
        if np.any(pt < self.domain_box[:, 0] - slack) or np.any(
            pt > self.domain_box[:, 1] + slack
        ):
            raise MapDomainError(f"point {pt} outside the map domain box")

    def eval(self, x):
        self._check_domain(x)
        return self.ast.eval(x)

    def deriv_mag(self, x) -> float:
        self._check_domain(x)
        return self.ast.deriv_mag(x)

    def deriv_mag_range(self, box: np.ndarray) -> tuple[float, float]:
        return self.ast.deriv_mag_range(np.asarray(box, dtype=float))

    def image_box(self, box: np.ndarray) -> np.ndarray:
        return self.ast.image_box(np.asarray(box, dtype=float))

    def holder_constant(self, box: np.ndarray | None = None) -> float:
        """Certified (or stored) Holder constant of |g'| on the box."""
        if self.holder_L is not None:
            return self.holder_L
        box = self.domain_box if box is None else box
        if box is None:
            raise ConfigError("holder_constant needs a domain box")
        if self.kind == "devil_staircase":
            # |(f+1)^-b - ...| <= b * |f(x)-f(y)| and |f(x)-f(y)| <= 2|x-y|^a
            return 2.0 * LOG3_OVER_LOG2
        bound = self.ast.second_deriv_bound(np.asarray(box, dtype=float))
        if bound is None:
            raise ConfigError(f"no analytic Holder bound for kind {self.kind}")
        return bound

    def bind(self, ifs: IfsSpec) -> "ConformalMap":
        """Attach the domain box (hull inflated by half its diameter) and
        run the nonvanishing-derivative certificate."""
        if ifs.ambient_dim != self.ambient_dim:
            raise ConfigError(
                f"map acts in dimension {self.ambient_dim}, IFS in {ifs.ambient_dim}"
            )
        pad = 0.5 * ifs.diameter()
        box = np.stack([ifs.hull[:, 0] - pad, ifs.hull[:, 1] + pad], axis=1)
        bound = replace(self, domain_box=box)
        bound.check_nonvanishing()
        return bound

    def check_nonvanishing(self, samples: int = _VANISH_SAMPLES) -> None:
        """Certificate that |g'| > 0 on the domain box.

        Runs exact pole exclusion for mobius kinds, a subdividing interval
        certificate (rejects when no positive lower bound emerges), and
        the random sample sweep on top.
        """
        box = self.domain_box
        if box is None:
            raise ConfigError("map has no domain box to certify")
        if isinstance(self.ast, _Mobius):
            self.ast._denom_range(box[0, 0], box[0, 1])
        if isinstance(self.ast, _ComplexMobius):
            self.ast._pole_distance_range(box)
        boxes = [np.asarray(box, dtype=float)]
        for _ in range(7):
            boxes = [b for b in boxes if self.ast.deriv_mag_range(b)[0] <= 0.0]
            if not boxes:
                break
            if len(boxes) > 4096:
                break
            split = []
            for b in boxes:
                ax = int(np.argmax(b[:, 1] - b[:, 0]))
                mid = 0.5 * (b[ax, 0] + b[ax, 1])
                left, right = b.copy(), b.copy()
                left[ax, 1] = mid
                right[ax, 0] = mid
                split.extend([left, right])
            boxes = split
        if any(self.ast.deriv_mag_range(b)[0] <= 0.0 for b in boxes):
            raise MapDomainError(
                f"cannot certify |g'| > 0 on the domain box (kind {self.kind})"
            )
        rng = np.random.default_rng(12345)
        pts = rng.uniform(box[:, 0], box[:, 1], size=(samples, self.ambient_dim))
        vals = np.array([self.ast.deriv_mag(p) for p in pts])
        if np.any(vals <= 0.0):
            raise MapDomainError(
                f"|g'| vanishes on the domain box (kind {self.kind})"
            )


# ---------------------------------------------------------------------------
# parsing


def _parse_real(tok: str, pos: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MapParseError(f"expected a number, got {tok!r}", pos) from None


def _parse_complex(tok: str, pos: int) -> complex:
    """Complex literal "a+bi" (also plain reals and pure imaginaries)."""
    t = tok.replace(" ", "").replace("i", "j").replace("I", "j")
    try:
        return complex(t)
    except ValueError:
        raise MapParseError(f"bad complex literal {tok!r}", pos) from None


def parse_map(
    text: str,
    domain_box: np.ndarray | None = None,
    alpha: float | None = None,
    holder_L: float | None = None,
) -> ConformalMap:
    """Parse a map expression.

    alpha defaults to 1 for the smooth kinds and ln2/ln3 for the
    staircase.  When a domain box is supplied the nonvanishing-derivative
    certificate runs immediately; otherwise it runs at bind time.
    """
    tokens = text.split()
    if not tokens:
        raise MapParseError("empty map expression", 0)
    kind = tokens[0]
    args = tokens[1:]

    def need(n: int):
        if len(args) != n:
            raise MapParseError(f"{kind} expects {n} arguments, got {len(args)}", len(tokens))

    default_alpha = 1.0
    if kind == "identity":
        need(0)
        node: _Node = _Identity()
    elif kind == "affine":
        need(2)
        node = _Affine(_parse_real(args[0], 1), _parse_real(args[1], 2))
    elif kind == "poly":
        if len(args) < 2:
            raise MapParseError("poly needs at least two coefficients", len(tokens))
        node = _Poly([_parse_real(a, i + 1) for i, a in enumerate(args)])
    elif kind == "exp":
        need(0)
        node = _Exp()
    elif kind == "mobius":
        need(4)
        node = _Mobius(*(_parse_real(a, i + 1) for i, a in enumerate(args)))
    elif kind == "devil_staircase":
        need(0)
        node = _DevilStaircase()
        default_alpha = LOG2_OVER_LOG3
    elif kind == "complex_poly":
        if len(args) < 2:
            raise MapParseError("complex_poly needs at least two coefficients", len(tokens))
        node = _ComplexPoly([_parse_complex(a, i + 1) for i, a in enumerate(args)])
    elif kind == "complex_mobius":
        need(4)
        node = _ComplexMobius(*(_parse_complex(a, i + 1) for i, a in enumerate(args)))
    else:
        raise MapParseError(f"unknown map kind {kind!r}", 0)

    if alpha is not None and not 0.0 < alpha <= 1.0:
        raise ConfigError("alpha must lie in (0,1]")
    box = None if domain_box is None else np.asarray(domain_box, dtype=float)
    cmap = ConformalMap(
        kind=kind,
        ast=node,
        alpha=default_alpha if alpha is None else alpha,
        holder_L=holder_L,
        domain_box=box,
    )
    if box is not None:
        cmap.check_nonvanishing()
    return cmap


def eval_map(cmap: ConformalMap, x):
    """Evaluate g at a point of the domain box."""
    return cmap.eval(x)


def eval_deriv_mag(cmap: ConformalMap, x) -> float:
    """Evaluate the length scaling ratio |g'| at a point."""
    return cmap.deriv_mag(x)


def estimate_holder(
    cmap: ConformalMap,
    ifs: IfsSpec,
    alpha: float,
    samples: int = DEFAULT_HOLDER_SAMPLES,
    safety: float = DEFAULT_HOLDER_SAFETY,
    seed: int = 0,
) -> float:
    """Sampled Holder constant of |g'|, scaled by the safety factor.

    Overestimating L is sound for every downstream bound (it only shrinks
    the partition threshold).  Pairs are drawn both uniformly over the
    domain box and at short range, where the quotient peaks for alpha < 1.
    """
    if not 0.0 < alpha <= 1.0:
        raise ConfigError("alpha must lie in (0,1]")
    if safety < 1.0:
        raise ConfigError("safety factor must be >= 1")
    if cmap.constant_deriv:
        return 0.0
    box = cmap.domain_box
    if box is None:
        box = cmap.bind(ifs).domain_box
    rng = np.random.default_rng(seed)
    d = cmap.ambient_dim
    n = max(samples, 16)
    xs = rng.uniform(box[:, 0], box[:, 1], size=(n, d))
    span = float(np.max(box[:, 1] - box[:, 0]))
    scale = span * 10.0 ** rng.uniform(-9, 0, size=(n, 1))
    ys = xs + rng.uniform(-1.0, 1.0, size=(n, d)) * scale
    ys = np.clip(ys, box[:, 0], box[:, 1])
    best = 0.0
    for x, y in zip(xs, ys):
        dist = float(np.linalg.norm(x - y))
        if dist == 0.0:
            continue
        q = abs(cmap.ast.deriv_mag(x) - cmap.ast.deriv_mag(y)) / dist ** alpha
        if q > best:
            best = q
    return best * safety
