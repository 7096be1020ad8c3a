"""Empirical mixed moments, joint cumulants, and finite-sample decision rules.

Every statistic is a :class:`MomentEstimate`: a value plus per-sample
influence arrays.  Arithmetic on estimates propagates the influences by the
delta method (a linearized jackknife), so standard errors of derived
quantities -- ratios of moment differences, cumulant ratios, the final
effect estimates -- come out with the correct covariances between
statistics computed from the same sample, at O(n) cost.

Population-oracle statistics are the same objects with empty influence
sets (se == 0); the "is this nonzero / are these different" tests then
reduce to exact comparisons against a small absolute floor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Optional

import numpy as np

from .noise import MomentOrderError

DEFAULT_Z = 4.0
DEFAULT_ABS_FLOOR = 1e-9
DEFAULT_MAX_ORDER = 8


class SampleSource:
    """Identity of one underlying sample.

    Estimates holding influence arrays under the same source are treated as
    statistically dependent when combined; distinct sources are independent.
    """

    __slots__ = ("n",)

    def __init__(self, n: int):
        self.n = int(n)


class MomentEstimate:
    """A scalar statistic with a delta-method standard error.

    Supports +, -, *, /, ** (and abs/negation) with scalars and with other
    estimates.  First-order dependence between estimates derived from the
    same sample is tracked exactly, so e.g. the se of a ratio of two
    correlated moments is the proper delta-method value.
    """

    __slots__ = ("value", "_infl")

    def __init__(self, value: float, infl: Optional[dict] = None):
        self.value = float(value)
        self._infl = infl if infl is not None else {}

    @property
    def se(self) -> float:
        var = 0.0
        for src, arr in self._infl.items():
            if src.n > 1:
                var += float(np.var(arr, ddof=1)) / src.n
        return math.sqrt(var)

    @property
    def n(self) -> int:
        """Total sample size behind the estimate (0 for exact statistics)."""
        return sum(src.n for src in self._infl)

    # -- linearized arithmetic ------------------------------------------

    @staticmethod
    def _lincomb(value: float, terms: Iterable[tuple["MomentEstimate", float]]):
        infl: dict = {}
        for est, w in terms:
            if w == 0.0:
                continue
            for src, arr in est._infl.items():
                if src in infl:
                    infl[src] += w * arr
                else:
                    infl[src] = w * arr
        return MomentEstimate(value, infl)

    @staticmethod
    def _coerce(other) -> "MomentEstimate":
        if isinstance(other, MomentEstimate):
            return other
        return MomentEstimate(float(other))

    def __add__(self, other):
        o = self._coerce(other)
        return self._lincomb(self.value + o.value, [(self, 1.0), (o, 1.0)])

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return self._lincomb(self.value - o.value, [(self, 1.0), (o, -1.0)])

    def __rsub__(self, other):
        o = self._coerce(other)
        return self._lincomb(o.value - self.value, [(o, 1.0), (self, -1.0)])

    def __mul__(self, other):
        o = self._coerce(other)
        return self._lincomb(self.value * o.value, [(self, o.value), (o, self.value)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        v = self.value / o.value
        return self._lincomb(v, [(self, 1.0 / o.value), (o, -v / o.value)])

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, k):
        k = float(k)
        v = self.value**k
        if self.value == 0.0:
            dv = 0.0
        else:
            dv = k * self.value ** (k - 1.0)
        return self._lincomb(v, [(self, dv)])

    def __neg__(self):
        return self._lincomb(-self.value, [(self, -1.0)])

    def __abs__(self):
        return self._lincomb(abs(self.value), [(self, math.copysign(1.0, self.value))])

    def __repr__(self):
        return f"MomentEstimate(value={self.value!r}, se={self.se!r}, n={self.n})"


def is_nonzero(
    est: MomentEstimate,
    z: float = DEFAULT_Z,
    abs_floor: float = DEFAULT_ABS_FLOOR,
) -> bool:
    """True iff the estimate is statistically distinguishable from zero."""
    return abs(est.value) > z * est.se + abs_floor


def moment_diff_test(
    a: MomentEstimate,
    b: MomentEstimate,
    z: float = DEFAULT_Z,
    abs_floor: float = DEFAULT_ABS_FLOOR,
) -> bool:
    """True iff two independent-sample estimates differ statistically.

    Rejects when |a - b| > z * sqrt(se_a^2 + se_b^2) + abs_floor.  The
    absolute floor makes the test exact on zero-se (population) inputs.
    """
    if z <= 0:
        raise ValueError("z must be positive")
    gap = z * math.hypot(a.se, b.se) + abs_floor
    return abs(a.value - b.value) > gap


# ----------------------------------------------------------------------
# moment providers
# ----------------------------------------------------------------------

class PairMoments:
    """Joint moments of an ordered pair of scalar variables (V, W).

    The abstraction the estimation algorithms are written against.  A
    sample-backed implementation lives here; an exact population-oracle
    implementation backed by the structural model lives in
    :mod:`moment_ident.model`.  Both expose:

    - ``moment(p, q)``   -> estimate of E[V^p W^q]
    - ``transform(a, b, c, d)`` -> moments of (a V + b W, c V + d W)
    - ``cumulant(p, q)`` -> joint cumulant with p copies of V, q of W
    """

    max_order: int

    def moment(self, p: int, q: int) -> MomentEstimate:
        raise NotImplementedError

    def transform(self, a: float, b: float, c: float, d: float) -> "PairMoments":
        raise NotImplementedError

    def cumulant(self, p: int, q: int) -> MomentEstimate:
        return joint_cumulant_from_moments(self.moment, p, q)


class SamplePairMoments(PairMoments):
    """Plug-in moments of two paired sample vectors."""

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        *,
        max_order: int = DEFAULT_MAX_ORDER,
        source: Optional[SampleSource] = None,
    ):
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d vectors of equal length")
        if x.size < 2:
            raise ValueError("need at least 2 samples")
        if source is None:
            if not (np.isfinite(x).all() and np.isfinite(y).all()):
                raise ValueError("inputs must be finite")
            source = SampleSource(x.size)
        self._x = x
        self._y = y
        self.max_order = int(max_order)
        self.source = source
        self._cache: dict[tuple[int, int], MomentEstimate] = {}

    @property
    def n(self) -> int:
        return self._x.size

    def moment(self, p: int, q: int) -> MomentEstimate:
        key = (int(p), int(q))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p, q = key
        if p < 0 or q < 0:
            raise ValueError("powers must be non-negative")
        if p + q > self.max_order:
            raise MomentOrderError(f"moment order {p + q} exceeds cap {self.max_order}")
        if p + q == 0:
            return MomentEstimate(1.0)
        if p == 0:
            g = self._y**q
        elif q == 0:
            g = self._x**p
        else:
            g = self._x**p * self._y**q
        m = float(g.mean())
        est = MomentEstimate(m, {self.source: g - m})
        self._cache[key] = est
        return est

    def transform(self, a: float, b: float, c: float, d: float) -> "SamplePairMoments":
        # shares the source: derived statistics stay correlated with the
        # originals through the influence bookkeeping
        return SamplePairMoments(
            a * self._x + b * self._y,
            c * self._x + d * self._y,
            max_order=self.max_order,
            source=self.source,
        )


# ----------------------------------------------------------------------
# joint cumulants
# ----------------------------------------------------------------------

def _set_partitions(items: tuple):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [part[i] + [first]] + part[i + 1 :]
        yield [[first]] + part


@lru_cache(maxsize=None)
def _cumulant_terms(px: int, py: int) -> tuple:
    """Moments-to-cumulants expansion, aggregated over set partitions.

    Returns ((coef, ((p1,q1), (p2,q2), ...)), ...): the joint cumulant with
    px copies of the first variable and py of the second equals
    sum over terms of coef * prod over blocks of E[V^p W^q].  Raw (not
    centered) moments; singleton blocks carry the mean corrections.
    """
    idx = tuple(range(px + py))
    agg: dict[tuple, float] = {}
    for part in _set_partitions(idx):
        coef = (-1.0) ** (len(part) - 1) * math.factorial(len(part) - 1)
        blocks = tuple(
            sorted((sum(1 for i in b if i < px), sum(1 for i in b if i >= px)) for b in part)
        )
        agg[blocks] = agg.get(blocks, 0.0) + coef
    return tuple(sorted((blocks, coef) for blocks, coef in agg.items()))


def joint_cumulant_from_moments(
    moment: Callable[[int, int], MomentEstimate], px: int, py: int
) -> MomentEstimate:
    """Joint cumulant kappa(V,...,V,W,...,W) from a moment provider."""
    if px < 0 or py < 0 or px + py < 1:
        raise ValueError("need px, py >= 0 with px + py >= 1")
    terms = _cumulant_terms(int(px), int(py))
    needed = {key for blocks, _ in terms for key in blocks}
    ests = {key: moment(*key) for key in needed}
    value = 0.0
    grad = {key: 0.0 for key in needed}
    for blocks, coef in terms:
        vals = [ests[b].value for b in blocks]
        prod = math.prod(vals)
        value += coef * prod
        for i, b in enumerate(blocks):
            rest = math.prod(vals[:i]) * math.prod(vals[i + 1 :])
            grad[b] += coef * rest
    return MomentEstimate._lincomb(value, [(ests[k], w) for k, w in grad.items()])


# ----------------------------------------------------------------------
# vector-level convenience operations
# ----------------------------------------------------------------------

def mixed_moment(
    t: np.ndarray, y: np.ndarray, p: int, q: int, *, max_order: int = DEFAULT_MAX_ORDER
) -> MomentEstimate:
    """Plug-in estimate of E[T^p Y^q] with its standard error.

    se is the sample standard deviation of t^p y^q over sqrt(n).
    """
    return SamplePairMoments(t, y, max_order=max_order).moment(p, q)


def joint_cumulant(
    x: np.ndarray, y: np.ndarray, px: int, py: int, *, max_order: int = DEFAULT_MAX_ORDER
) -> MomentEstimate:
    """Plug-in joint cumulant with px copies of x and py copies of y.

    Standard error by the linearized (infinitesimal) jackknife: the
    cumulant is a polynomial in raw mixed moments, and the influence of
    each sample propagates through its gradient.
    """
    if px + py < 3 or px + py > max_order:
        raise MomentOrderError(f"cumulant order {px + py} outside [3, {max_order}]")
    return SamplePairMoments(x, y, max_order=max_order).cumulant(px, py)


def ks_two_sample(a: np.ndarray, b: np.ndarray, alpha_level: float = 0.01) -> bool:
    """Asymptotic two-sample Kolmogorov-Smirnov decision.

    Returns True when the samples' distributions differ: the KS statistic
    exceeds c(alpha) * sqrt((n+m)/(n m)) with c(alpha) = sqrt(-ln(alpha/2)/2).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    if not 0.0 < alpha_level < 1.0:
        raise ValueError("alpha_level must be in (0, 1)")
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    grid = np.concatenate([a_sorted, b_sorted])
    cdf_a = np.searchsorted(a_sorted, grid, side="right") / a.size
    cdf_b = np.searchsorted(b_sorted, grid, side="right") / b.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    c_alpha = math.sqrt(-math.log(alpha_level / 2.0) / 2.0)
    critical = c_alpha * math.sqrt((a.size + b.size) / (a.size * b.size))
    return stat > critical


# ----------------------------------------------------------------------
# datasets
# ----------------------------------------------------------------------

CSV_HEADER = ("env", "t", "y")


@dataclass(frozen=True)
class EnvPairDataset:
    """Paired (treatment, outcome) samples from two environments."""

    t1: np.ndarray
    y1: np.ndarray
    t2: np.ndarray
    y2: np.ndarray

    def __post_init__(self):
        for name in ("t1", "y1", "t2", "y2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be 1-d")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if self.t1.size != self.y1.size or self.t2.size != self.y2.size:
            raise ValueError("t and y lengths must match within each environment")
        if min(self.t1.size, self.t2.size) < 2:
            raise ValueError("each environment needs at least 2 samples")

    def pairs(
        self, max_order: int = DEFAULT_MAX_ORDER
    ) -> tuple[SamplePairMoments, SamplePairMoments]:
        return (
            SamplePairMoments(self.t1, self.y1, max_order=max_order),
            SamplePairMoments(self.t2, self.y2, max_order=max_order),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for env, t, y in ((1, self.t1, self.y1), (2, self.t2, self.y2)):
                for ti, yi in zip(t.tolist(), y.tolist()):
                    writer.writerow([env, repr(ti), repr(yi)])

    @classmethod
    def from_csv(cls, path) -> "EnvPairDataset":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise ValueError(f"expected CSV header 'env,t,y' in {path}")
            cols: dict[int, tuple[list, list]] = {1: ([], []), 2: ([], [])}
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 columns")
                try:
                    env = int(row[0])
                    t = float(row[1])
                    y = float(row[2])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
                if env not in (1, 2):
                    raise ValueError(f"{path}:{lineno}: env must be 1 or 2")
                cols[env][0].append(t)
                cols[env][1].append(y)
        return cls(
            t1=np.array(cols[1][0]),
            y1=np.array(cols[1][1]),
            t2=np.array(cols[2][0]),
            y2=np.array(cols[2][1]),
        )
