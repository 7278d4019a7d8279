"""Empirical distribution functions and the two-sample Kolmogorov-Smirnov test.

The KS statistic is computed on integer numerators (``|c_a * n_b - c_b * n_a|``)
so that the permutation p-value compares statistics exactly, without float
round-off deciding whether an assignment is "at least as extreme".
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

EXACT_CAP = 12
SERIES_TOL = 1e-12
# Below this lambda Q is 1 to far better than SERIES_TOL (1 - Q(0.1) ~ 1e-52),
# while the alternating series would need O(1/lambda) terms.
_SMALL_LAMBDA = 0.1
# Up to here the alternating series cannot resolve 1 - Q (its truncation error
# exceeds it and wobbles as terms are added), so the Jacobi-transformed form is
# used instead; it needs one or two terms in this range.
_DUAL_LAMBDA = 0.3


class EmpiricalDistribution:
    """Sorted sample of certainties in [0, 1] with step-function CDF/SF.

    >>> d = EmpiricalDistribution([0.9, 0.5, 0.7])
    >>> d.cdf(0.7), d.sf(0.7)
    (0.6666666666666666, 0.3333333333333333)
    """

    __slots__ = ("_samples",)

    def __init__(self, values: Iterable[float]):
        arr = np.sort(np.asarray(list(values), dtype=float))
        if arr.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        if not np.all(np.isfinite(arr)) or arr[0] < 0.0 or arr[-1] > 1.0:
            raise ValueError("samples must lie in [0, 1]")
        arr.flags.writeable = False
        self._samples = arr

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def n(self) -> int:
        return int(self._samples.size)

    def count_le(self, x):
        return np.searchsorted(self._samples, x, side="right")

    def cdf(self, x):
        """P(X <= x), right-continuous."""
        k = self.count_le(x)
        if np.ndim(k) == 0:
            return int(k) / self.n
        return k / self.n

    def sf(self, x):
        """P(X > x); ``cdf(x) + sf(x) == 1`` exactly."""
        k = self.count_le(x)
        if np.ndim(k) == 0:
            return (self.n - int(k)) / self.n
        return (self.n - k) / self.n

    def with_sample(self, value: float) -> "EmpiricalDistribution":
        return EmpiricalDistribution(np.append(self._samples, value))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmpiricalDistribution):
            return NotImplemented
        return np.array_equal(self._samples, other._samples)

    def __hash__(self):
        return hash(self._samples.tobytes())

    def __repr__(self) -> str:
        return f"EmpiricalDistribution(n={self.n})"


Samples = Union[EmpiricalDistribution, Sequence[float], np.ndarray]


def ecdf_build(values: Iterable[float]) -> EmpiricalDistribution:
    return EmpiricalDistribution(values)


def ecdf_cdf(d: EmpiricalDistribution, x):
    return d.cdf(x)


def ecdf_sf(d: EmpiricalDistribution, x):
    return d.sf(x)


def _as_dist(x: Samples) -> EmpiricalDistribution:
    return x if isinstance(x, EmpiricalDistribution) else EmpiricalDistribution(x)


class KsMethod(str, enum.Enum):
    EXACT_PERMUTATION = "exact_permutation"
    ASYMPTOTIC_SERIES = "asymptotic_series"


@dataclass(frozen=True)
class KsReport:
    statistic: float
    p_value: float
    method: KsMethod
    n1: int
    n2: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method.value,
            "n1": self.n1,
            "n2": self.n2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KsReport":
        return cls(float(d["statistic"]), float(d["p_value"]), KsMethod(d["method"]), int(d["n1"]), int(d["n2"]))

    def __str__(self) -> str:
        return f"D={self.statistic:.6g}, p={self.p_value:.6g}, method={self.method.value}"


def _ks_numerator(a: np.ndarray, b: np.ndarray) -> int:
    """max over merged points of |n_b * #a<=x - n_a * #b<=x|."""
    pooled = np.union1d(a, b)
    ca = np.searchsorted(a, pooled, side="right").astype(np.int64)
    cb = np.searchsorted(b, pooled, side="right").astype(np.int64)
    return int(np.max(np.abs(ca * b.size - cb * a.size)))


def ks_statistic(a: Samples, b: Samples) -> float:
    """D = sup_x |F_a(x) - F_b(x)|."""
    da, db = _as_dist(a), _as_dist(b)
    return _ks_numerator(da.samples, db.samples) / (da.n * db.n)


def ks_pvalue_exact(a: Samples, b: Samples, cap: int = EXACT_CAP) -> float:
    """Two-sided permutation p-value over all C(n1+n2, n1) group assignments.

    Assignments are enumerated over positions of the sorted pooled sample;
    the statistic is read only at the end of each run of tied values.
    """
    da, db = _as_dist(a), _as_dist(b)
    n1, n2 = da.n, db.n
    total = n1 + n2
    if total > cap:
        raise ValueError(
            f"exact KS p-value limited to n1+n2 <= {cap} (got {total}); use ks_pvalue_asymptotic"
        )
    observed = _ks_numerator(da.samples, db.samples)
    pooled = np.sort(np.concatenate([da.samples, db.samples]))
    block_ends = [i for i in range(total) if i == total - 1 or pooled[i] != pooled[i + 1]]

    hits = 0
    n_assign = 0
    for chosen in itertools.combinations(range(total), n1):
        in_a = [False] * total
        for i in chosen:
            in_a[i] = True
        best = 0
        ca = 0
        pos = 0
        for end in block_ends:
            while pos <= end:
                ca += in_a[pos]
                pos += 1
            cb = pos - ca
            best = max(best, abs(ca * n2 - cb * n1))
        hits += best >= observed
        n_assign += 1
    return hits / n_assign


def kolmogorov_q(lam: float, tol: float = SERIES_TOL) -> float:
    """Q(lam) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2), clamped to [0, 1].

    Summation stops at the first term whose magnitude is below ``tol``. For
    small lambda the equivalent form
    ``1 - sqrt(2 pi)/lam * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 lam^2))``
    is summed under the same rule, which keeps Q monotone.
    """
    if lam < _SMALL_LAMBDA:
        return 1.0
    if lam < _DUAL_LAMBDA:
        scale = math.sqrt(2.0 * math.pi) / lam
        tail = 0.0
        k = 1
        while True:
            term = scale * math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * lam * lam))
            if term < tol:
                break
            tail += term
            k += 1
        return min(1.0, max(0.0, 1.0 - tail))
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        if term < tol:
            break
        total += term if k % 2 else -term
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_pvalue_asymptotic(d: float, n1: int, n2: int) -> float:
    if n1 < 1 or n2 < 1:
        raise ValueError("sample sizes must be >= 1")
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"D must be in [0, 1], got {d}")
    lam = math.sqrt(n1 * n2 / (n1 + n2)) * d
    return kolmogorov_q(lam)


def ks_2samp(a: Samples, b: Samples, exact_cap: int = EXACT_CAP) -> KsReport:
    da, db = _as_dist(a), _as_dist(b)
    d = ks_statistic(da, db)
    if da.n + db.n <= exact_cap:
        p = ks_pvalue_exact(da, db, cap=exact_cap)
        method = KsMethod.EXACT_PERMUTATION
    else:
        p = ks_pvalue_asymptotic(d, da.n, db.n)
        method = KsMethod.ASYMPTOTIC_SERIES
    return KsReport(d, p, method, da.n, db.n)
