"""Paired nonparametric testing and small-sample descriptive statistics.

The Wilcoxon signed-rank test drops zero differences (Wilcoxon's original
convention), mid-ranks ties, and switches between a full 2^n sign-pattern
enumeration (n_effective <= 12) and the tie-corrected normal approximation
with a 0.5 continuity correction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import DegenerateCorrelationError, EmptyListError

EXACT_MAX_N = 12


class WilcoxonMethod(Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class PairedSample:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape or a.size < 1:
            raise ValueError("paired sample needs two equal-length 1-D arrays, n >= 1")
        if np.isnan(a).any() or np.isnan(b).any() or np.isinf(a).any() or np.isinf(b).any():
            raise ValueError("paired sample must be finite (exclude PSNR infinities upstream)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+ = sum of ranks of positive differences
    p: float
    n_effective: int
    method: WilcoxonMethod


def wilcoxon_signed_rank(sample: PairedSample) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired values.

    All-zero differences are degenerate: p is defined as 1.0 and flagged.
    """
    d = sample.a - sample.b
    d = d[d != 0.0]
    n = int(d.size)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, WilcoxonMethod.DEGENERATE)
    ranks = rankdata(np.abs(d))  # mid-ranks for ties
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        p = _exact_two_sided_p(ranks, w_plus)
        return WilcoxonResult(w_plus, p, n, WilcoxonMethod.EXACT)
    mu = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum()) / 48.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    sigma = float(np.sqrt(sigma2))
    dev = w_plus - mu
    # continuity correction shrinks |dev| by 0.5
    z = (dev - 0.5 * np.sign(dev)) / sigma if dev != 0 else 0.0
    p = float(min(1.0, 2.0 * ndtr(-abs(z))))
    return WilcoxonResult(w_plus, p, n, WilcoxonMethod.NORMAL_APPROX)


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """P(|W' - mu| >= |W+ - mu|) under the 2^n sign-flip null.

    Ranks are multiples of 0.5, so all sums are exactly representable and the
    comparison is exact.
    """
    n = ranks.size
    patterns = np.arange(2 ** n, dtype=np.uint32)
    bits = (patterns[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1
    w = bits.astype(np.float64) @ ranks
    mu = float(ranks.sum()) / 2.0
    count = int((np.abs(w - mu) >= abs(w_plus - mu)).sum())
    return count / float(2 ** n)


def pearson_r(x, y) -> float:
    """Product-moment correlation; raises on constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise ValueError("pearson_r needs two equal-length 1-D arrays, n >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float((dx * dx).sum())
    syy = float((dy * dy).sum())
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateCorrelationError("correlation undefined for constant input")
    return float((dx * dy).sum() / np.sqrt(sxx * syy))


@dataclass(frozen=True)
class Describe:
    mean: float
    sd: float | None  # sample (n-1) standard deviation; None for n < 2
    median: float
    p5: float
    p95: float
    p99: float
    n: int


def describe(values) -> Describe:
    """Mean, sample SD, and linearly interpolated percentiles."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyListError("describe of an empty list")
    sd = float(v.std(ddof=1)) if v.size >= 2 else None
    p5, p50, p95, p99 = np.percentile(v, [5, 50, 95, 99])
    return Describe(
        mean=float(v.mean()),
        sd=sd,
        median=float(p50),
        p5=float(p5),
        p95=float(p95),
        p99=float(p99),
        n=int(v.size),
    )
