"""The two model-light measurements: task-entropy characterization of raw
image pairs and the posterior-concentration bias-variance decomposition of
repeated stochastic predictions.

Per-pair |delta| histograms use 1024 uniform bins on [0, 1]; pooled fractions
and percentiles are interpolated within bins, so they match direct pixel
computations to within one bin width (1/1024).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCorrelationError, DimensionError, EmptyMaskError, KTooSmallError
from .metrics import SsimConfig, ssim
from .raster import GrayImage, Scale, ValidityMask
from .stats import pearson_r

HIST_BINS = 1024
CHANGED_THRESHOLD = 0.05


@dataclass(frozen=True)
class PairStats:
    """Change statistics for one (last, target) visit pair."""

    delta_t: float
    changed_fraction: float
    mean_abs_delta: float
    copy_last_ssim: float
    pixel_histogram: np.ndarray  # counts of |delta| in HIST_BINS bins on [0, 1]
    n_valid: int

    def __post_init__(self):
        h = np.asarray(self.pixel_histogram, dtype=np.int64)
        if h.shape != (HIST_BINS,):
            raise ValueError(f"histogram must have {HIST_BINS} bins")
        if self.delta_t < 0:
            raise ValueError("delta_t must be >= 0")
        if not 0.0 <= self.changed_fraction <= 1.0:
            raise ValueError("changed_fraction must lie in [0, 1]")
        object.__setattr__(self, "pixel_histogram", h)


def pair_stats(
    last: GrayImage,
    target: GrayImage,
    mask: ValidityMask,
    delta_t: float,
    changed_threshold: float = CHANGED_THRESHOLD,
) -> PairStats:
    """Per-pixel |target - last| statistics over valid pixels."""
    if last.pixels.shape != target.pixels.shape or mask.bits.shape != last.pixels.shape:
        raise DimensionError("pair_stats inputs must share dimensions")
    if last.scale is not Scale.UNIT or target.scale is not Scale.UNIT:
        raise ValueError("pair_stats expects unit-scale images")
    if mask.valid_count() == 0:
        raise EmptyMaskError("pair_stats over an empty mask")
    delta = np.abs(target.pixels - last.pixels)[mask.bits]
    hist, _ = np.histogram(delta, bins=HIST_BINS, range=(0.0, 1.0))
    return PairStats(
        delta_t=float(delta_t),
        changed_fraction=float((delta > changed_threshold).mean()),
        mean_abs_delta=float(delta.mean()),
        copy_last_ssim=ssim(last, target, SsimConfig(), mask.bbox()),
        pixel_histogram=hist.astype(np.int64),
        n_valid=int(delta.size),
    )


def _hist_fraction_below(hist: np.ndarray, threshold: float) -> float:
    """Fraction of pixels with |delta| < threshold, interpolating inside the
    bin the threshold falls in."""
    total = float(hist.sum())
    if total == 0:
        return 0.0
    pos = threshold * HIST_BINS
    k = int(math.floor(pos))
    if k >= HIST_BINS:
        return 1.0
    below = float(hist[:k].sum()) + float(hist[k]) * (pos - k)
    return below / total


def _hist_percentile(hist: np.ndarray, q: float) -> float:
    """q-quantile (0..1) of pooled |delta|, interpolated within its bin."""
    total = float(hist.sum())
    target = q * total
    cum = 0.0
    for k in range(HIST_BINS):
        c = float(hist[k])
        if cum + c >= target and c > 0:
            frac = (target - cum) / c
            return (k + frac) / HIST_BINS
        cum += c
    return 1.0


def _mean_sd(values: list[float]) -> tuple[float, float | None]:
    v = np.asarray(values, dtype=np.float64)
    sd = float(v.std(ddof=1)) if v.size >= 2 else None
    return float(v.mean()), sd


@dataclass(frozen=True)
class StratumRow:
    label: str
    n_pairs: int
    frac_below_5pct: float
    median_changed_fraction: float
    mean_abs_delta: float
    mean_abs_delta_sd: float | None
    copy_last_ssim: float
    copy_last_ssim_sd: float | None


@dataclass(frozen=True)
class GlobalStats:
    frac_below_1pct: float
    frac_below_5pct: float
    frac_below_10pct: float
    median_abs_delta: float
    p95_abs_delta: float
    p99_abs_delta: float
    pearson_r: float | None  # None when degenerate (undefined, not 0)
    n_pairs: int
    n_pixels: int


@dataclass(frozen=True)
class EntropyReport:
    strata: tuple[StratumRow, ...]
    global_stats: GlobalStats

    def to_dict(self) -> dict:
        return {
            "strata": [
                {
                    "label": s.label,
                    "n_pairs": s.n_pairs,
                    "frac_below_5pct": s.frac_below_5pct,
                    "median_changed_fraction": s.median_changed_fraction,
                    "mean_abs_delta": s.mean_abs_delta,
                    "mean_abs_delta_sd": s.mean_abs_delta_sd,
                    "copy_last_ssim": s.copy_last_ssim,
                    "copy_last_ssim_sd": s.copy_last_ssim_sd,
                }
                for s in self.strata
            ],
            "global": {
                "frac_below_1pct": self.global_stats.frac_below_1pct,
                "frac_below_5pct": self.global_stats.frac_below_5pct,
                "frac_below_10pct": self.global_stats.frac_below_10pct,
                "median_abs_delta": self.global_stats.median_abs_delta,
                "p95_abs_delta": self.global_stats.p95_abs_delta,
                "p99_abs_delta": self.global_stats.p99_abs_delta,
                "pearson_r": self.global_stats.pearson_r,
                "n_pairs": self.global_stats.n_pairs,
                "n_pixels": self.global_stats.n_pixels,
            },
        }

    def to_text(self) -> str:
        head = (
            f"{'stratum':<22}{'n_pairs':>8}{'frac<5%':>10}"
            f"{'med.changed':>13}{'mean|d|':>16}{'copy-last SSIM':>18}"
        )
        lines = [head, "-" * len(head)]
        for s in self.strata:
            d_sd = "" if s.mean_abs_delta_sd is None else f" ± {s.mean_abs_delta_sd:.3f}"
            s_sd = "" if s.copy_last_ssim_sd is None else f" ± {s.copy_last_ssim_sd:.3f}"
            lines.append(
                f"{s.label:<22}{s.n_pairs:>8}{s.frac_below_5pct:>10.3f}"
                f"{s.median_changed_fraction:>13.3f}"
                f"{s.mean_abs_delta:>9.3f}{d_sd:<7}"
                f"{s.copy_last_ssim:>11.3f}{s_sd:<7}"
            )
        g = self.global_stats
        r_txt = "undefined" if g.pearson_r is None else f"{g.pearson_r:.3f}"
        lines.append("")
        lines.append(
            f"pooled: frac<1% {g.frac_below_1pct:.3f}  frac<5% {g.frac_below_5pct:.3f}  "
            f"frac<10% {g.frac_below_10pct:.3f}  median|d| {g.median_abs_delta:.4f}  "
            f"p95 {g.p95_abs_delta:.4f}  p99 {g.p99_abs_delta:.4f}"
        )
        lines.append(f"r(delta_t, changed fraction) = {r_txt}   pairs {g.n_pairs}  pixels {g.n_pixels}")
        return "\n".join(lines) + "\n"


def _stratum_label(lo: float | None, hi: float | None) -> str:
    if lo is None:
        return f"dt < {hi:g} y"
    if hi is None:
        return f"dt >= {lo:g} y"
    return f"{lo:g} <= dt < {hi:g} y"


def entropy_report(
    pairs: list[PairStats], strata_edges: tuple[float, ...] = (0.25, 1.0)
) -> EntropyReport:
    """Stratified and pooled inter-visit change statistics.

    Pearson r between delta_t and changed fraction is reported as None
    (undefined) when either series is constant, never coerced to 0.
    """
    if len(pairs) == 0:
        raise ValueError("entropy_report needs at least one pair")
    edges = tuple(sorted(strata_edges))
    bounds: list[tuple[float | None, float | None]] = []
    prev: float | None = None
    for e in edges:
        bounds.append((prev, e))
        prev = e
    bounds.append((prev, None))

    def in_stratum(p: PairStats, lo, hi) -> bool:
        return (lo is None or p.delta_t >= lo) and (hi is None or p.delta_t < hi)

    rows = []
    for lo, hi in bounds:
        members = [p for p in pairs if in_stratum(p, lo, hi)]
        if not members:
            rows.append(StratumRow(_stratum_label(lo, hi), 0, 0.0, 0.0, 0.0, None, 0.0, None))
            continue
        hist = np.sum([p.pixel_histogram for p in members], axis=0)
        mean_d, sd_d = _mean_sd([p.mean_abs_delta for p in members])
        mean_s, sd_s = _mean_sd([p.copy_last_ssim for p in members])
        rows.append(
            StratumRow(
                label=_stratum_label(lo, hi),
                n_pairs=len(members),
                frac_below_5pct=_hist_fraction_below(hist, 0.05),
                median_changed_fraction=float(
                    np.median([p.changed_fraction for p in members])
                ),
                mean_abs_delta=mean_d,
                mean_abs_delta_sd=sd_d,
                copy_last_ssim=mean_s,
                copy_last_ssim_sd=sd_s,
            )
        )
    pooled = np.sum([p.pixel_histogram for p in pairs], axis=0)
    dts = [p.delta_t for p in pairs]
    cfs = [p.changed_fraction for p in pairs]
    try:
        r = pearson_r(dts, cfs) if len(pairs) >= 2 else None
    except DegenerateCorrelationError:
        r = None
    g = GlobalStats(
        frac_below_1pct=_hist_fraction_below(pooled, 0.01),
        frac_below_5pct=_hist_fraction_below(pooled, 0.05),
        frac_below_10pct=_hist_fraction_below(pooled, 0.10),
        median_abs_delta=_hist_percentile(pooled, 0.50),
        p95_abs_delta=_hist_percentile(pooled, 0.95),
        p99_abs_delta=_hist_percentile(pooled, 0.99),
        pearson_r=r,
        n_pairs=len(pairs),
        n_pixels=int(pooled.sum()),
    )
    return EntropyReport(tuple(rows), g)


# ---------------------------------------------------------------------------
# posterior concentration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EyeSamples:
    """K stochastic predictions of one eye plus its target and mask."""

    samples: tuple[GrayImage, ...]
    target: GrayImage
    mask: ValidityMask


@dataclass(frozen=True)
class EyeDecomposition:
    mse: float
    bias2: float
    variance: float
    inter_sample_ssim: float


@dataclass(frozen=True)
class PosteriorReport:
    inter_sample_ssim_mean: float
    inter_sample_ssim_sd: float | None
    prediction_mse: float
    bias2_fraction_pct: float
    variance_fraction_pct: float
    var_over_mse_pct_pooled: float
    var_over_mse_pct_per_eye_mean: float | None
    n_eyes: int
    k: int
    per_eye: tuple[EyeDecomposition, ...]

    def to_dict(self) -> dict:
        return {
            "inter_sample_ssim_mean": self.inter_sample_ssim_mean,
            "inter_sample_ssim_sd": self.inter_sample_ssim_sd,
            "prediction_mse": self.prediction_mse,
            "bias2_fraction_pct": self.bias2_fraction_pct,
            "variance_fraction_pct": self.variance_fraction_pct,
            "var_over_mse_pct": {
                "pooled": self.var_over_mse_pct_pooled,
                "per_eye_mean": self.var_over_mse_pct_per_eye_mean,
            },
            "n_eyes": self.n_eyes,
            "k": self.k,
        }

    def to_text(self) -> str:
        sd = "" if self.inter_sample_ssim_sd is None else f" ± {self.inter_sample_ssim_sd:.5f}"
        lines = [
            f"{'inter-sample SSIM (mean ± SD across eyes)':<45}"
            f"{self.inter_sample_ssim_mean:.5f}{sd}",
            f"{'prediction MSE':<45}{self.prediction_mse:.3e}",
            f"{'inter-sample variance / prediction MSE':<45}"
            f"{self.var_over_mse_pct_pooled:.3f}%",
            f"{'bias^2 fraction of total error':<45}{self.bias2_fraction_pct:.2f}%",
            f"{'variance fraction of total error':<45}{self.variance_fraction_pct:.2f}%",
            f"{'eyes':<45}{self.n_eyes} (K = {self.k})",
        ]
        return "\n".join(lines) + "\n"


def decompose_eye(eye: EyeSamples) -> EyeDecomposition:
    """Population bias-variance split of one eye's K predictions.

    MSE = bias^2 + variance holds exactly under the divide-by-K convention.
    """
    k = len(eye.samples)
    if k < 2:
        raise KTooSmallError("need K >= 2 samples per eye")
    shape = eye.target.pixels.shape
    for s in eye.samples:
        if s.pixels.shape != shape:
            raise DimensionError("sample dimensions differ from target")
    if eye.mask.bits.shape != shape:
        raise DimensionError("mask dimensions differ from target")
    m = eye.mask.bits
    stack = np.stack([s.pixels[m] for s in eye.samples])  # (k, n_valid)
    target = eye.target.pixels[m]
    mean_pred = stack.mean(axis=0)
    mse = float(((stack - target) ** 2).mean())
    bias2 = float(((mean_pred - target) ** 2).mean())
    variance = float(((stack - mean_pred) ** 2).mean())
    pairs = [
        ssim(eye.samples[i], eye.samples[j], SsimConfig(), eye.mask.bbox())
        for i in range(k)
        for j in range(i + 1, k)
    ]
    return EyeDecomposition(mse, bias2, variance, float(np.mean(pairs)))


def posterior_report(samples_per_eye: list[EyeSamples]) -> PosteriorReport:
    """Pool bias-variance decompositions across eyes.

    Fractions are computed on pooled (across-eye mean) MSE/bias^2/variance;
    the per-eye-mean variant of Var/MSE is reported alongside.
    """
    if len(samples_per_eye) == 0:
        raise ValueError("posterior_report needs at least one eye")
    k = len(samples_per_eye[0].samples)
    decs = [decompose_eye(e) for e in samples_per_eye]
    mse_pool = float(np.mean([d.mse for d in decs]))
    bias_pool = float(np.mean([d.bias2 for d in decs]))
    var_pool = float(np.mean([d.variance for d in decs]))
    if mse_pool > 0:
        bias_pct = 100.0 * bias_pool / mse_pool
        var_pct = 100.0 * var_pool / mse_pool
    else:  # all predictions exactly equal the target
        bias_pct, var_pct = 100.0, 0.0
    ratios = [100.0 * d.variance / d.mse for d in decs if d.mse > 0]
    ssim_mean, ssim_sd = _mean_sd([d.inter_sample_ssim for d in decs])
    return PosteriorReport(
        inter_sample_ssim_mean=ssim_mean,
        inter_sample_ssim_sd=ssim_sd,
        prediction_mse=mse_pool,
        bias2_fraction_pct=bias_pct,
        variance_fraction_pct=var_pct,
        var_over_mse_pct_pooled=var_pct,
        var_over_mse_pct_per_eye_mean=float(np.mean(ratios)) if ratios else None,
        n_eyes=len(decs),
        k=k,
        per_eye=tuple(decs),
    )
