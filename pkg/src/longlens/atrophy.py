"""Adaptive-threshold atrophy segmentation, mask metrics, and the
segmentation-parameter sensitivity sweep.

Segmentation runs on byte-scale intensities inside a circular ROI centered on
the frame (sequences are macula-centered downstream of registration). The
binarization threshold is t = max(min(mu - sigma_coef*sigma, cap_frac*mu),
threshold_floor) over ROI pixels brighter than the fundus floor.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import DimensionError, EmptyMaskError, NoFundusPixelsError
from .raster import (
    Connectivity,
    GrayImage,
    MorphOp,
    Scale,
    StructuringElement,
    ValidityMask,
    connected_components,
    morphology,
)


class BimodalityWarning(UserWarning):
    """The within-ROI intensity histogram looks bimodal; the adaptive
    threshold may drift below both modes. The threshold is NOT adjusted."""


@dataclass(frozen=True)
class SegParams:
    sigma_coef: float = 1.5
    cap_frac: float = 0.70
    roi_radius_frac: float = 0.40
    seed_radius_frac: float = 0.15
    min_component_px: int = 20
    fundus_floor: float = 10.0
    threshold_floor: float = 1.0
    morph_element: StructuringElement = field(default_factory=lambda: StructuringElement(5, 5))
    # warn when a second intensity mode holds roughly >12% of ROI mass
    bimodality_threshold: float = 0.12

    def __post_init__(self):
        if not 0.0 < self.cap_frac < 1.0:
            raise ValueError("cap_frac must be in (0, 1)")
        if not 0.0 < self.seed_radius_frac < self.roi_radius_frac < 0.5:
            raise ValueError("need 0 < seed_radius_frac < roi_radius_frac < 0.5")
        if self.sigma_coef <= 0:
            raise ValueError("sigma_coef must be positive")


def _disc(h: int, w: int, radius: float) -> np.ndarray:
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2


def adaptive_threshold(mu: float, sigma: float, params: SegParams) -> float:
    """t = max(min(mu - sigma_coef*sigma, cap_frac*mu), threshold_floor)."""
    return max(min(mu - params.sigma_coef * sigma, params.cap_frac * mu),
               params.threshold_floor)


def segment_atrophy(img: GrayImage, params: SegParams = SegParams()) -> ValidityMask:
    """Adaptive intensity-threshold atrophy segmentation of one frame.

    Pipeline: ROI statistics over fundus pixels, thresholding, close-then-open
    cleanup, and retention of components above the minimum area that touch the
    central seed disc. Deterministic: identical (image, params) give a
    bit-identical mask.
    """
    px = img.to_byte().pixels
    h, w = px.shape
    dim = min(h, w)
    roi = _disc(h, w, params.roi_radius_frac * dim)
    fundus = roi & (px > params.fundus_floor)
    vals = px[fundus]
    if vals.size == 0:
        raise NoFundusPixelsError("no ROI pixel exceeds the fundus floor")
    mu = float(vals.mean())
    sigma = float(vals.std())  # population
    score = bimodality_score(vals)
    if score > params.bimodality_threshold:
        warnings.warn(
            f"within-ROI histogram looks bimodal (score {score:.3f} > "
            f"{params.bimodality_threshold}); threshold left unchanged",
            BimodalityWarning,
            stacklevel=2,
        )
    t = adaptive_threshold(mu, sigma, params)
    candidate = ValidityMask(roi & (px < t))
    cleaned = morphology(
        morphology(candidate, params.morph_element, MorphOp.CLOSE),
        params.morph_element,
        MorphOp.OPEN,
    )
    # morphology runs on the full frame; clip back into the ROI afterwards
    clipped = ValidityMask(cleaned.bits & roi)
    seed = _disc(h, w, params.seed_radius_frac * dim)
    out = np.zeros((h, w), dtype=bool)
    for comp in connected_components(clipped, Connectivity.EIGHT):
        if comp.area < params.min_component_px:
            continue
        comp_bits = comp.to_mask(h, w).bits
        if (comp_bits & seed).any():
            out |= comp_bits
    return ValidityMask(out)


# ---------------------------------------------------------------------------
# bimodality score (distance of the in-ROI histogram to its closest unimodal
# isotonic fit; configurable warning threshold, never adjusts the threshold)
# ---------------------------------------------------------------------------

def _pava_nondecreasing(y: np.ndarray) -> np.ndarray:
    blocks: list[list[float]] = []  # [value, weight]
    for v in y:
        cur = [float(v), 1.0]
        while blocks and blocks[-1][0] > cur[0]:
            pv, pw = blocks.pop()
            tot = pw + cur[1]
            cur = [(pv * pw + cur[0] * cur[1]) / tot, tot]
        blocks.append(cur)
    out = np.empty(len(y))
    i = 0
    for v, wgt in blocks:
        n = int(round(wgt))
        out[i : i + n] = v
        i += n
    return out


def bimodality_score(values: np.ndarray, bins: int = 64) -> float:
    """Sup-distance between the sample CDF and the CDF of the best unimodal
    (up-then-down) least-squares fit of its histogram. 0 for unimodal shapes."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return 0.0
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return 0.0
    hist, _ = np.histogram(v, bins=bins, range=(lo, hi))
    h = hist.astype(np.float64)
    total = h.sum()
    cdf = np.cumsum(h) / total
    best = np.inf
    for mode in range(bins):
        left = _pava_nondecreasing(h[: mode + 1])
        right = _pava_nondecreasing(h[mode + 1 :][::-1])[::-1]
        fit = np.concatenate([left, right])
        fit_cdf = np.cumsum(fit) / total
        best = min(best, float(np.abs(cdf - fit_cdf).max()))
        if best == 0.0:
            break
    return best


# ---------------------------------------------------------------------------
# mask metrics
# ---------------------------------------------------------------------------

def dice(a: ValidityMask, b: ValidityMask) -> float:
    """2|A.B| / (|A| + |B|); two empty masks count as perfect agreement."""
    if a.bits.shape != b.bits.shape:
        raise DimensionError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    na, nb = a.valid_count(), b.valid_count()
    if na + nb == 0:
        return 1.0
    inter = int((a.bits & b.bits).sum())
    return 2.0 * inter / (na + nb)


_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def boundary_pixels(mask: ValidityMask) -> np.ndarray:
    """True pixels 4-adjacent to a false or out-of-bounds pixel."""
    eroded = ndimage.binary_erosion(mask.bits, structure=_CROSS, border_value=0)
    return mask.bits & ~eroded


def hd95(a: ValidityMask, b: ValidityMask) -> float:
    """Symmetric 95th-percentile Hausdorff distance between mask boundaries,
    in Euclidean pixels."""
    if a.bits.shape != b.bits.shape:
        raise DimensionError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    if a.valid_count() == 0 or b.valid_count() == 0:
        raise EmptyMaskError("hd95 requires two nonempty masks")
    ba = boundary_pixels(a)
    bb = boundary_pixels(b)
    dist_to_b = ndimage.distance_transform_edt(~bb)
    dist_to_a = ndimage.distance_transform_edt(~ba)
    d_ab = dist_to_b[ba]
    d_ba = dist_to_a[bb]
    return float(max(np.percentile(d_ab, 95), np.percentile(d_ba, 95)))


# ---------------------------------------------------------------------------
# sensitivity sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    sigma_coefs: tuple[float, ...] = (1.0, 1.5, 2.0)
    cap_fracs: tuple[float, ...] = (0.60, 0.70, 0.80)
    seed_fracs: tuple[float, ...] = (0.10, 0.15, 0.20)

    def cells(self):
        return list(itertools.product(self.sigma_coefs, self.cap_fracs, self.seed_fracs))


@dataclass(frozen=True)
class RankRow:
    method: str
    mean_rank: float
    rank_le2_count: int
    rank_ge4_count: int
    n_cells: int


@dataclass(frozen=True)
class RankTable:
    rows: tuple[RankRow, ...]
    excluded: int  # (cell, image) segmentations that errored and were skipped

    def to_csv(self) -> str:
        lines = ["method,mean_rank,rank_le2_count,rank_ge4_count"]
        for r in self.rows:
            lines.append(
                f"{r.method},{r.mean_rank:.4f},{r.rank_le2_count},{r.rank_ge4_count}"
            )
        return "\n".join(lines) + "\n"


def sensitivity_sweep(
    gt_images: list[GrayImage],
    method_predictions: dict[str, list[GrayImage]],
    grid: SweepGrid = SweepGrid(),
    base_params: SegParams = SegParams(),
) -> RankTable:
    """Rank methods by mean Dice per sweep cell and aggregate rank statistics.

    The same parameters segment prediction and ground truth within a cell.
    Per-image segmentation failures are recorded as exclusions, not raised.
    Ties share the best (minimum) rank.
    """
    methods = sorted(method_predictions)
    if len(methods) < 1:
        raise ValueError("at least one method required")
    for name in methods:
        if len(method_predictions[name]) != len(gt_images):
            raise ValueError(f"method {name!r} prediction count mismatch")
    ranks: dict[str, list[int]] = {m: [] for m in methods}
    excluded = 0
    for sigma_coef, cap_frac, seed_frac in grid.cells():
        params = replace(
            base_params,
            sigma_coef=sigma_coef,
            cap_frac=cap_frac,
            seed_radius_frac=seed_frac,
        )
        gt_masks: list[ValidityMask | None] = []
        for gt in gt_images:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", BimodalityWarning)
                    gt_masks.append(segment_atrophy(gt, params))
            except NoFundusPixelsError:
                gt_masks.append(None)
                excluded += 1
        mean_dice: dict[str, float] = {}
        for name in methods:
            scores = []
            for pred, gt_mask in zip(method_predictions[name], gt_masks):
                if gt_mask is None:
                    continue
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", BimodalityWarning)
                        pred_mask = segment_atrophy(pred, params)
                except NoFundusPixelsError:
                    excluded += 1
                    continue
                scores.append(dice(pred_mask, gt_mask))
            mean_dice[name] = float(np.mean(scores)) if scores else float("nan")
        # competition ranking, best Dice first; ties share the minimum rank
        for name in methods:
            better = sum(
                1 for other in methods if mean_dice[other] > mean_dice[name]
            )
            ranks[name].append(better + 1)
    rows = []
    for name in methods:
        r = np.asarray(ranks[name], dtype=np.float64)
        rows.append(
            RankRow(
                method=name,
                mean_rank=float(r.mean()),
                rank_le2_count=int((r <= 2).sum()),
                rank_ge4_count=int((r >= 4).sum()),
                n_cells=len(r),
            )
        )
    rows.sort(key=lambda row: (row.mean_rank, row.method))
    return RankTable(tuple(rows), excluded)
