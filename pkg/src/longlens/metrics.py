"""Masked pixel-fidelity metrics (MAE, PSNR, SSIM) and change-map delta-SSIM.

All metrics operate on unit-scale images. SSIM uses a uniform square window
with population (divide-by-n) window statistics; only fully interior window
positions contribute. Delta-SSIM compares the ground-truth change map
(target - last) with the predicted change map (pred - last) inside the
bounding box of the validity mask, with a data range of 2.0 to reflect the
[-1, 1] span of difference images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyMaskError, RegionTooSmallError
from .raster import GrayImage, Rect, Scale, ValidityMask


@dataclass(frozen=True)
class SsimConfig:
    """Window size and stabilization constants for SSIM.

    C1 = (k1 * data_range)^2 and C2 = (k2 * data_range)^2.
    """

    window: int = 7
    data_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("SSIM window must be odd and >= 3")
        if self.data_range <= 0:
            raise ValueError("data_range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2


DELTA_SSIM_CONFIG = SsimConfig(data_range=2.0)


def _check_pair(pred: GrayImage, target: GrayImage) -> None:
    if pred.pixels.shape != target.pixels.shape:
        raise DimensionError(
            f"image shapes differ: {pred.pixels.shape} vs {target.pixels.shape}"
        )
    if pred.scale is not Scale.UNIT or target.scale is not Scale.UNIT:
        raise ValueError("fidelity metrics expect unit-scale images")


def _check_mask(img: GrayImage, mask: ValidityMask) -> None:
    if mask.bits.shape != img.pixels.shape:
        raise DimensionError(
            f"mask shape {mask.bits.shape} does not match image {img.pixels.shape}"
        )
    if mask.valid_count() == 0:
        raise EmptyMaskError("metric over an empty mask")


def mae(pred: GrayImage, target: GrayImage, mask: ValidityMask) -> float:
    """Mean absolute error over valid pixels."""
    _check_pair(pred, target)
    _check_mask(pred, mask)
    diff = np.abs(pred.pixels - target.pixels)
    return float(diff[mask.bits].mean())


def psnr(pred: GrayImage, target: GrayImage, mask: ValidityMask, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over valid pixels.

    Returns +inf when the masked MSE is exactly zero; aggregation layers must
    exclude infinities from means and report their count.
    """
    _check_pair(pred, target)
    _check_mask(pred, mask)
    diff = pred.pixels - target.pixels
    mse = float((diff[mask.bits] ** 2).mean())
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(data_range ** 2 / mse))


def _window_sums(x: np.ndarray, w: int) -> np.ndarray:
    """Sums over all fully interior w x w windows via a padded integral image."""
    c = np.cumsum(np.cumsum(x, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[w:, w:] - c[:-w, w:] - c[w:, :-w] + c[:-w, :-w]


def ssim(
    a: GrayImage | np.ndarray,
    b: GrayImage | np.ndarray,
    cfg: SsimConfig = SsimConfig(),
    region: Rect | None = None,
) -> float:
    """Mean structural similarity index over a rectangular region.

    Parameters
    ----------
    a, b : GrayImage or ndarray
        Images (or raw fields, e.g. change maps) of identical shape.
    cfg : SsimConfig
        Window and constants; ``cfg.data_range`` must match the value span.
    region : Rect, optional
        Evaluation region; defaults to the whole frame. Must be at least
        window x window.

    Returns
    -------
    float
        Mean over all fully interior window positions of
        ((2*mu_a*mu_b + C1) * (2*cov + C2)) /
        ((mu_a^2 + mu_b^2 + C1) * (var_a + var_b + C2)).
    """
    xa = a.pixels if isinstance(a, GrayImage) else np.asarray(a, dtype=np.float64)
    xb = b.pixels if isinstance(b, GrayImage) else np.asarray(b, dtype=np.float64)
    if xa.shape != xb.shape:
        raise DimensionError(f"image shapes differ: {xa.shape} vs {xb.shape}")
    if region is None:
        region = Rect(0, 0, xa.shape[0], xa.shape[1])
    if (
        region.row0 < 0
        or region.col0 < 0
        or region.row0 + region.height > xa.shape[0]
        or region.col0 + region.width > xa.shape[1]
    ):
        raise DimensionError("region exceeds image bounds")
    if region.height < cfg.window or region.width < cfg.window:
        raise RegionTooSmallError(
            f"region {region.height}x{region.width} smaller than window {cfg.window}"
        )
    xa = xa[region.slices()]
    xb = xb[region.slices()]
    # shift by the region means: variances/covariance are shift-invariant and
    # the integral images then accumulate small values (better conditioning)
    sa = float(xa.mean())
    sb = float(xb.mean())
    za = xa - sa
    zb = xb - sb
    w = cfg.window
    n = float(w * w)
    s_a = _window_sums(za, w)
    s_b = _window_sums(zb, w)
    s_aa = _window_sums(za * za, w)
    s_bb = _window_sums(zb * zb, w)
    s_ab = _window_sums(za * zb, w)
    mu_a = s_a / n
    mu_b = s_b / n
    var_a = s_aa / n - mu_a ** 2
    var_b = s_bb / n - mu_b ** 2
    cov = s_ab / n - mu_a * mu_b
    mu_a = mu_a + sa
    mu_b = mu_b + sb
    c1, c2 = cfg.c1, cfg.c2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def masked_ssim(
    a: GrayImage, b: GrayImage, mask: ValidityMask, cfg: SsimConfig = SsimConfig()
) -> float:
    """SSIM evaluated on the bounding box of the validity mask."""
    _check_mask(a, mask)
    return ssim(a, b, cfg, mask.bbox())


@dataclass(frozen=True)
class ChangeMaps:
    """Signed change maps and the validity-mask bounding box they share."""

    delta_gt: np.ndarray
    delta_pred: np.ndarray
    bbox: Rect


def change_maps(
    pred: GrayImage, target: GrayImage, last: GrayImage, mask: ValidityMask
) -> ChangeMaps:
    _check_pair(pred, target)
    _check_pair(pred, last)
    _check_mask(pred, mask)
    return ChangeMaps(
        delta_gt=target.pixels - last.pixels,
        delta_pred=pred.pixels - last.pixels,
        bbox=mask.bbox(),
    )


def delta_ssim(
    pred: GrayImage,
    target: GrayImage,
    last: GrayImage,
    mask: ValidityMask,
    cfg: SsimConfig = DELTA_SSIM_CONFIG,
) -> float:
    """SSIM between predicted and ground-truth change maps (data range 2.0)."""
    if cfg.data_range != 2.0:
        raise ValueError("delta_ssim requires data_range == 2.0")
    maps = change_maps(pred, target, last, mask)
    return ssim(maps.delta_pred, maps.delta_gt, cfg, maps.bbox)
