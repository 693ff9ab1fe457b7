"""
Pixel metrics and the change-map similarity score
==================================================

A prediction can look almost identical to the target and still say nothing
about *progression*: when visits barely differ, copying the last visit already
scores a high SSIM. The change-map score compares the predicted change
(prediction - last visit) with the true change (target - last visit) inside
the validity-mask bounding box, with a data range of 2.0 for the [-1, 1]
difference images. This script builds a toy progression and shows the two
views disagreeing.
"""

import numpy as np

from longlens import GrayImage, Scale, ValidityMask, delta_ssim, mae, masked_ssim, psnr

rng = np.random.default_rng(0)

# a "retina": smooth bright field with a dark lesion that grows between visits
size = 96
yy, xx = np.mgrid[0:size, 0:size]
c = (size - 1) / 2
base = 0.6 + 0.1 * np.cos(xx / 17.0) * np.sin(yy / 23.0)


def frame(lesion_radius):
    px = base.copy()
    px[(yy - c) ** 2 + (xx - c) ** 2 <= lesion_radius ** 2] = 0.1
    return GrayImage(np.clip(px, 0, 1), Scale.UNIT)


last = frame(10.0)      # most recent history frame
target = frame(14.0)    # true follow-up: lesion grew
mask = ValidityMask(np.hypot(yy - c, xx - c) <= 44)

# method 1: copy the last visit (no prediction at all)
copy_pred = last
# method 2: predict the growth, but at slightly the wrong radius
grow_pred = frame(13.0)

print("pixel-level view (can barely tell the methods apart):")
for name, pred in [("copy-last", copy_pred), ("growth", grow_pred)]:
    print(
        f"  {name:>9}: mae {mae(pred, target, mask):.4f}"
        f"  psnr {psnr(pred, target, mask):6.2f} dB"
        f"  ssim {masked_ssim(pred, target, mask):.4f}"
    )

print("change-map view (progression signal only):")
for name, pred in [("copy-last", copy_pred), ("growth", grow_pred)]:
    print(f"  {name:>9}: delta-ssim {delta_ssim(pred, target, last, mask):.4f}")

# copy-last's change map is identically zero, so its delta-ssim collapses
# toward the stabilization constant while the growth prediction scores high.
