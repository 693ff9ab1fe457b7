"""Synthetic longitudinal phantom generator.

Each eye is a bright fundus disc with a central dark lesion growing at a
fixed rate, optional per-visit multiplicative illumination noise, and fixed
per-eye anatomy texture. Ground-truth lesion masks and synthetic keypoint
files are emitted alongside, so every pipeline command can run without
clinical data. Fully deterministic under the spec seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .manifest import EyeRecord, Manifest, VisitRecord, save_manifest
from .raster import GrayImage, Scale, ValidityMask, save_image, save_mask
from .registration import MODEL_SIZE, KeypointSet, save_keypoints

FUNDUS_LEVEL = 150.0
LESION_LEVEL = 25.0
TEXTURE_AMPLITUDE = 30.0
FUNDUS_RADIUS_FRAC = 0.46


@dataclass(frozen=True)
class PhantomSpec:
    n_eyes: int = 10
    frames_per_eye: int = 3
    image_size: int = 96
    lesion_growth_rate: float = 4.0  # lesion radius px per year
    noise_amplitude: float = 0.0  # std of the multiplicative illumination field
    visit_interval_min: float = 0.1  # years
    visit_interval_max: float = 1.5
    lesion_radius0: float = 8.0
    n_keypoints: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        if self.lesion_growth_rate < 0 or self.noise_amplitude < 0:
            raise ValueError("rates must be >= 0")
        if not 0 < self.visit_interval_min <= self.visit_interval_max:
            raise ValueError("bad visit interval range")
        if self.frames_per_eye < 1 or self.n_eyes < 1:
            raise ValueError("need at least one frame and one eye")


def _disc(size: int, radius: float) -> np.ndarray:
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - c) ** 2 + (xx - c) ** 2 <= radius ** 2


def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    """Zero-mean, unit-std low-frequency field."""
    f = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (size, size)), sigma)
    sd = f.std()
    return (f - f.mean()) / (sd if sd > 0 else 1.0)


@dataclass(frozen=True)
class PhantomEye:
    eye_id: str
    laterality: str
    times: tuple[float, ...]
    images: tuple[GrayImage, ...]
    fov_mask: ValidityMask
    lesion_masks: tuple[ValidityMask, ...]
    keypoints: tuple[KeypointSet, ...]


def generate_eye(spec: PhantomSpec, index: int) -> PhantomEye:
    rng = np.random.default_rng([spec.rng_seed, index])
    s = spec.image_size
    fundus = _disc(s, FUNDUS_RADIUS_FRAC * s)
    texture = _smooth_field(rng, s, s / 16.0)
    base = np.where(fundus, FUNDUS_LEVEL + TEXTURE_AMPLITUDE * texture, 0.0)

    times = [0.0]
    for _ in range(spec.frames_per_eye - 1):
        times.append(
            times[-1]
            + float(rng.uniform(spec.visit_interval_min, spec.visit_interval_max))
        )

    # fixed anatomical keypoint positions with fixed descriptors per eye
    n_kp = spec.n_keypoints
    angles = rng.uniform(0, 2 * np.pi, n_kp)
    radii = np.sqrt(rng.uniform(0.05, 0.9, n_kp)) * FUNDUS_RADIUS_FRAC * s
    c = (s - 1) / 2.0
    crop_pts = np.column_stack([c + radii * np.cos(angles), c + radii * np.sin(angles)])
    desc = rng.normal(size=(n_kp, 256))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    lb_scale = MODEL_SIZE / s
    model_pts = crop_pts * lb_scale

    images, lesions, kpsets = [], [], []
    for k, t in enumerate(times):
        lesion_r = spec.lesion_radius0 + spec.lesion_growth_rate * t
        lesion = _disc(s, lesion_r) & fundus
        px = base.copy()
        px[lesion] = LESION_LEVEL
        if spec.noise_amplitude > 0:
            illum = 1.0 + spec.noise_amplitude * _smooth_field(rng, s, s / 8.0)
            px = px * illum
        px = np.clip(np.floor(px + 0.5), 0.0, 255.0)
        images.append(GrayImage(px, Scale.BYTE))
        lesions.append(ValidityMask(lesion))
        kpsets.append(
            KeypointSet(
                points=model_pts,
                descriptors=desc,
                scale=lb_scale,
                pad=(0.0, 0.0),
                image_id=f"eye{index:03d}_v{k}",
            )
        )
    return PhantomEye(
        eye_id=f"eye{index:03d}",
        laterality="right" if index % 2 == 0 else "left",
        times=tuple(times),
        images=tuple(images),
        fov_mask=ValidityMask(fundus),
        lesion_masks=tuple(lesions),
        keypoints=tuple(kpsets),
    )


def write_phantom_dataset(spec: PhantomSpec, out_dir) -> Manifest:
    """Render the dataset to disk and return its manifest."""
    out = Path(out_dir)
    for sub in ("images", "masks", "lesions", "keypoints"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    eyes = []
    for i in range(spec.n_eyes):
        eye = generate_eye(spec, i)
        visits = []
        for k in range(len(eye.times)):
            stem = f"{eye.eye_id}_{k}"
            img_rel = f"images/{stem}.pgm"
            mask_rel = f"masks/{stem}.pgm"
            kp_rel = f"keypoints/{stem}.json"
            save_image(eye.images[k], out / img_rel)
            save_mask(eye.fov_mask, out / mask_rel)
            save_mask(eye.lesion_masks[k], out / f"lesions/{stem}.pgm")
            save_keypoints(eye.keypoints[k], out / kp_rel)
            visits.append(
                VisitRecord(
                    t=eye.times[k],
                    image_path=img_rel,
                    mask_path=mask_rel,
                    keypoints_path=kp_rel,
                )
            )
        eyes.append(EyeRecord(eye.eye_id, eye.laterality, tuple(visits)))
    man = Manifest(
        dataset_id=f"phantom-seed{spec.rng_seed}",
        scale=Scale.BYTE,
        eyes=tuple(eyes),
        root=out,
    )
    save_manifest(man, out / "manifest.json")
    return man
