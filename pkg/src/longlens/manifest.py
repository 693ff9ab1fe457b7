"""Dataset manifest: JSON schema, validation, and sequence loading.

A manifest lists eyes, each with strictly increasing visit times and paths
(relative to the manifest file) to image/mask/keypoint files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError
from .raster import Scale, load_image, load_mask
from .temporal import EyeSequence, Frame, Laterality


@dataclass(frozen=True)
class VisitRecord:
    t: float
    image_path: str
    mask_path: str
    keypoints_path: str | None = None


@dataclass(frozen=True)
class EyeRecord:
    eye_id: str
    laterality: str | None
    visits: tuple[VisitRecord, ...]


@dataclass(frozen=True)
class Manifest:
    dataset_id: str
    scale: Scale
    eyes: tuple[EyeRecord, ...]
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


def _validate(man: Manifest, check_paths: bool = True, strict_times: bool = True) -> None:
    for eye in man.eyes:
        if len(eye.visits) < 1:
            raise ManifestError(f"eye {eye.eye_id!r} has no visits")
        ts = [v.t for v in eye.visits]
        # ingest dedupes same-timestamp duplicates, so it loads non-strictly
        if strict_times and any(b <= a for a, b in zip(ts, ts[1:])):
            raise ManifestError(f"eye {eye.eye_id!r}: visit times must strictly increase")
        if not strict_times and any(b < a for a, b in zip(ts, ts[1:])):
            raise ManifestError(f"eye {eye.eye_id!r}: visit times must be sorted")
        if eye.laterality not in (None, "left", "right"):
            raise ManifestError(f"eye {eye.eye_id!r}: bad laterality {eye.laterality!r}")
        if check_paths:
            for v in eye.visits:
                for p in (v.image_path, v.mask_path, v.keypoints_path):
                    if p is not None and not man.resolve(p).exists():
                        raise ManifestError(f"eye {eye.eye_id!r}: missing file {p}")


def load_manifest(path, check_paths: bool = True, strict_times: bool = True) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        eyes = []
        for e in doc["eyes"]:
            visits = tuple(
                VisitRecord(
                    t=float(v["t"]),
                    image_path=str(v["image_path"]),
                    mask_path=str(v["mask_path"]),
                    keypoints_path=(
                        str(v["keypoints_path"]) if v.get("keypoints_path") else None
                    ),
                )
                for v in e["visits"]
            )
            eyes.append(EyeRecord(str(e["eye_id"]), e.get("laterality"), visits))
        man = Manifest(
            dataset_id=str(doc["dataset_id"]),
            scale=Scale(doc["scale"]),
            eyes=tuple(eyes),
            root=path.parent,
        )
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"bad manifest {path}: {exc}") from exc
    _validate(man, check_paths=check_paths, strict_times=strict_times)
    return man


def manifest_to_dict(man: Manifest) -> dict:
    return {
        "dataset_id": man.dataset_id,
        "scale": man.scale.value,
        "eyes": [
            {
                "eye_id": e.eye_id,
                "laterality": e.laterality,
                "visits": [
                    {
                        "t": v.t,
                        "image_path": v.image_path,
                        "mask_path": v.mask_path,
                        **(
                            {"keypoints_path": v.keypoints_path}
                            if v.keypoints_path
                            else {}
                        ),
                    }
                    for v in e.visits
                ],
            }
            for e in man.eyes
        ],
    }


def save_manifest(man: Manifest, path) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_dict(man), indent=2, sort_keys=True) + "\n"
    )


def load_eye_sequence(man: Manifest, eye: EyeRecord) -> EyeSequence:
    lat = Laterality(eye.laterality) if eye.laterality else None
    frames = tuple(
        Frame(
            image=load_image(man.resolve(v.image_path)),
            mask=load_mask(man.resolve(v.mask_path)),
            t=v.t,
        )
        for v in eye.visits
    )
    return EyeSequence(eye.eye_id, frames, lat)
