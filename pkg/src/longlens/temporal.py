"""Reference predictors over eye sequences and the continuous time-delta encoding."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegenerateTimesError,
    EmptySequenceError,
    InsufficientHistoryError,
    NegativeDeltaError,
)
from .raster import GrayImage, Scale, ValidityMask

EMBED_DIM = 256
N_FREQS = EMBED_DIM // 2


class Laterality(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Frame:
    image: GrayImage
    mask: ValidityMask
    t: float  # years since first visit


@dataclass(frozen=True)
class EyeSequence:
    """Ordered (image, mask, timestamp) frames for one eye."""

    eye_id: str
    frames: tuple[Frame, ...]
    laterality: Laterality | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 1:
            raise EmptySequenceError(f"eye {self.eye_id!r} has no frames")
        ts = [f.t for f in frames]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise ValueError(f"eye {self.eye_id!r}: timestamps must strictly increase")
        shape = frames[0].image.pixels.shape
        for f in frames:
            if f.image.pixels.shape != shape or f.mask.bits.shape != shape:
                raise ValueError(f"eye {self.eye_id!r}: frames must share dimensions")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


def copy_last(seq: EyeSequence, t_star: float) -> GrayImage:
    """The no-prediction baseline: the most recent history frame, unchanged."""
    if len(seq.frames) == 0:  # unreachable through the constructor; defensive
        raise EmptySequenceError("empty sequence")
    if t_star < seq.frames[-1].t:
        raise ValueError("t_star must not precede the last history frame")
    return seq.frames[-1].image


def linear_spline(seq: EyeSequence, t_star: float) -> GrayImage:
    """Per-pixel line through the two most recent frames, extrapolated and
    clamped to [0, 1]."""
    if len(seq.frames) < 2:
        raise InsufficientHistoryError("linear spline needs >= 2 frames")
    prev, last = seq.frames[-2], seq.frames[-1]
    if last.t == prev.t:
        raise DegenerateTimesError("last two frames share a timestamp")
    a = last.image.to_unit().pixels
    b = prev.image.to_unit().pixels
    slope_dt = (t_star - last.t) / (last.t - prev.t)
    out = a + (a - b) * slope_dt
    return GrayImage(np.clip(out, 0.0, 1.0), Scale.UNIT)


def frequencies() -> np.ndarray:
    """Log-uniform frequencies f_i = exp(-i*log(100)/127), i = 0..127."""
    i = np.arange(N_FREQS, dtype=np.float64)
    return np.exp(-i * np.log(100.0) / (N_FREQS - 1))


@dataclass(frozen=True)
class DeltaEmbedding:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (EMBED_DIM,):
            raise ValueError(f"embedding must have {EMBED_DIM} values")
        object.__setattr__(self, "values", v)


def delta_embedding(delta_t: float) -> DeltaEmbedding:
    """Interleaved sin/cos encoding of log(1 + delta_t) at 128 frequencies."""
    if delta_t < 0:
        raise NegativeDeltaError(f"delta_t must be >= 0, got {delta_t}")
    phase = np.log1p(delta_t) * frequencies()
    values = np.empty(EMBED_DIM, dtype=np.float64)
    values[0::2] = np.sin(phase)
    values[1::2] = np.cos(phase)
    return DeltaEmbedding(values)
