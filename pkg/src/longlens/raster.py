"""Grayscale image / binary mask value types, file I/O, and pixel-level primitives.

Images are stored row-major as 2-D float64 arrays. Two intensity scales are
supported: ``Scale.UNIT`` (values in [0, 1]) and ``Scale.BYTE`` (values in
[0, 255]). All instances are immutable after construction and safe to share
across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionError,
    EmptyMaskError,
    FormatError,
    SingularTransformError,
)


class Scale(Enum):
    UNIT = "unit"
    BYTE = "byte"


class MorphOp(Enum):
    ERODE = "erode"
    DILATE = "dilate"
    CLOSE = "close"
    OPEN = "open"


class Connectivity(Enum):
    FOUR = 4
    EIGHT = 8


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle: rows [row0, row0+height), cols [col0, col0+width)."""

    row0: int
    col0: int
    height: int
    width: int

    def slices(self) -> tuple[slice, slice]:
        return (
            slice(self.row0, self.row0 + self.height),
            slice(self.col0, self.col0 + self.width),
        )


def _frozen_array(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster with an explicit intensity scale."""

    pixels: np.ndarray
    scale: Scale

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise DimensionError(f"image must be 2-D, got shape {arr.shape}")
        arr = _frozen_array(arr, np.float64)
        hi = 1.0 if self.scale is Scale.UNIT else 255.0
        lo, top = float(arr.min(initial=0.0)), float(arr.max(initial=0.0))
        if arr.size and (lo < 0.0 or top > hi):
            raise ValueError(
                f"{self.scale.value}-scale intensities out of range [{lo}, {top}]"
            )
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_unit(self) -> "GrayImage":
        if self.scale is Scale.UNIT:
            return self
        return GrayImage(self.pixels / 255.0, Scale.UNIT)

    def to_byte(self) -> "GrayImage":
        """Convert to byte scale; unit values are quantized with round-half-up."""
        if self.scale is Scale.BYTE:
            return self
        return GrayImage(np.floor(self.pixels * 255.0 + 0.5), Scale.BYTE)

    def quantized(self) -> "GrayImage":
        """Round byte-scale intensities to integer levels (half-up)."""
        if self.scale is not Scale.BYTE:
            raise ValueError("quantized() applies to byte-scale images")
        return GrayImage(np.floor(self.pixels + 0.5), Scale.BYTE)


@dataclass(frozen=True)
class ValidityMask:
    """Binary raster marking pixels that carry real signal."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "bits", _frozen_array(arr, bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def valid_count(self) -> int:
        return int(self.bits.sum())

    def bbox(self) -> Rect:
        """Tight bounding box of the true pixels."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        if rows.size == 0:
            raise EmptyMaskError("bbox of an empty mask")
        return Rect(
            int(rows[0]),
            int(cols[0]),
            int(rows[-1] - rows[0] + 1),
            int(cols[-1] - cols[0] + 1),
        )

    @staticmethod
    def full(height: int, width: int) -> "ValidityMask":
        return ValidityMask(np.ones((height, width), dtype=bool))


class ElementShape(Enum):
    ELLIPSE = "ellipse"


@dataclass(frozen=True)
class StructuringElement:
    """Elliptic structuring element with odd dimensions.

    Pixel (x, y) belongs iff ((x-cx)/a)^2 + ((y-cy)/b)^2 <= 1 with
    a = (width-1)/2 and b = (height-1)/2.
    """

    width: int
    height: int
    shape: ElementShape = ElementShape.ELLIPSE

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.width % 2 == 0 or self.height % 2 == 0:
            raise ValueError("element dimensions must be odd and >= 1")

    def footprint(self) -> np.ndarray:
        a = (self.width - 1) / 2.0
        b = (self.height - 1) / 2.0
        dx = np.arange(self.width, dtype=np.float64) - a
        dy = np.arange(self.height, dtype=np.float64) - b
        # width or height 1 means a/b = 0 and dx/dy = [0]: term vanishes
        tx = (dx / a) ** 2 if a > 0 else np.zeros(1)
        ty = (dy / b) ** 2 if b > 0 else np.zeros(1)
        return ty[:, None] + tx[None, :] <= 1.0


ELLIPSE_5x5 = StructuringElement(5, 5)
ELLIPSE_51x51 = StructuringElement(51, 51)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_LLF1_MAGIC = b"LLFLOAT1"


def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse `count` whitespace-delimited ASCII integers after the magic,
    honoring '#' comments; returns (values, offset past the single whitespace
    that terminates the header)."""
    values: list[int] = []
    i = 2  # past "P5"
    n = len(data)
    while len(values) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        tok = data[i:j]
        if not tok.isdigit():
            raise FormatError(f"bad PGM header token {tok!r}")
        values.append(int(tok))
        i = j
    if i >= n or not data[i : i + 1].isspace():
        raise FormatError("PGM header not terminated by whitespace")
    return values, i + 1


def load_image(path) -> GrayImage:
    """Load an 8-bit grayscale PGM (P5) or raw-float LLF1 image."""
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        (w, h, maxval), off = _read_pgm_tokens(data, 3)
        if maxval != 255:
            raise FormatError(f"PGM maxval must be 255, got {maxval}")
        raw = data[off : off + w * h]
        if len(raw) != w * h:
            raise FormatError("PGM pixel payload truncated")
        px = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
        return GrayImage(px, Scale.BYTE)
    if data[:8] == _LLF1_MAGIC:
        if len(data) < 16:
            raise FormatError("LLF1 header truncated")
        w, h = struct.unpack("<II", data[8:16])
        raw = data[16 : 16 + 4 * w * h]
        if len(raw) != 4 * w * h:
            raise FormatError("LLF1 pixel payload truncated")
        px = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise FormatError("LLF1 intensities outside [0, 1]")
        return GrayImage(px, Scale.UNIT)
    raise FormatError(f"unrecognized image magic {data[:8]!r}")


def save_image(img: GrayImage, path) -> None:
    """Write PGM for .pgm paths (byte scale) or LLF1 for .llf1 (unit scale)."""
    path = Path(path)
    if path.suffix == ".pgm":
        b = img.to_byte()
        px = np.floor(b.pixels + 0.5).astype(np.uint8)
        header = f"P5\n{b.width} {b.height}\n255\n".encode("ascii")
        path.write_bytes(header + px.tobytes())
    elif path.suffix == ".llf1":
        u = img.to_unit()
        px = u.pixels.astype("<f4")
        # f32 rounding can graze just past 1.0; clamp back into contract range
        px = np.clip(px, 0.0, 1.0)
        header = _LLF1_MAGIC + struct.pack("<II", u.width, u.height)
        path.write_bytes(header + px.tobytes())
    else:
        raise FormatError(f"unsupported image extension {path.suffix!r}")


def load_mask(path) -> ValidityMask:
    img = load_image(path)
    if img.scale is not Scale.BYTE:
        raise FormatError("masks must be stored as PGM")
    return ValidityMask(img.pixels > 127)


def save_mask(mask: ValidityMask, path) -> None:
    save_image(GrayImage(mask.bits * 255.0, Scale.BYTE), path)


# ---------------------------------------------------------------------------
# Binary morphology / components / hull
# ---------------------------------------------------------------------------

def morphology(mask: ValidityMask, element: StructuringElement, op: MorphOp) -> ValidityMask:
    """Binary morphology with out-of-bounds treated as false."""
    if element.width > mask.width or element.height > mask.height:
        raise DimensionError(
            f"element {element.width}x{element.height} exceeds mask "
            f"{mask.width}x{mask.height}"
        )
    fp = element.footprint()
    bits = mask.bits
    if op is MorphOp.ERODE:
        out = ndimage.binary_erosion(bits, structure=fp, border_value=0)
    elif op is MorphOp.DILATE:
        out = ndimage.binary_dilation(bits, structure=fp, border_value=0)
    else:
        # composites run on a virtually padded plane so the intermediate is
        # not cropped; keeps Close extensive and Open/Close idempotent
        ky, kx = element.height // 2, element.width // 2
        padded = np.pad(bits, ((ky, ky), (kx, kx)))
        if op is MorphOp.CLOSE:
            mid = ndimage.binary_dilation(padded, structure=fp, border_value=0)
            out = ndimage.binary_erosion(mid, structure=fp, border_value=0)
        elif op is MorphOp.OPEN:
            mid = ndimage.binary_erosion(padded, structure=fp, border_value=0)
            out = ndimage.binary_dilation(mid, structure=fp, border_value=0)
        else:  # pragma: no cover
            raise ValueError(op)
        out = out[ky : ky + bits.shape[0], kx : kx + bits.shape[1]]
    return ValidityMask(out)


@dataclass(frozen=True)
class Component:
    """One connected set of true pixels; indices are sorted row-major flat offsets."""

    indices: np.ndarray
    area: int

    def to_mask(self, height: int, width: int) -> ValidityMask:
        bits = np.zeros(height * width, dtype=bool)
        bits[self.indices] = True
        return ValidityMask(bits.reshape(height, width))


_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def connected_components(
    mask: ValidityMask, connectivity: Connectivity = Connectivity.EIGHT
) -> list[Component]:
    """Maximal connected sets of true pixels, ordered (area desc, first pixel asc)."""
    structure = _STRUCT_4 if connectivity is Connectivity.FOUR else _STRUCT_8
    labels, n = ndimage.label(mask.bits, structure=structure)
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    boundaries = np.searchsorted(sorted_labels, np.arange(1, n + 2))
    comps = []
    for lab in range(1, n + 1):
        idx = order[boundaries[lab - 1] : boundaries[lab]]
        idx = np.sort(idx)
        comps.append(Component(_frozen_array(idx, np.int64), int(idx.size)))
    comps.sort(key=lambda c: (-c.area, int(c.indices[0])))
    return comps


def _hull_vertices(points: np.ndarray) -> np.ndarray:
    """Convex hull (monotone chain), CCW in (x, y) with y down; collinear inputs
    collapse to the two extreme points."""
    pts = np.unique(points.astype(np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hull_area(points: np.ndarray) -> float:
    """Area of the convex hull of (x, y) points (shoelace; 0 for degenerate)."""
    verts = _hull_vertices(np.asarray(points, dtype=np.float64))
    if len(verts) < 3:
        return 0.0
    x, y = verts[:, 0], verts[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2.0


def convex_hull_mask(mask: ValidityMask) -> ValidityMask:
    """Filled convex hull of all true pixel centers; always a superset of input."""
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        raise EmptyMaskError("convex hull of an empty mask")
    pts = np.column_stack([cols, rows]).astype(np.float64)
    verts = _hull_vertices(pts)
    eps = 1e-9
    h, w = mask.bits.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    xmin, ymin = verts.min(axis=0)
    xmax, ymax = verts.max(axis=0)
    inside = (gx >= xmin - eps) & (gx <= xmax + eps) & (gy >= ymin - eps) & (gy <= ymax + eps)
    if len(verts) >= 2:
        for i in range(len(verts)):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % len(verts)]
            cross = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
            if len(verts) == 2:
                inside &= np.abs(cross) <= eps * max(1.0, abs(x1 - x0) + abs(y1 - y0))
                break
            inside &= cross >= -eps
    out = inside | mask.bits
    return ValidityMask(out)


# ---------------------------------------------------------------------------
# Warping
# ---------------------------------------------------------------------------

def as_matrix(transform) -> np.ndarray:
    """Accept a TransformModel-like object (with .matrix) or a raw 3x3 array."""
    m = getattr(transform, "matrix", transform)
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise DimensionError(f"transform must be 3x3, got {m.shape}")
    return m


def _inverse(transform) -> np.ndarray:
    m = as_matrix(transform)
    if abs(np.linalg.det(m[:2, :2])) < 1e-12 or abs(np.linalg.det(m)) < 1e-12:
        raise SingularTransformError("transform is not invertible")
    if m[2, 0] == 0.0 and m[2, 1] == 0.0 and m[2, 2] == 1.0:
        # closed-form affine inverse keeps identity/integer shifts exact
        a, b, tx = m[0]
        c, d, ty = m[1]
        det = a * d - b * c
        inv = np.array(
            [
                [d / det, -b / det, (b * ty - d * tx) / det],
                [-c / det, a / det, (c * tx - a * ty) / det],
                [0.0, 0.0, 1.0],
            ]
        )
        return inv
    return np.linalg.inv(m)


def _sample_bilinear(src: np.ndarray, transform, out_size: tuple[int, int]) -> np.ndarray:
    """Inverse-mapping bilinear resample; samples outside the source are 0."""
    minv = _inverse(transform)
    out_h, out_w = out_size
    h, w = src.shape
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    denom = minv[2, 0] * gx + minv[2, 1] * gy + minv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (minv[0, 0] * gx + minv[0, 1] * gy + minv[0, 2]) / denom
        sy = (minv[1, 0] * gx + minv[1, 1] * gy + minv[1, 2]) / denom
    # snap tolerance keeps exact-boundary samples from dropping to 0 on fp noise
    eps = 1e-9
    valid = (
        (denom > 1e-12)
        & (sx >= -eps)
        & (sx <= w - 1 + eps)
        & (sy >= -eps)
        & (sy <= h - 1 + eps)
    )
    sx = np.clip(np.where(valid, sx, 0.0), 0.0, w - 1)
    sy = np.clip(np.where(valid, sy, 0.0), 0.0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    val = (
        (1.0 - fx) * (1.0 - fy) * src[y0, x0]
        + fx * (1.0 - fy) * src[y0, x1]
        + (1.0 - fx) * fy * src[y1, x0]
        + fx * fy * src[y1, x1]
    )
    return np.where(valid, val, 0.0)


def warp_bilinear(img: GrayImage, transform, out_size: tuple[int, int]) -> GrayImage:
    """Warp an image through `transform` (source -> output coordinates).

    `out_size` is (height, width). Output pixel (x, y) samples the source at
    T^-1 (x, y) with bilinear interpolation; out-of-source samples become 0.
    """
    return GrayImage(_sample_bilinear(img.pixels, transform, out_size), img.scale)


def warp_mask(mask: ValidityMask, transform, out_size: tuple[int, int]) -> ValidityMask:
    """Warp a mask as a float field and rebinarize at > 0.5."""
    val = _sample_bilinear(mask.bits.astype(np.float64), transform, out_size)
    return ValidityMask(val > 0.5)


def hflip_image(img: GrayImage) -> GrayImage:
    return GrayImage(img.pixels[:, ::-1], img.scale)


def hflip_mask(mask: ValidityMask) -> ValidityMask:
    return ValidityMask(mask.bits[:, ::-1])


def center_crop(img: GrayImage, frac: float) -> GrayImage:
    """Keep the centered `frac` portion of each axis."""
    r = _crop_rect(img.height, img.width, frac)
    return GrayImage(img.pixels[r.slices()], img.scale)


def center_crop_mask(mask: ValidityMask, frac: float) -> ValidityMask:
    r = _crop_rect(mask.height, mask.width, frac)
    return ValidityMask(mask.bits[r.slices()])


def _crop_rect(h: int, w: int, frac: float) -> Rect:
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"crop fraction must be in (0, 1], got {frac}")
    ch = max(1, int(round(h * frac)))
    cw = max(1, int(round(w * frac)))
    return Rect((h - ch) // 2, (w - cw) // 2, ch, cw)
