"""Geometric registration and harmonization core operating on precomputed
keypoints: FOV mask estimation, letterboxing, descriptor matching, multi-model
RANSAC with guards and promotion, quality gating, anchor selection, histogram
matching against a calibrated Gaussian-mixture reference, and chirality
normalization.

Transforms are estimated in the 1024x1024 letterbox model space and mapped
back to crop space analytically through the stored (scale, pad) parameters.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import (
    DegenerateConfigurationError,
    DimensionError,
    EmptyListError,
    EmptyMaskError,
    FormatError,
    InsufficientMatchesError,
    NoViableModelError,
    UnknownLateralityError,
)
from .raster import (
    Connectivity,
    GrayImage,
    MorphOp,
    Scale,
    StructuringElement,
    ValidityMask,
    connected_components,
    convex_hull_mask,
    hflip_image,
    hflip_mask,
    hull_area,
    morphology,
    warp_bilinear,
)
from .temporal import EyeSequence, Frame, Laterality

MODEL_SIZE = 1024
DESCRIPTOR_DIM = 256
FOV_THRESHOLD = 2.0
FOV_CLOSE_ELEMENT = StructuringElement(51, 51)


# ---------------------------------------------------------------------------
# FOV mask and letterboxing
# ---------------------------------------------------------------------------

def estimate_fov_mask(img: GrayImage) -> ValidityMask:
    """Usable-field mask: low threshold, 51x51 closing, largest component,
    convex hull fill (keeps dark structures inside the field)."""
    px = img.to_byte().pixels
    raw = ValidityMask(px > FOV_THRESHOLD)
    if raw.valid_count() == 0:
        raise EmptyMaskError("image is entirely background")
    element = FOV_CLOSE_ELEMENT
    limit = min(raw.height, raw.width)
    if limit < element.width:
        # frames smaller than the element (tiny test phantoms): shrink to fit
        side = limit if limit % 2 == 1 else limit - 1
        element = StructuringElement(side, side)
    closed = morphology(raw, element, MorphOp.CLOSE)
    comps = connected_components(closed, Connectivity.EIGHT)
    largest = comps[0].to_mask(closed.height, closed.width)
    return convex_hull_mask(largest)


@dataclass(frozen=True)
class Letterboxed:
    image: GrayImage
    scale: float
    pad: tuple[float, float]  # (px, py)


def letterbox_transform(scale: float, pad: tuple[float, float]) -> np.ndarray:
    """Affine mapping crop coordinates into model space: m = c*scale + pad."""
    return np.array(
        [[scale, 0.0, pad[0]], [0.0, scale, pad[1]], [0.0, 0.0, 1.0]]
    )


def letterbox(img: GrayImage, model_size: int = MODEL_SIZE) -> Letterboxed:
    """Aspect-preserving bilinear resize to model_size on the long side with
    centered zero padding; (scale, pad) back-map model coordinates
    analytically."""
    w, h = img.width, img.height
    if w < 2 or h < 2:
        raise DimensionError("letterbox needs at least a 2x2 image")
    scale = model_size / max(w, h)
    new_w = int(round(w * scale))
    new_h = int(round(h * scale))
    pad = (float((model_size - new_w) // 2), float((model_size - new_h) // 2))
    t = letterbox_transform(scale, pad)
    out = warp_bilinear(img, t, (model_size, model_size))
    return Letterboxed(out, scale, pad)


def model_to_crop(points: np.ndarray, scale: float, pad: tuple[float, float]) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return (pts - np.asarray(pad)) / scale


def crop_to_model(points: np.ndarray, scale: float, pad: tuple[float, float]) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return pts * scale + np.asarray(pad)


# ---------------------------------------------------------------------------
# keypoint sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeypointSet:
    """Keypoints in model space with unit-norm descriptors and the letterbox
    parameters needed to back-map coordinates."""

    points: np.ndarray  # (n, 2) x, y
    descriptors: np.ndarray  # (n, DESCRIPTOR_DIM)
    scale: float
    pad: tuple[float, float]
    image_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        desc = np.asarray(self.descriptors, dtype=np.float64)
        if desc.ndim != 2 or desc.shape[1] != DESCRIPTOR_DIM:
            raise FormatError(f"descriptors must be (n, {DESCRIPTOR_DIM})")
        if len(pts) != len(desc):
            raise FormatError("points/descriptors length mismatch")
        if len(desc):
            norms = np.linalg.norm(desc, axis=1)
            if np.abs(norms - 1.0).max() > 1e-4:
                raise FormatError("descriptors must be unit-norm within 1e-4")
        pts.setflags(write=False)
        desc.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "descriptors", desc)

    def __len__(self) -> int:
        return len(self.points)

    def crop_points(self) -> np.ndarray:
        return model_to_crop(self.points, self.scale, self.pad)


def save_keypoints(kps: KeypointSet, path) -> None:
    desc = np.ascontiguousarray(kps.descriptors, dtype="<f4")
    doc = {
        "image_id": kps.image_id,
        "model_space": str(MODEL_SIZE),
        "scale": kps.scale,
        "pad": [kps.pad[0], kps.pad[1]],
        "points": [{"x": float(x), "y": float(y)} for x, y in kps.points],
        "descriptors": base64.b64encode(desc.tobytes()).decode("ascii"),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="ascii")


def load_keypoints(path) -> KeypointSet:
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
        pts = np.array([[p["x"], p["y"]] for p in doc["points"]], dtype=np.float64)
        raw = base64.b64decode(doc["descriptors"])
        desc = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        desc = desc.reshape(len(doc["points"]), DESCRIPTOR_DIM)
        return KeypointSet(
            points=pts.reshape(-1, 2),
            descriptors=desc,
            scale=float(doc["scale"]),
            pad=(float(doc["pad"][0]), float(doc["pad"][1])),
            image_id=str(doc.get("image_id", "")),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad keypoint file {path}: {exc}") from exc


def match_descriptors(
    a: KeypointSet, b: KeypointSet, ratio: float = 0.85
) -> list[tuple[int, int]]:
    """Brute-force mutual nearest neighbours with the ratio test (a -> b).

    When b holds fewer than two candidates the ratio denominator does not
    exist and the test is skipped (standard convention).
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both keypoint sets must be nonempty")
    da, db = a.descriptors, b.descriptors
    d2 = np.maximum(
        (da * da).sum(1)[:, None] + (db * db).sum(1)[None, :] - 2.0 * da @ db.T,
        0.0,
    )
    nn_ab = d2.argmin(axis=1)
    nn_ba = d2.argmin(axis=0)
    out = []
    for ia in range(len(a)):
        ib = int(nn_ab[ia])
        if int(nn_ba[ib]) != ia:
            continue
        if len(b) >= 2:
            two = np.partition(d2[ia], 1)[:2]
            d1, d2nd = math.sqrt(two[0]), math.sqrt(two[1])
            if not d1 < ratio * d2nd:
                continue
        out.append((ia, ib))
    return out


def matched_points(a: KeypointSet, b: KeypointSet, pairs) -> np.ndarray:
    """(n, 4) array of (xa, ya, xb, yb) model-space coordinates."""
    if len(pairs) == 0:
        return np.zeros((0, 4))
    ia = np.array([p[0] for p in pairs])
    ib = np.array([p[1] for p in pairs])
    return np.hstack([a.points[ia], b.points[ib]])


# ---------------------------------------------------------------------------
# transform models
# ---------------------------------------------------------------------------

class ModelKind(Enum):
    SIMILARITY = "similarity"
    AFFINE = "affine"
    HOMOGRAPHY = "homography"


MIN_SAMPLES = {ModelKind.SIMILARITY: 2, ModelKind.AFFINE: 3, ModelKind.HOMOGRAPHY: 4}
_COMPLEXITY = [ModelKind.SIMILARITY, ModelKind.AFFINE, ModelKind.HOMOGRAPHY]
RANSAC_MAX_ITERS = 10_000


@dataclass(frozen=True)
class FitDiagnostics:
    inlier_count: int
    inlier_ratio: float
    median_reproj_err: float
    hull_spread_frac: float
    composite_score: float
    anisotropy: float
    cond_number: float
    proj_magnitude: float

    def to_dict(self) -> dict:
        return {
            "inlier_count": self.inlier_count,
            "inlier_ratio": self.inlier_ratio,
            "median_reproj_err": self.median_reproj_err,
            "hull_spread_frac": self.hull_spread_frac,
            "composite_score": self.composite_score,
            "anisotropy": self.anisotropy,
            "cond_number": self.cond_number,
            "proj_magnitude": self.proj_magnitude,
        }


@dataclass(frozen=True)
class TransformModel:
    matrix: np.ndarray  # 3x3, bottom-right normalized to 1
    kind: ModelKind
    diagnostics: FitDiagnostics

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise DimensionError("transform matrix must be 3x3")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class ModelGuards:
    max_condition: float = 3.0  # homography linear-part condition number
    max_projective: float = 1e-3  # strict upper bound on |h31|, |h32|
    max_anisotropy: float = 1.5  # singular-value ratio for affine/homography
    anisotropy_penalty: float = 0.5  # score multiplier on violation


def apply_transform(matrix: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    hom = np.hstack([pts, np.ones((len(pts), 1))]) @ matrix.T
    return hom[:, :2] / hom[:, 2:3]


def _fit_similarity(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Closed-form least-squares 4-parameter similarity (no reflection)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    var_s = float((a * a).sum()) / len(src)
    if var_s <= 1e-12:
        raise DegenerateConfigurationError("coincident source points")
    cov = b.T @ a / len(src)
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[1] = -1.0
    rot = u @ np.diag(s_fix) @ vt
    scale = float((d * s_fix).sum()) / var_s
    t = mu_d - scale * rot @ mu_s
    m = np.eye(3)
    m[:2, :2] = scale * rot
    m[:2, 2] = t
    return m


def _fit_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    x = np.hstack([src, np.ones((len(src), 1))])
    sol, _, rank, _ = np.linalg.lstsq(x, dst, rcond=None)
    if rank < 3:
        raise DegenerateConfigurationError("collinear points for affine fit")
    m = np.eye(3)
    m[:2, :] = sol.T
    return m


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    if d <= 1e-12:
        raise DegenerateConfigurationError("coincident points")
    f = math.sqrt(2.0) / d
    return np.array([[f, 0.0, -f * c[0]], [0.0, f, -f * c[1]], [0.0, 0.0, 1.0]])


def _fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT; bottom-right entry normalized to 1."""
    t1 = _normalizer(src)
    t2 = _normalizer(dst)
    s = apply_transform(t1, src)
    d = apply_transform(t2, dst)
    n = len(src)
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = s[:, 0]
    a[0::2, 1] = s[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -d[:, 0] * s[:, 0]
    a[0::2, 7] = -d[:, 0] * s[:, 1]
    a[0::2, 8] = -d[:, 0]
    a[1::2, 3] = s[:, 0]
    a[1::2, 4] = s[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -d[:, 1] * s[:, 0]
    a[1::2, 7] = -d[:, 1] * s[:, 1]
    a[1::2, 8] = -d[:, 1]
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] <= 1e-10 * max(1.0, sv[0]):
        raise DegenerateConfigurationError("homography system is rank-deficient")
    h = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t2) @ h @ t1
    if abs(m[2, 2]) < 1e-12:
        raise DegenerateConfigurationError("homography normalization failed")
    return m / m[2, 2]


_FITTERS = {
    ModelKind.SIMILARITY: _fit_similarity,
    ModelKind.AFFINE: _fit_affine,
    ModelKind.HOMOGRAPHY: _fit_homography,
}


def _has_collinear_triple(pts: np.ndarray) -> bool:
    n = len(pts)
    spread = max(1.0, float(np.ptp(pts, axis=0).max()))
    tol = 1e-9 * spread * spread
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                area = abs(
                    (pts[j, 0] - pts[i, 0]) * (pts[k, 1] - pts[i, 1])
                    - (pts[j, 1] - pts[i, 1]) * (pts[k, 0] - pts[i, 0])
                )
                if area <= tol:
                    return True
    return False


def _sample_degenerate(kind: ModelKind, src: np.ndarray) -> bool:
    if kind is ModelKind.SIMILARITY:
        return bool(np.linalg.norm(src[0] - src[1]) <= 1e-9)
    return _has_collinear_triple(src)


def _singular_ratio(m: np.ndarray) -> float:
    sv = np.linalg.svd(m[:2, :2], compute_uv=False)
    if sv[1] <= 0:
        return float("inf")
    return float(sv[0] / sv[1])


def _diagnostics(
    matrix: np.ndarray,
    kind: ModelKind,
    src: np.ndarray,
    dst: np.ndarray,
    reproj_thresh: float,
    model_area: float,
    guards: ModelGuards,
) -> tuple[FitDiagnostics, np.ndarray]:
    resid = np.linalg.norm(apply_transform(matrix, src) - dst, axis=1)
    inliers = resid <= reproj_thresh
    count = int(inliers.sum())
    ratio = count / len(src)
    median_err = float(np.median(resid[inliers])) if count else float("inf")
    spread = hull_area(src[inliers]) / model_area if count else 0.0
    aniso = _singular_ratio(matrix)
    proj = float(max(abs(matrix[2, 0]), abs(matrix[2, 1])))
    score = ratio * spread * math.exp(-median_err / reproj_thresh) if count else 0.0
    if kind in (ModelKind.AFFINE, ModelKind.HOMOGRAPHY) and aniso > guards.max_anisotropy:
        score *= guards.anisotropy_penalty
    diag = FitDiagnostics(
        inlier_count=count,
        inlier_ratio=float(ratio),
        median_reproj_err=median_err,
        hull_spread_frac=float(spread),
        composite_score=float(score),
        anisotropy=aniso,
        cond_number=aniso,  # condition number of the 2x2 linear part
        proj_magnitude=proj,
    )
    return diag, inliers


def fit_model_ransac(
    matches: np.ndarray,
    kind: ModelKind,
    reproj_thresh: float = 2.0,
    confidence: float = 0.999,
    rng_seed: int = 0,
    model_area: float = float(MODEL_SIZE * MODEL_SIZE),
    guards: ModelGuards = ModelGuards(),
    max_iters: int = RANSAC_MAX_ITERS,
) -> TransformModel:
    """Adaptive-iteration RANSAC followed by a least-squares refit on inliers.

    `matches` is an (n, 4) array of (xa, ya, xb, yb); the returned transform
    maps a-points onto b-points. Deterministic under `rng_seed`.
    """
    matches = np.asarray(matches, dtype=np.float64).reshape(-1, 4)
    n = len(matches)
    s = MIN_SAMPLES[kind]
    if n < s:
        raise InsufficientMatchesError(
            f"{kind.value} needs >= {s} matches, got {n}"
        )
    src, dst = matches[:, :2], matches[:, 2:]
    fitter = _FITTERS[kind]
    rng = np.random.default_rng(rng_seed)

    best_inliers: np.ndarray | None = None
    best_count = -1
    if n == s:
        if _sample_degenerate(kind, src):
            raise DegenerateConfigurationError("minimal sample is degenerate")
        best_inliers = np.ones(n, dtype=bool)
    else:
        n_iters = max_iters
        it = 0
        while it < n_iters:
            it += 1
            idx = rng.choice(n, size=s, replace=False)
            if _sample_degenerate(kind, src[idx]):
                continue
            try:
                cand = fitter(src[idx], dst[idx])
            except DegenerateConfigurationError:
                continue
            resid = np.linalg.norm(apply_transform(cand, src) - dst, axis=1)
            inliers = resid <= reproj_thresh
            count = int(inliers.sum())
            if count > best_count:
                best_count = count
                best_inliers = inliers
                w = count / n
                ws = w ** s
                if ws >= 1.0 - 1e-12:
                    break
                needed = math.log(1.0 - confidence) / math.log(1.0 - ws)
                n_iters = min(n_iters, max(it, int(math.ceil(needed))))
        if best_inliers is None or best_count < s:
            raise DegenerateConfigurationError(
                "RANSAC found no non-degenerate consensus"
            )
    refit = fitter(src[best_inliers], dst[best_inliers])
    diag, _ = _diagnostics(refit, kind, src, dst, reproj_thresh, model_area, guards)
    return TransformModel(refit, kind, diag)


def passes_guards(model: TransformModel, guards: ModelGuards = ModelGuards()) -> bool:
    """Homography requires cond <= max_condition and projective magnitude
    strictly below max_projective; affine and homography require the
    anisotropy bound."""
    d = model.diagnostics
    if model.kind is ModelKind.HOMOGRAPHY:
        if d.cond_number > guards.max_condition:
            return False
        if not d.proj_magnitude < guards.max_projective:
            return False
    if model.kind in (ModelKind.AFFINE, ModelKind.HOMOGRAPHY):
        if d.anisotropy > guards.max_anisotropy:
            return False
    return True


def select_model(
    matches: np.ndarray,
    candidates: tuple[ModelKind, ...] = (
        ModelKind.SIMILARITY,
        ModelKind.AFFINE,
        ModelKind.HOMOGRAPHY,
    ),
    guards: ModelGuards = ModelGuards(),
    promotion_margin: float = 0.10,
    rng_seed: int = 0,
    reproj_thresh: float = 2.0,
    confidence: float = 0.999,
    model_area: float = float(MODEL_SIZE * MODEL_SIZE),
) -> TransformModel:
    """Fit all feasible candidates and promote complexity only when the
    composite score beats the simpler model by the margin."""
    matches = np.asarray(matches, dtype=np.float64).reshape(-1, 4)
    fits: list[TransformModel] = []
    for kind in _COMPLEXITY:
        if kind not in candidates or len(matches) < MIN_SAMPLES[kind]:
            continue
        try:
            fits.append(
                fit_model_ransac(
                    matches,
                    kind,
                    reproj_thresh=reproj_thresh,
                    confidence=confidence,
                    rng_seed=rng_seed,
                    model_area=model_area,
                    guards=guards,
                )
            )
        except (InsufficientMatchesError, DegenerateConfigurationError):
            continue
    qualified = [m for m in fits if passes_guards(m, guards)]
    if not qualified:
        raise NoViableModelError("all candidate models were disqualified")
    best = qualified[0]
    for cand in qualified[1:]:
        if cand.diagnostics.composite_score >= (1.0 + promotion_margin) * (
            best.diagnostics.composite_score
        ):
            best = cand
    return best


# ---------------------------------------------------------------------------
# acceptance gate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateThresholds:
    min_matches: int = 20
    min_inliers: int = 10
    max_median_err: float = 1.5
    min_spread: float = 0.05
    min_score: float = 0.03


@dataclass(frozen=True)
class GateDecision:
    accepted: bool
    reasons: tuple[str, ...]


def gate(
    model: TransformModel, n_matches: int, thresholds: GateThresholds = GateThresholds()
) -> GateDecision:
    """All five retention criteria, boundary-inclusive; reasons list every
    failed criterion."""
    d = model.diagnostics
    t = thresholds
    reasons = []
    if n_matches < t.min_matches:
        reasons.append(f"matches<{t.min_matches}")
    if d.inlier_count < t.min_inliers:
        reasons.append(f"inliers<{t.min_inliers}")
    if d.median_reproj_err > t.max_median_err:
        reasons.append(f"median_err>{t.max_median_err}")
    if d.hull_spread_frac < t.min_spread:
        reasons.append(f"spread<{t.min_spread}")
    if d.composite_score < t.min_score:
        reasons.append(f"score<{t.min_score}")
    return GateDecision(accepted=not reasons, reasons=tuple(reasons))


# ---------------------------------------------------------------------------
# anchor selection
# ---------------------------------------------------------------------------

LOW_FOV_FRAC = 0.35
LOW_FOV_PENALTY = 0.2


def select_anchor(visits) -> int:
    """Index of the visit maximizing keypoint_count * fov_area_frac, with the
    fivefold penalty below the FOV-fraction floor; ties go to the earliest."""
    visits = list(visits)
    if not visits:
        raise EmptyListError("no visits to anchor on")
    best_idx = 0
    best_score = -1.0
    for i, v in enumerate(visits):
        count, frac = (v[0], v[1]) if isinstance(v, tuple) else (
            v.keypoint_count_in_fov,
            v.fov_area_frac,
        )
        score = count * frac * (LOW_FOV_PENALTY if frac < LOW_FOV_FRAC else 1.0)
        if score > best_score:
            best_score = score
            best_idx = i
    return best_idx


# ---------------------------------------------------------------------------
# intensity reference and histogram matching
# ---------------------------------------------------------------------------

MIXTURE_VERSION = "mixture-3g-v1"
DEFAULT_ANCHORS = ((50.0, 0.05), (128.0, 0.50), (190.0, 0.95))
DEFAULT_WEIGHTS = (0.15, 0.70, 0.15)
DEFAULT_BULK_SIGMA = 24.0
DEFAULT_TAIL_Z = 2.0


@dataclass(frozen=True)
class MixtureReference:
    means: tuple[float, float, float]
    sigmas: tuple[float, float, float]
    weights: tuple[float, float, float]
    version: str = MIXTURE_VERSION

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros_like(x)
        for m, s, w in zip(self.means, self.sigmas, self.weights):
            total = total + w * ndtr((x - m) / s)
        return total


def _bisect(fn, lo: float, hi: float, iters: int = 200) -> float:
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm <= 0) == (flo <= 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_mixture(
    anchors=DEFAULT_ANCHORS,
    weights=DEFAULT_WEIGHTS,
    bulk_sigma: float = DEFAULT_BULK_SIGMA,
    tail_z: float = DEFAULT_TAIL_Z,
) -> MixtureReference:
    """Solve tail means/sigmas by alternating bisection so the mixture CDF
    meets the three percentile anchors.

    Closure conventions (the anchors underdetermine five parameters): the bulk
    mean sits at the middle anchor with a fixed sigma, and each tail mean sits
    `tail_z` tail-sigmas away from the bulk mean, which pins the middle anchor
    for symmetric tail weights.
    """
    (x_lo, p_lo), (x_mid, p_mid), (x_hi, p_hi) = anchors
    w1, w2, w3 = weights
    if abs(w1 + w2 + w3 - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    if abs(w1 * 0.5 + w2 * 0.5 + w3 * 0.5 + (w1 - w3) * (ndtr(tail_z) - 0.5) - p_mid) > 1e-9:
        # w1*Phi(z)+w2/2+w3*(1-Phi(z)) must equal p_mid
        raise ValueError("middle anchor unreachable with these weights/tail_z")

    s1, s3 = 20.0, 20.0

    def cdf_at(x, s1_, s3_):
        m1 = x_mid - tail_z * s1_
        m3 = x_mid + tail_z * s3_
        return (
            w1 * ndtr((x - m1) / s1_)
            + w2 * ndtr((x - x_mid) / bulk_sigma)
            + w3 * ndtr((x - m3) / s3_)
        )

    for _ in range(8):
        s1 = _bisect(lambda s: cdf_at(x_lo, s, s3) - p_lo, 1e-3, 500.0)
        s3 = _bisect(lambda s: p_hi - cdf_at(x_hi, s1, s), 1e-3, 500.0)
    ref = MixtureReference(
        means=(x_mid - tail_z * s1, x_mid, x_mid + tail_z * s3),
        sigmas=(s1, bulk_sigma, s3),
        weights=(w1, w2, w3),
    )
    for x, p in anchors:
        if abs(float(ref.cdf(x)) - p) > 0.005:
            raise ValueError(f"mixture calibration missed anchor ({x}, {p})")
    return ref


_default_mixture: MixtureReference | None = None


def default_mixture() -> MixtureReference:
    global _default_mixture
    if _default_mixture is None:
        _default_mixture = calibrate_mixture()
    return _default_mixture


def histogram_match_lut(img: GrayImage, mask: ValidityMask, ref: MixtureReference) -> np.ndarray:
    """256-entry LUT mapping each source level to the reference level with the
    closest CDF value; built from in-mask pixels only. Monotone non-decreasing."""
    if mask.bits.shape != img.pixels.shape:
        raise DimensionError("mask dimensions differ from image")
    if mask.valid_count() == 0:
        raise EmptyMaskError("histogram matching needs in-mask pixels")
    levels = np.clip(np.floor(img.to_byte().pixels + 0.5), 0, 255).astype(np.int64)
    hist = np.bincount(levels[mask.bits], minlength=256).astype(np.float64)
    src_cdf = np.cumsum(hist) / hist.sum()
    ref_cdf = ref.cdf(np.arange(256, dtype=np.float64))
    hi = np.searchsorted(ref_cdf, src_cdf, side="left")
    hi = np.clip(hi, 0, 255)
    lo = np.clip(hi - 1, 0, 255)
    pick_lo = np.abs(ref_cdf[lo] - src_cdf) <= np.abs(ref_cdf[hi] - src_cdf)
    return np.where(pick_lo, lo, hi).astype(np.int64)


def histogram_match(img: GrayImage, mask: ValidityMask, ref: MixtureReference | None = None) -> GrayImage:
    """Match the in-mask intensity distribution to the reference mixture;
    the LUT is applied to the whole frame."""
    ref = ref or default_mixture()
    lut = histogram_match_lut(img, mask, ref)
    levels = np.clip(np.floor(img.to_byte().pixels + 0.5), 0, 255).astype(np.int64)
    return GrayImage(lut[levels].astype(np.float64), Scale.BYTE)


# ---------------------------------------------------------------------------
# chirality
# ---------------------------------------------------------------------------

def normalize_chirality(seq: EyeSequence) -> EyeSequence:
    """Mirror left eyes horizontally so all sequences share one orientation."""
    if seq.laterality is None:
        raise UnknownLateralityError(f"eye {seq.eye_id!r} has unknown laterality")
    if seq.laterality is Laterality.RIGHT:
        return seq
    frames = tuple(
        Frame(hflip_image(f.image), hflip_mask(f.mask), f.t) for f in seq.frames
    )
    return EyeSequence(seq.eye_id, frames, Laterality.RIGHT)


def compose_to_crop(
    model_transform: np.ndarray,
    src_lb: tuple[float, tuple[float, float]],
    dst_lb: tuple[float, tuple[float, float]],
) -> np.ndarray:
    """Map a model-space transform into crop space: dst_crop = A_dst^-1 T A_src."""
    a_src = letterbox_transform(src_lb[0], src_lb[1])
    a_dst = letterbox_transform(dst_lb[0], dst_lb[1])
    return np.linalg.inv(a_dst) @ np.asarray(model_transform) @ a_src
