"""longlens: model-light diagnostics, metrics, and registration tooling for
longitudinal grayscale image datasets.

The package answers, before any model is trained, how much of a dataset's
inter-visit change is time-structured (disease) versus time-invariant
(acquisition noise), and whether a stochastic predictor's outputs actually
vary across noise realizations. Around those two measurements it provides the
full evaluation metric suite (masked MAE/PSNR/SSIM, change-map delta-SSIM,
Dice, HD95), reference predictors, adaptive atrophy segmentation with a
parameter-sensitivity sweep, and a keypoint-based registration and intensity
harmonization pipeline.
"""

__version__ = "0.1.0"

from .atrophy import (  # noqa: F401
    BimodalityWarning,
    RankTable,
    SegParams,
    SweepGrid,
    adaptive_threshold,
    dice,
    hd95,
    segment_atrophy,
    sensitivity_sweep,
)
from .diagnostics import (  # noqa: F401
    EntropyReport,
    EyeSamples,
    PairStats,
    PosteriorReport,
    decompose_eye,
    entropy_report,
    pair_stats,
    posterior_report,
)
from .manifest import (  # noqa: F401
    EyeRecord,
    Manifest,
    VisitRecord,
    load_eye_sequence,
    load_manifest,
    save_manifest,
)
from .metrics import (  # noqa: F401
    SsimConfig,
    change_maps,
    delta_ssim,
    mae,
    masked_ssim,
    psnr,
    ssim,
)
from .phantom import PhantomSpec, generate_eye, write_phantom_dataset  # noqa: F401
from .raster import (  # noqa: F401
    Connectivity,
    GrayImage,
    MorphOp,
    Rect,
    Scale,
    StructuringElement,
    ValidityMask,
    connected_components,
    convex_hull_mask,
    load_image,
    load_mask,
    morphology,
    save_image,
    save_mask,
    warp_bilinear,
    warp_mask,
)
from .registration import (  # noqa: F401
    GateDecision,
    GateThresholds,
    KeypointSet,
    MixtureReference,
    ModelGuards,
    ModelKind,
    TransformModel,
    calibrate_mixture,
    default_mixture,
    estimate_fov_mask,
    fit_model_ransac,
    gate,
    histogram_match,
    letterbox,
    load_keypoints,
    match_descriptors,
    normalize_chirality,
    save_keypoints,
    select_anchor,
    select_model,
)
from .stats import (  # noqa: F401
    PairedSample,
    WilcoxonMethod,
    describe,
    pearson_r,
    wilcoxon_signed_rank,
)
from .temporal import (  # noqa: F401
    DeltaEmbedding,
    EyeSequence,
    Frame,
    Laterality,
    copy_last,
    delta_embedding,
    linear_spline,
)
