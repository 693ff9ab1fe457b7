"""
Keypoint-based registration with model selection, guards, and gating
====================================================================

Keypoints live in a 1024x1024 letterbox model space (coordinates map back to
crop space analytically through the stored scale/pad). Descriptor matching is
brute-force mutual nearest neighbours with a ratio test. Three transform
families are fitted by RANSAC (similarity -> affine -> homography) and a more
complex model is promoted only when its composite score beats the simpler one
by 10%. Unstable homographies are disqualified by condition-number and
projective-magnitude guards, and a five-criterion gate decides retention.
"""

import numpy as np

from longlens import GateThresholds, ModelKind, fit_model_ransac, gate, select_model
from longlens.registration import apply_transform

rng = np.random.default_rng(3)

# synthetic correspondence: points moved by a known similarity + 25% outliers
n = 80
src = rng.random((n, 2)) * 900 + 60
angle, scale, t = 0.12, 1.04, np.array([25.0, -14.0])
rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
truth = np.eye(3)
truth[:2, :2] = scale * rot
truth[:2, 2] = t
dst = apply_transform(truth, src)
outliers = rng.choice(n, n // 4, replace=False)
dst[outliers] = rng.random((len(outliers), 2)) * 1024
matches = np.hstack([src, dst])

# fitting the true family recovers the matrix through the outliers
model = fit_model_ransac(matches, ModelKind.SIMILARITY, rng_seed=7)
print("similarity fit, max |error| vs truth:",
      f"{np.abs(model.matrix - truth).max():.2e}")
print("diagnostics:", model.diagnostics.to_dict())

# model selection prefers the simplest family consistent with the data:
# affine and homography cannot beat the similarity score by the 10% margin
selected = select_model(matches, rng_seed=7)
print("selected family on similarity data:", selected.kind.value)

# the retention gate applies the five criteria, boundary-inclusive
decision = gate(selected, n_matches=n, thresholds=GateThresholds())
print("gate:", "accepted" if decision.accepted else f"rejected {decision.reasons}")

# too few matches fails loudly with the criterion that broke
decision = gate(selected, n_matches=12)
print("with only 12 matches:", decision.reasons)
