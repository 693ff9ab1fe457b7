"""
Task entropy: is inter-visit change time-structured or acquisition noise?
=========================================================================

The first model-light measurement. For every adjacent visit pair, compute the
per-pixel absolute change |target - last| over valid pixels, the fraction of
pixels changing by more than 5%, and stratify by the elapsed time. If disease
progression dominated, longer gaps would change more pixels; if acquisition
variability dominates, the changed fraction is flat in time and the
correlation r(delta_t, changed fraction) is weak.

Two synthetic regimes make the signature concrete:
  A. noise-dominated: lesions frozen, per-visit illumination noise only
  B. progression-dominated: lesions grow, no noise
"""

import numpy as np

from longlens import PhantomSpec, entropy_report, pair_stats
from longlens.phantom import generate_eye


def regime_report(spec):
    pairs = []
    for i in range(spec.n_eyes):
        eye = generate_eye(spec, i)
        for k in range(len(eye.times) - 1):
            pairs.append(
                pair_stats(
                    eye.images[k].to_unit(),
                    eye.images[k + 1].to_unit(),
                    eye.fov_mask,
                    eye.times[k + 1] - eye.times[k],
                )
            )
    return entropy_report(pairs)


common = dict(n_eyes=120, frames_per_eye=3, image_size=64,
              visit_interval_min=0.1, visit_interval_max=1.5)

noise_only = PhantomSpec(lesion_growth_rate=0.0, noise_amplitude=0.08,
                         rng_seed=1, **common)
growth_only = PhantomSpec(lesion_growth_rate=4.0, noise_amplitude=0.0,
                          lesion_radius0=10.0, rng_seed=2, **common)

for name, spec in [("A: noise-dominated", noise_only),
                   ("B: progression-dominated", growth_only)]:
    rep = regime_report(spec)
    print(f"--- regime {name} ---")
    print(rep.to_text())

# Regime A shows near-flat changed fractions across strata and |r| near 0;
# regime B shows changed fraction scaling with the interval and r near 1.
# Run this on a real dataset (CLI: `longlens entropy`) before choosing how
# much generative machinery the prediction task deserves.
