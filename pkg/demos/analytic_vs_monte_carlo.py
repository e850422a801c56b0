"""Exact second-order theory against pooled simulation.

Simulates many replicates of a hard-core mutually thinned process, pools
a kernel estimate of the pair correlation function, and prints it next
to the exact curve.  The estimator is compared against the *smoothed*
exact curve (the kernel applied to the analytic pcf), which is what the
estimator is actually unbiased for.
"""

import numpy as np

from matern_thinning import (EstimatorConfig, ModelSpec, SimConfig, Window,
                             make_interaction, simulate_model)
from matern_thinning.analytic import intensity, pcf
from matern_thinning.estimate import (estimate_pcf, expected_pcf_estimate,
                                      resolve_r_grid)

model = ModelSpec("mat1", lam=0.3, p0=1.0,
                  f=make_interaction("hardcore", R=1.0), dim=2)
window = Window.box(2, 20.0)
n_reps = 200
bandwidth = 0.12

lam_th = intensity(model)
cfg = EstimatorConfig(n_points=24, r_max=3.0, bandwidth=bandwidth,
                      intensity=lam_th)
r = resolve_r_grid(window, cfg)

curves = []
for i in range(n_reps):
    pattern = simulate_model(model, window, SimConfig(seed=7, replicate_index=i))
    curves.append(estimate_pcf(pattern, cfg).values)
pooled = np.nanmean(curves, axis=0)

exact = np.atleast_1d(pcf(model, r))
smoothed = expected_pcf_estimate(
    lambda t: float(np.atleast_1d(pcf(model, np.array([t])))[0]),
    r, bandwidth, model.dim, breakpoints=(1.0, 2.0))

print(f"thinned intensity: exact {lam_th:.5f}")
print(f"{'r':>6} {'pooled':>8} {'smoothed':>9} {'exact':>7}")
for ri, po, sm, ex in zip(r, pooled, smoothed, exact):
    mark = "" if np.isfinite(po) else "  (inside bandwidth)"
    print(f"{ri:6.3f} {po:8.3f} {sm:9.3f} {ex:7.3f}{mark}")
print("\nthe pooled estimate tracks the smoothed curve; the visible gap "
      "to the raw exact curve near the jump at r = R is kernel smoothing, "
      "not estimator bias")
