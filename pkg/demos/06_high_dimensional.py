"""Select K in fifty dimensions with the per-dimension divergence estimator.

Nearest-neighbour density-ratio estimates degrade quickly as dimension
grows: radii concentrate and the estimate drowns in bias.  When the fitted
family treats coordinates as independent within a component (diagonal
covariance), the divergence decomposes into a sum of one-dimensional
terms, each estimable at the 1-D rate.  The ``knn-independent`` estimator
exploits exactly that.
"""

import time

import numpy as np

import stare

spec = stare.scenario_spec("highdim3", n=900, seed=1)
data, truth = stare.sample_generator(spec, name="highdim-demo")
d = data.observations.shape[1]
print(f"dataset: n={data.n}, D={d}, true K={len(np.unique(truth))}")

t0 = time.time()
est = stare.estimator_from_tag("knn-independent")
candidates = stare.fit_candidates(data, stare.GAUSSIAN_MV, 4,
                                  stare.EmConfig(seed=1), est, seed=1)
print(f"fit + divergence estimation: {time.time() - t0:.1f}s")

print("\nsummed per-dimension divergences by candidate K:")
for cand in candidates:
    if not cand.ok:
        print(f"  K={cand.k}: fit failed")
        continue
    vals = ", ".join(f"{c.divergence:.2f}" for c in cand.profile.per_component)
    print(f"  K={cand.k}: [{vals}]")

curves = [stare.loss_curve(c.profile, 0.01) for c in candidates if c.ok]
verdict = stare.stable_region_select(curves)
print(f"\nstable-region verdict: K={verdict.k}, interval "
      f"[{verdict.interval[0]:.2f}, {verdict.interval[1]:.2f}], "
      f"confident={verdict.confident}")

# Contrast: the raw multivariate kNN estimator on the same fits.  A
# single joint estimate in D=50 is dominated by bias from radius
# concentration — here it collapses to large negative values, impossible
# for a true KL — while the per-dimension route keeps each term 1-D.
raw = stare.estimator_from_tag("knn-adaptive")
k3 = next(c for c in candidates if c.k == 3)
print("\nK=3 component divergences, joint vs per-dimension estimator:")
for idx in range(3):
    mask = k3.assignments == idx
    sample = data.observations[mask]
    joint = raw(sample, stare.GAUSSIAN_MV, k3.model.params.components[idx])
    print(f"  component {idx}: joint={joint.value:8.2f}   "
        f"per-dim sum={k3.profile.per_component[idx].divergence:8.2f}")

# The verdict is driven by the ordering the estimates induce across K,
# and in fifty dimensions only the per-dimension estimator keeps that
# ordering usable.
