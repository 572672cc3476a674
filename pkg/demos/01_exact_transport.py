# Exact triangular transport between known densities on the unit square.
#
# The rearrangement S pushes the target density forward to the reference:
# its k-th component is the reference marginal quantile of the target's
# conditional CDF.  We build it for a non-factorizing target, check that the
# pullback of the reference reproduces the target, invert it, and sample.

import numpy as np

from ttde import (build_kr, default_grid, invert_triangular, make_test_density,
                  pullback_density, sample_target)

target = make_test_density("nonproduct-coupling", 2, strength=0.5)
reference = make_test_density("uniform", 2)

s = build_kr(target, reference)

# pushforward correctness: S^# reference == target up to oracle error
grid = default_grid(2)
nodes = grid.nodes()
pb = pullback_density(s, reference)
print("pushforward sup-error:", np.max(np.abs(pb(nodes) - target(nodes))))

# componentwise monotonicity
for k in (1, 2):
    print(f"min diagonal partial d_{k} S_{k}:",
          s.diag_partial(k, nodes[:, :k]).min())

# triangular maps invert coordinate by coordinate
rng = np.random.default_rng(0)
z = rng.random((5, 2))
x = invert_triangular(s, z)
print("roundtrip |S(S^-1(z)) - z|:", np.max(np.abs(s.evaluate(x) - z)))

# inverse-Rosenblatt sampling: draw from the reference, invert the map
samples = sample_target(s, reference, 50_000, seed=42)
moment = np.mean(np.cos(2 * np.pi * samples[:, 0]) * np.cos(2 * np.pi * samples[:, 1]))
print("E[cos(2 pi X1) cos(2 pi X2)] ~", moment, " (exact: s/4 = 0.125)")
