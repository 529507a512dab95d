"""Bridge interpolation and its entropic-transport oracle.

First shows the Gaussian bridge step: exact at both endpoints, matching
mean/variance in the middle. Then solves a small entropic transport
problem with Sinkhorn and checks its objective beats random feasible
plans, which is the discrete behavior the translation chain optimizes
toward.
"""

import numpy as np
import torch

from eventsb.bridge import BridgeConfig, entropic_cost, interpolate, sinkhorn_plan

cfg = BridgeConfig(steps=5, tau=1.0)
rng = torch.Generator().manual_seed(0)
x0 = torch.zeros(1, 4, 4)
x1 = torch.ones(1, 4, 4)

print("endpoints:")
print("  t=t0  ->", float(interpolate(x0, x1, 0.0, 0.0, cfg, rng).mean()), "(exactly x0)")
print("  t=1   ->", float(interpolate(x0, x1, 0.0, 1.0, cfg, rng).mean()), "(exactly x1)")

draws = torch.stack([interpolate(x0, x1, 0.0, 0.5, cfg, rng) for _ in range(20000)])
print(f"midpoint: mean {float(draws.mean()):.4f} (expect 0.5), "
      f"variance {float(draws.var()):.4f} (expect 0.25)")

print("\nentropic transport toy:")
prng = np.random.default_rng(1)
a = prng.random(5); a /= a.sum()
b = prng.random(5); b /= b.sum()
cost = prng.random((5, 5))
plan = sinkhorn_plan(a, b, cost, epsilon=0.1)
objective = entropic_cost(plan, cost, 0.1)
print(f"  marginal residuals: {np.abs(plan.sum(1) - a).max():.2e}, "
      f"{np.abs(plan.sum(0) - b).max():.2e}")

worse = 0
for _ in range(200):
    rival = prng.random((5, 5)) + 0.05
    for _ in range(150):
        rival *= (a / rival.sum(1))[:, None]
        rival *= (b / rival.sum(0))[None, :]
    worse += entropic_cost(rival, cost, 0.1) >= objective
print(f"  sinkhorn objective {objective:.4f} beats {worse}/200 random feasible plans")
