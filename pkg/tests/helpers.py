"""Shared test utilities: gradient checking and synthetic dataset builders."""

import numpy as np
import torch

from eventsb.events import SceneConfig, bin_events, generate_day_scene, generate_night_scene


def finite_difference_check(fn, x, n_coords=12, eps=1e-5, rtol=1e-3, seed=0):
    """Compare autograd gradients of scalar fn(x) against central differences.

    fn must be a deterministic function of x (re-seed any internal
    sampling per call). Checks n_coords randomly chosen coordinates in
    double precision and returns the worst relative error.
    """
    assert x.dtype == torch.float64, "gradient checks run in double precision"
    x = x.detach().clone().requires_grad_(True)
    value = fn(x)
    (grad,) = torch.autograd.grad(value, x)
    rng = np.random.default_rng(seed)
    flat = x.detach().reshape(-1)
    coords = rng.choice(flat.numel(), size=min(n_coords, flat.numel()), replace=False)
    worst = 0.0
    for c in coords:
        xp = flat.clone()
        xp[c] += eps
        xm = flat.clone()
        xm[c] -= eps
        fp = float(fn(xp.reshape(x.shape)).detach())
        fm = float(fn(xm.reshape(x.shape)).detach())
        fd = (fp - fm) / (2 * eps)
        ad = float(grad.reshape(-1)[c])
        rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-8)
        worst = max(worst, rel)
    assert worst <= rtol, f"finite-difference mismatch: worst relative error {worst:.3e}"
    return worst


def histogram_set(count, domain, bins=3, start_seed=0, scene_kwargs=None):
    """count synthetic histograms of one domain with consecutive seeds."""
    scene_kwargs = scene_kwargs or {}
    out = []
    for i in range(count):
        cfg = SceneConfig(seed=start_seed + i, **scene_kwargs)
        stream = generate_day_scene(cfg) if domain == "day" else generate_night_scene(cfg)
        h = bin_events(stream, bins)
        h.domain_tag = domain
        out.append(h)
    return out
