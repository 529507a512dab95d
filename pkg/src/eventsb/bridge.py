"""Discrete bridge mechanics between the two domains.

A translation chain runs over M uniform timesteps t_i = i/M. Moving from
a state at time t0 toward an endpoint prediction x1 samples a Gaussian
whose mean linearly blends the two and whose variance vanishes at both
ends:

    s = (t - t0) / (1 - t0)
    x_t ~ Normal(s * x1 + (1 - s) * x_t0,  s * (1 - s) * tau * (1 - t0) * I)

Chain construction is a sampling procedure only; no gradients flow
through it. A small entropic optimal-transport solver (Sinkhorn) is
included as the discrete oracle for the endpoint behavior the chain is
meant to realize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError, ScheduleError, SinkhornError


@dataclass
class BridgeConfig:
    """Chain length and diffusion variance.

    tau is the bridge variance in normalized ([-1, 1]) data units, kept
    small so endpoint noise stays well below the data range.
    """

    steps: int = 5
    tau: float = 0.01

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")

    @property
    def timestamps(self) -> np.ndarray:
        """t_i = i/steps for i = 0..steps (uniform schedule)."""
        return np.arange(self.steps + 1) / self.steps

    def to_dict(self) -> dict:
        return {"steps": self.steps, "tau": self.tau}


@dataclass
class BridgeState:
    """A point on the chain: tensor, step index, and the generator
    predictions that produced it (one per completed step)."""

    x: torch.Tensor
    step: int
    history: list = field(default_factory=list)


def interpolate(x_t0, x_1, t0, t, cfg: BridgeConfig, rng: torch.Generator) -> torch.Tensor:
    """One Gaussian bridge step from (x_t0 at time t0) toward (x_1 at 1).

    Exact (no sampling) at t == t0 and t == 1, where the variance is
    literally zero.
    """
    if t0 >= 1.0:
        raise ScheduleError(f"t0 must be < 1, got {t0}")
    if t < t0 or t > 1.0:
        raise ScheduleError(f"t must lie in [t0, 1] = [{t0}, 1], got {t}")
    if t == t0:
        return x_t0.clone()
    if t == 1.0:
        return x_1.clone()
    s = (t - t0) / (1.0 - t0)
    mean = s * x_1 + (1.0 - s) * x_t0
    std = float(np.sqrt(s * (1.0 - s) * cfg.tau * (1.0 - t0)))
    noise = torch.empty_like(mean).normal_(generator=rng)
    return mean + std * noise


def sample_chain(
    generate_fn,
    x_start: torch.Tensor,
    target_step: int,
    cfg: BridgeConfig,
    rng: torch.Generator,
    latent_dim: int = 8,
) -> BridgeState:
    """Iterate generator predictions and bridge steps up to t_{target_step}.

    generate_fn(x, step_index, z) must return the endpoint prediction for
    the current state. The whole construction runs without gradient
    tracking; history collects each step's prediction.
    """
    if not 0 <= target_step <= cfg.steps - 1:
        raise ScheduleError(f"target step {target_step} outside 0..{cfg.steps - 1}")
    ts = cfg.timestamps
    history = []
    with torch.no_grad():
        x = x_start.clone()
        for j in range(target_step):
            z = torch.empty(
                x.shape[0], latent_dim, dtype=x.dtype, device=x.device
            ).normal_(generator=rng)
            x_hat = generate_fn(x, j, z)
            history.append(x_hat.detach().clone())
            x = interpolate(x, x_hat, float(ts[j]), float(ts[j + 1]), cfg, rng)
    return BridgeState(x=x, step=target_step, history=history)


def sinkhorn_plan(
    a,
    b,
    cost,
    epsilon: float,
    max_iter: int = 10000,
    tol: float = 1e-9,
) -> np.ndarray:
    """Entropy-regularized transport plan between two discrete distributions.

    Scaling iterations on K = exp(-cost/epsilon) until both marginals
    match a and b within tol. Raises SinkhornError with the residuals if
    max_iter is exhausted first. The returned plan minimizes
    <plan, cost> - epsilon * H(plan) over the transport polytope.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or cost.shape != (a.size, b.size):
        raise ConfigError("cost must be (len(a), len(b))")
    if np.any(a < 0) or np.any(b < 0):
        raise ConfigError("distributions must be non-negative")
    if abs(a.sum() - 1.0) > 1e-9 or abs(b.sum() - 1.0) > 1e-9:
        raise ConfigError("distributions must each sum to 1")
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")

    kernel = np.exp(-cost / epsilon)
    u = np.ones_like(a)
    v = np.ones_like(b)
    tiny = 1e-300
    for _ in range(max_iter):
        u = a / np.maximum(kernel @ v, tiny)
        v = b / np.maximum(kernel.T @ u, tiny)
        plan = u[:, None] * kernel * v[None, :]
        row_res = float(np.abs(plan.sum(axis=1) - a).max())
        col_res = float(np.abs(plan.sum(axis=0) - b).max())
        if max(row_res, col_res) <= tol:
            return plan
    raise SinkhornError(
        f"no convergence in {max_iter} iterations "
        f"(row residual {row_res:.3e}, column residual {col_res:.3e})",
        row_residual=row_res,
        col_residual=col_res,
    )


def plan_entropy(plan: np.ndarray) -> float:
    """Shannon entropy -sum(p * log p) with 0 log 0 = 0."""
    p = np.asarray(plan, dtype=np.float64)
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


def entropic_cost(plan, cost, epsilon: float) -> float:
    """The Sinkhorn objective <plan, cost> - epsilon * H(plan)."""
    plan = np.asarray(plan, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    return float((plan * cost).sum()) - epsilon * plan_entropy(plan)
