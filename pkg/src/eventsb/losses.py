"""Training objectives: least-squares adversarial, bridge transport +
entropy surrogate, spatial contrastive, and temporal-shuffling
contrastive losses.

The temporal loss enforces bin order: negatives are the generated
encoding with its per-bin channel groups re-ordered by sampled
non-identity permutations, the positive is the source encoding at the
same spatial locations, and an InfoNCE objective with the positive at
index 0 scores them. It only exists for multi-bin histograms; callers
get an explicit skipped flag for a single bin rather than a silent zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F

from .bridge import BridgeConfig
from .errors import ConfigError, NumericalAbort


@dataclass
class LossWeights:
    lambda_sb: float = 1.0
    lambda_sc: float = 1.0
    lambda_tc: float = 1.0

    def __post_init__(self):
        if min(self.lambda_sb, self.lambda_sc, self.lambda_tc) < 0:
            raise ConfigError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return {
            "lambda_sb": self.lambda_sb,
            "lambda_sc": self.lambda_sc,
            "lambda_tc": self.lambda_tc,
        }


@dataclass
class ContrastiveConfig:
    """Knobs shared by both contrastive losses.

    temperature and negatives drive the temporal loss (negatives per
    location; 5 for 3 bins exhausts the non-identity permutations, 20 is
    the 8-bin default). spatial_temperature follows the established
    unpaired-translation setting. locations is the number of spatial
    positions sampled per scale, clamped to the scale's area.
    """

    temperature: float = 0.11
    negatives: int = 5
    locations: int = 64
    spatial_temperature: float = 0.07

    def __post_init__(self):
        if self.temperature <= 0 or self.spatial_temperature <= 0:
            raise ConfigError("temperatures must be positive")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if self.locations < 1:
            raise ConfigError("locations must be >= 1")

    @classmethod
    def for_bins(cls, bins: int, **overrides) -> "ContrastiveConfig":
        defaults = {3: 5, 8: 20}
        negatives = overrides.pop("negatives", defaults.get(bins, 5))
        return cls(negatives=negatives, **overrides)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "negatives": self.negatives,
            "locations": self.locations,
            "spatial_temperature": self.spatial_temperature,
        }


class TemporalContrastiveResult(NamedTuple):
    value: torch.Tensor
    skipped: bool


def adv_loss_critic(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares critic loss: mean (D(real)-1)^2 + mean D(fake)^2."""
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores**2).mean()


def adv_loss_gen(fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares generator loss: mean (D(fake)-1)^2."""
    return ((fake_scores - 1.0) ** 2).mean()


def sb_loss(x_t, x_hat, z, z_hat, t: float, cfg: BridgeConfig) -> torch.Tensor:
    """Mean-squared transport cost minus the weighted entropy surrogate.

    The surrogate is a variational lower bound on the conditional
    entropy, implemented as the negative per-dimension latent
    reconstruction error -mean((z - z_hat)^2): better reconstruction,
    larger bound. Its weight 2 * tau * (1 - t) vanishes at t = 1.
    """
    transport = ((x_t - x_hat) ** 2).mean()
    entropy_bound = -((z - z_hat) ** 2).mean()
    return transport - 2.0 * cfg.tau * (1.0 - t) * entropy_bound


def sample_locations(area: int, count: int, rng: np.random.Generator) -> torch.Tensor:
    """count distinct flat spatial indices, clamped to the available area."""
    take = min(count, area)
    return torch.from_numpy(rng.choice(area, size=take, replace=False).astype(np.int64))


def spatial_contrastive_loss(day_feats, gen_feats, heads, cfg: ContrastiveConfig, rng) -> torch.Tensor:
    """InfoNCE over spatial locations, one term per scale.

    Queries come from the generated encoding, the positive is the source
    encoding at the same location, negatives are the source encoding at
    the other sampled locations of the same image.
    """
    if len(day_feats) != len(gen_feats):
        raise ConfigError("feature lists must cover the same scales")
    total = None
    for level, (df, gf) in enumerate(zip(day_feats, gen_feats)):
        area = df.shape[-2] * df.shape[-1]
        locations = sample_locations(area, cfg.locations, rng)
        s = len(locations)
        if s < 2:
            raise ConfigError(f"scale {level} yields {s} location(s); need at least 2")
        queries = heads.project(level, gf, locations)  # (N, S, D)
        keys = heads.project(level, df, locations)
        logits = queries @ keys.transpose(1, 2) / cfg.spatial_temperature  # (N, S, S)
        target = torch.arange(s, device=logits.device).repeat(logits.shape[0])
        term = F.cross_entropy(logits.reshape(-1, s), target)
        total = term if total is None else total + term
    return total


@lru_cache(maxsize=8)
def _non_identity_permutations(bins: int) -> tuple:
    identity = tuple(range(bins))
    return tuple(p for p in itertools.permutations(range(bins)) if p != identity)


def shuffle_permutations(bins: int, count: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """count distinct non-identity permutations of the bin indices,
    sampled uniformly without replacement."""
    if bins < 2:
        raise ConfigError(f"bins={bins} admits no non-identity permutation (bins!-1 = 0)")
    available = math.factorial(bins) - 1
    if count > available:
        raise ConfigError(
            f"requested {count} permutations but only bins!-1 = {available} exist for bins={bins}"
        )
    if count < 1:
        raise ConfigError("count must be >= 1")
    pool = _non_identity_permutations(bins)
    picks = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in picks]


def permuted_channel_index(perm, group_size: int) -> torch.Tensor:
    """Channel gather index that re-orders contiguous bin groups."""
    idx = [g * group_size + k for g in perm for k in range(group_size)]
    return torch.tensor(idx, dtype=torch.int64)


def temporal_contrastive_loss(
    gen_feats,
    day_feats,
    heads,
    bins: int,
    cfg: ContrastiveConfig,
    rng: np.random.Generator,
) -> TemporalContrastiveResult:
    """Bin-order InfoNCE: sum over scales of the mean per-location loss.

    Per scale: sample `negatives` non-identity bin permutations, apply
    them to the generated encoding's channel groups, project reference /
    positive / negatives through the shared head, and score similarities
    at `locations` common spatial positions with the positive at logit
    index 0. Skipped (flagged) when bins == 1.
    """
    if bins == 1:
        anchor = gen_feats[0] if gen_feats else torch.zeros(())
        return TemporalContrastiveResult(anchor.new_zeros(()), True)
    if len(gen_feats) != len(day_feats):
        raise ConfigError("feature lists must cover the same scales")
    total = None
    for level, (gf, df) in enumerate(zip(gen_feats, day_feats)):
        channels = gf.shape[1]
        if channels % bins:
            raise ConfigError(f"scale {level} channels {channels} not divisible by bins {bins}")
        group = channels // bins
        perms = shuffle_permutations(bins, cfg.negatives, rng)
        locations = sample_locations(gf.shape[-2] * gf.shape[-1], cfg.locations, rng)
        z_ref = heads.project(level, gf, locations)  # (N, S, D)
        z_pos = heads.project(level, df, locations)
        z_neg = torch.stack(
            [
                heads.project(level, gf[:, permuted_channel_index(p, group)], locations)
                for p in perms
            ]
        )  # (R, N, S, D)
        pos_logit = (z_ref * z_pos).sum(-1)[None]  # (1, N, S)
        neg_logit = (z_ref[None] * z_neg).sum(-1)  # (R, N, S)
        logits = torch.cat([pos_logit, neg_logit], dim=0) / cfg.temperature
        flat = logits.permute(1, 2, 0).reshape(-1, logits.shape[0])  # (N*S, R+1)
        target = torch.zeros(flat.shape[0], dtype=torch.int64, device=flat.device)
        term = F.cross_entropy(flat, target)
        total = term if total is None else total + term
    return TemporalContrastiveResult(total, False)


def total_loss(adv, sb, sc, tc, weights: LossWeights):
    """Weighted sum of the generator-side objectives plus a breakdown.

    tc may be a TemporalContrastiveResult; a skipped one contributes
    nothing and is reported as such. Any non-finite component aborts with
    its name.
    """
    tc_skipped = isinstance(tc, TemporalContrastiveResult) and tc.skipped
    tc_value = tc.value if isinstance(tc, TemporalContrastiveResult) else tc
    components = {"adv_g": adv, "sb": sb, "sc": sc}
    if not tc_skipped:
        components["tc"] = tc_value
    for name, value in components.items():
        if not torch.isfinite(value):
            raise NumericalAbort(name, float(value.detach()))
    total = adv + weights.lambda_sb * sb + weights.lambda_sc * sc
    if not tc_skipped:
        total = total + weights.lambda_tc * tc_value
    breakdown = {
        "adv_g": float(adv.detach()),
        "sb": float(sb.detach()),
        "sc": float(sc.detach()),
        "tc": None if tc_skipped else float(tc_value.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
