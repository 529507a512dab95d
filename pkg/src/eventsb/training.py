"""Unpaired training orchestration and chain-based inference.

Each iteration draws one source and one target histogram independently
(no pairing), picks a chain depth uniformly, builds the intermediate
state by iterated generate-and-interpolate steps (gradient-free), and
then updates the critic and the generator on that single training pair.
Counts are clipped at a cap and affinely mapped to [-1, 1] on the way
into the networks and inverted on the way out.

Everything is reproducible from the config seed: module init, data
draws, augmentation, chain noise, and the contrastive sampling all
derive from it, so two runs of the same config produce byte-identical
loss logs.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .bridge import BridgeConfig, sample_chain
from .errors import CheckpointError, ConfigError, ConfigMismatchError, NumericalAbort
from .events import EventHistogram
from .losses import (
    ContrastiveConfig,
    LossWeights,
    adv_loss_critic,
    adv_loss_gen,
    sb_loss,
    spatial_contrastive_loss,
    temporal_contrastive_loss,
    total_loss,
)
from .networks import Generator, GeneratorConfig, PatchCritic, ProjectionHeads

LOSS_CSV_HEADER = "iteration,t_i,adv_g,adv_d,sb,sc,tc,total"

CHECKPOINT_VERSION = 1


def normalize_counts(data, cap: float):
    """Counts -> [-1, 1]: clip at cap, then affine map. Accepts numpy or torch."""
    if isinstance(data, torch.Tensor):
        return data.clamp(0, cap) / cap * 2.0 - 1.0
    return (np.clip(data, 0, cap) / cap * 2.0 - 1.0).astype(np.float32)


def denormalize_counts(data, cap: float):
    """Inverse of normalize_counts, clipped at zero counts."""
    if isinstance(data, torch.Tensor):
        return ((data + 1.0) / 2.0 * cap).clamp_min(0.0)
    return np.clip((data + 1.0) / 2.0 * cap, 0.0, None).astype(np.float32)


@dataclass
class TrainConfig:
    """Everything a training run depends on.

    size is the square crop fed to the networks (64 by default at desk
    scale; 256 mirrors full-scale training) and must be divisible by
    2^(downsamples+1) so the bottleneck keeps even dims for the wavelet
    split. base_channels None defers to the per-bin default rule.
    """

    direction: str = "day_to_night"
    bins: int = 3
    size: int = 64
    batch_size: int = 1
    iterations: int = 2000
    lr_generator: float = 2e-4
    lr_critic: float = 2e-4
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    contrastive: ContrastiveConfig | None = None
    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    checkpoint_every: int = 1000
    norm_cap: float = 10.0
    base_channels: int | None = None
    critic_channels: int = 64
    embed_dim: int = 64

    def __post_init__(self):
        if self.direction not in ("day_to_night", "night_to_day"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if self.batch_size < 1 or self.checkpoint_every < 1:
            raise ConfigError("batch_size and checkpoint_every must be positive")
        if self.norm_cap <= 0:
            raise ConfigError("norm_cap must be positive")
        if self.contrastive is None:
            self.contrastive = ContrastiveConfig.for_bins(self.bins)
        stride = 2 ** (self.generator_config().downsample_count + 1)
        if self.size % stride:
            raise ConfigError(
                f"size {self.size} must be divisible by {stride} "
                "(wavelet bottleneck needs even dims)"
            )

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(bins=self.bins, base_channels=self.base_channels)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "bins": self.bins,
            "size": self.size,
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "lr_generator": self.lr_generator,
            "lr_critic": self.lr_critic,
            "seed": self.seed,
            "weights": self.weights.to_dict(),
            "contrastive": self.contrastive.to_dict(),
            "bridge": self.bridge.to_dict(),
            "checkpoint_every": self.checkpoint_every,
            "norm_cap": self.norm_cap,
            "base_channels": self.base_channels,
            "critic_channels": self.critic_channels,
            "embed_dim": self.embed_dim,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        if "weights" in raw and isinstance(raw["weights"], dict):
            raw["weights"] = LossWeights(**raw["weights"])
        if "contrastive" in raw and isinstance(raw["contrastive"], dict):
            raw["contrastive"] = ContrastiveConfig(**raw["contrastive"])
        if "bridge" in raw and isinstance(raw["bridge"], dict):
            raw["bridge"] = BridgeConfig(**raw["bridge"])
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class TrainResult:
    checkpoint: dict
    checkpoint_path: Path
    loss_csv_path: Path


def _format(value: float) -> str:
    return repr(float(value))


def _crop_flip(data: np.ndarray, size: int, rng: torch.Generator) -> np.ndarray:
    c, h, w = data.shape
    if h < size or w < size:
        raise ConfigError(f"histogram {h}x{w} smaller than crop size {size}")
    top = int(torch.randint(0, h - size + 1, (1,), generator=rng))
    left = int(torch.randint(0, w - size + 1, (1,), generator=rng))
    out = data[:, top : top + size, left : left + size]
    if int(torch.randint(0, 2, (1,), generator=rng)):
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def _draw_batch(dataset, cfg: TrainConfig, rng: torch.Generator) -> torch.Tensor:
    picks = []
    for _ in range(cfg.batch_size):
        idx = int(torch.randint(0, len(dataset), (1,), generator=rng))
        crop = _crop_flip(dataset[idx].data, cfg.size, rng)
        picks.append(normalize_counts(crop, cfg.norm_cap))
    return torch.from_numpy(np.stack(picks))


def _checkpoint_dict(cfg, generator, critic, heads, iteration) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "train_config": cfg.to_dict(),
        "generator_config": generator.cfg.to_dict(),
        "steps": cfg.bridge.steps,
        "iteration": iteration,
        "generator": generator.state_dict(),
        "critic": critic.state_dict(),
        "heads": heads.state_dict(),
    }


def save_checkpoint(ckpt: dict, path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            torch.save(ckpt, f)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise CheckpointError(
            f"failed to write checkpoint at iteration {ckpt.get('iteration')} to {path}: {exc}"
        ) from exc


def load_checkpoint(path) -> dict:
    try:
        ckpt = torch.load(Path(path), map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"failed to read checkpoint {path}: {exc}") from exc
    version = ckpt.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has version {version}, expected {CHECKPOINT_VERSION}"
        )
    return ckpt


def _build_models(cfg: TrainConfig):
    gen_cfg = cfg.generator_config()
    generator = Generator(gen_cfg, steps=cfg.bridge.steps)
    critic = PatchCritic(
        2 * cfg.bins,
        base_channels=cfg.critic_channels,
        time_embed_dim=gen_cfg.time_embed_dim,
        steps=cfg.bridge.steps,
    )
    heads = ProjectionHeads(
        [gen_cfg.base_channels] * gen_cfg.scale_levels, embed_dim=cfg.embed_dim
    )
    return generator, critic, heads


def _check_dataset(name, dataset, cfg: TrainConfig):
    if not dataset:
        raise ConfigError(f"{name} dataset is empty")
    for h in dataset:
        if h.bins != cfg.bins:
            raise ConfigMismatchError("bins", cfg.bins, h.bins)


def train(cfg: TrainConfig, day_set, night_set, out_dir) -> TrainResult:
    """Run the full adversarial loop; returns checkpoint and loss log paths.

    day_set / night_set are sequences of EventHistogram. direction
    night_to_day swaps their source/target roles and changes nothing
    else. The loss CSV gains one row per iteration; the tc column reads
    'skipped' when bins == 1.
    """
    _check_dataset("day", day_set, cfg)
    _check_dataset("night", night_set, cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    generator, critic, heads = _build_models(cfg)
    sample_rng = torch.Generator().manual_seed(cfg.seed + 1)
    contrast_rng = np.random.default_rng(cfg.seed + 2)

    gen_opt = torch.optim.Adam(
        list(generator.parameters()) + list(heads.parameters()),
        lr=cfg.lr_generator,
        betas=(0.5, 0.999),
    )
    critic_opt = torch.optim.Adam(critic.parameters(), lr=cfg.lr_critic, betas=(0.5, 0.999))

    source, target = (day_set, night_set)
    if cfg.direction == "night_to_day":
        source, target = night_set, day_set

    steps = cfg.bridge.steps
    latent_dim = generator.cfg.latent_dim
    gen_fn = lambda x, t, z: generator(x, t, z)[0]  # noqa: E731

    csv_path = out_dir / "loss.csv"
    csv_tmp = out_dir / "loss.csv.tmp"
    ckpt_path = out_dir / "checkpoint_final.pt"

    with open(csv_tmp, "w") as csv_file:
        csv_file.write(LOSS_CSV_HEADER + "\n")
        for iteration in range(1, cfg.iterations + 1):
            x0 = _draw_batch(source, cfg, sample_rng)
            x1 = _draw_batch(target, cfg, sample_rng)
            step_index = int(torch.randint(0, steps, (1,), generator=sample_rng))
            t_value = step_index / steps

            state = sample_chain(
                gen_fn, x0, step_index, cfg.bridge, sample_rng, latent_dim=latent_dim
            )
            x_t = state.x
            z = torch.empty(x0.shape[0], latent_dim).normal_(generator=sample_rng)
            x_hat, z_hat = generator(x_t, step_index, z)

            d_loss = adv_loss_critic(
                critic(x1, step_index), critic(x_hat.detach(), step_index)
            )
            if not torch.isfinite(d_loss):
                raise NumericalAbort("adv_d", float(d_loss))
            critic_opt.zero_grad()
            d_loss.backward()
            critic_opt.step()

            g_adv = adv_loss_gen(critic(x_hat, step_index))
            sb = sb_loss(x_t, x_hat, z, z_hat, t_value, cfg.bridge)
            gen_feats = generator.encode_features(x_hat, step_index)
            src_feats = generator.encode_features(x0, step_index)
            sc = spatial_contrastive_loss(
                src_feats, gen_feats, heads, cfg.contrastive, contrast_rng
            )
            tc = temporal_contrastive_loss(
                gen_feats, src_feats, heads, cfg.bins, cfg.contrastive, contrast_rng
            )
            g_total, parts = total_loss(g_adv, sb, sc, tc, cfg.weights)
            gen_opt.zero_grad()
            g_total.backward()
            gen_opt.step()

            tc_cell = "skipped" if parts["tc"] is None else _format(parts["tc"])
            row = ",".join(
                [
                    str(iteration),
                    _format(t_value),
                    _format(parts["adv_g"]),
                    _format(float(d_loss.detach())),
                    _format(parts["sb"]),
                    _format(parts["sc"]),
                    tc_cell,
                    _format(parts["total"]),
                ]
            )
            csv_file.write(row + "\n")

            if iteration % cfg.checkpoint_every == 0 and iteration < cfg.iterations:
                save_checkpoint(
                    _checkpoint_dict(cfg, generator, critic, heads, iteration),
                    out_dir / f"checkpoint_{iteration:06d}.pt",
                )

    os.replace(csv_tmp, csv_path)
    checkpoint = _checkpoint_dict(cfg, generator, critic, heads, cfg.iterations)
    save_checkpoint(checkpoint, ckpt_path)
    return TrainResult(checkpoint=checkpoint, checkpoint_path=ckpt_path, loss_csv_path=csv_path)


def _generator_from_checkpoint(ckpt: dict) -> tuple[Generator, int]:
    gen_cfg = GeneratorConfig(**ckpt["generator_config"])
    generator = Generator(gen_cfg, steps=ckpt["steps"])
    generator.load_state_dict(ckpt["generator"])
    generator.eval()
    return generator, ckpt["steps"]


def models_from_checkpoint(checkpoint):
    """Rebuild (generator, critic, heads) in eval mode from a checkpoint."""
    ckpt = load_checkpoint(checkpoint) if not isinstance(checkpoint, dict) else checkpoint
    cfg = TrainConfig.from_dict(ckpt["train_config"])
    generator, _ = _generator_from_checkpoint(ckpt)
    _, critic, heads = _build_models(cfg)
    critic.load_state_dict(ckpt["critic"])
    heads.load_state_dict(ckpt["heads"])
    critic.eval()
    heads.eval()
    return generator, critic, heads


def translate(checkpoint, histograms, seed: int = 0) -> list[EventHistogram]:
    """Run the full chain on each histogram and return translated counts.

    checkpoint may be a path or an in-memory checkpoint dict. Inputs must
    match the checkpoint's bin count and crop size; mismatches are
    refused with the offending field named.
    """
    ckpt = load_checkpoint(checkpoint) if not isinstance(checkpoint, dict) else checkpoint
    cfg = TrainConfig.from_dict(ckpt["train_config"])
    generator, steps = _generator_from_checkpoint(ckpt)
    bridge_cfg = cfg.bridge
    rng = torch.Generator().manual_seed(seed)
    latent_dim = generator.cfg.latent_dim
    gen_fn = lambda x, t, z: generator(x, t, z)[0]  # noqa: E731

    outputs = []
    for h in histograms:
        if h.bins != cfg.bins:
            raise ConfigMismatchError("bins", cfg.bins, h.bins)
        if h.height != cfg.size or h.width != cfg.size:
            raise ConfigMismatchError("size", cfg.size, (h.height, h.width))
        x = torch.from_numpy(normalize_counts(h.data, cfg.norm_cap))[None]
        with torch.no_grad():
            state = sample_chain(gen_fn, x, steps - 1, bridge_cfg, rng, latent_dim=latent_dim)
            z = torch.empty(1, latent_dim).normal_(generator=rng)
            final, _ = generator(state.x, steps - 1, z)
        counts = denormalize_counts(final[0], cfg.norm_cap).numpy()
        outputs.append(EventHistogram(data=counts, bins=h.bins, domain_tag="translated"))
    return outputs
