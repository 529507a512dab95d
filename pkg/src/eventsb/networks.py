"""Learnable architectures.

The generator is a time-conditional U-Net whose encoder keeps the B
temporal bins of the input histogram on fully separate computation paths
(grouped convolutions, per-bin normalization statistics) and mixes them
only inside the per-scale global blocks that also perform the
downsampling. The bottleneck splits into a spatial branch (residual +
attention) and a frequency branch that transforms only the HH wavelet
subband. The critic is a patch-output convolutional network conditioned
on the same timestep embedding. Projection heads map per-location
feature vectors to unit-norm embeddings for the contrastive losses, and
two small day/night classifiers serve as metric feature extractors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import CertificationError, ConfigError
from .events import EventHistogram
from .wavelet import WaveletSubbands, dwt2, idwt2

_CHANNEL_RULE = {1: 64, 3: 72, 8: 96}


def _norm_groups(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


def zero_module(module: nn.Module) -> nn.Module:
    """Zero all parameters; used on the last layer of residual paths."""
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


def sinusoidal_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sin/cos features of a normalized time in [0, 1], shape (N, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / max(half - 1, 1)
    )
    # Stretch [0, 1] over the usual positional range so nearby steps stay
    # distinguishable.
    args = t[:, None] * 1000.0 * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


@dataclass
class GeneratorConfig:
    """Shape of the translation U-Net.

    base_channels defaults to 64/72/96 for 1/3/8 bins and must divide
    evenly into per-bin groups. The encoder has scale_levels stages and
    downsamples at downsample_count of them (never the first or last).
    """

    bins: int = 3
    scale_levels: int = 5
    base_channels: int | None = None
    downsample_count: int = 3
    latent_dim: int = 8
    time_embed_dim: int = 64

    def __post_init__(self):
        if self.base_channels is None:
            if self.bins not in _CHANNEL_RULE:
                raise ConfigError(f"no default channel rule for bins={self.bins}")
            self.base_channels = _CHANNEL_RULE[self.bins]
        if self.bins < 1:
            raise ConfigError(f"bins must be >= 1, got {self.bins}")
        if self.base_channels % self.bins:
            raise ConfigError(
                f"base_channels {self.base_channels} not divisible by bins {self.bins}"
            )
        if self.downsample_count > self.scale_levels - 2:
            raise ConfigError(
                f"downsample_count {self.downsample_count} exceeds scale_levels-2 "
                f"({self.scale_levels - 2})"
            )
        if self.latent_dim < 1 or self.time_embed_dim < 2:
            raise ConfigError("latent_dim must be >= 1 and time_embed_dim >= 2")

    @property
    def downsample_flags(self) -> list[bool]:
        # Scales 2..downsample_count+1 (1-indexed) stride down; the first
        # and last scale never do.
        return [1 <= level <= self.downsample_count for level in range(self.scale_levels)]

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "scale_levels": self.scale_levels,
            "base_channels": self.base_channels,
            "downsample_count": self.downsample_count,
            "latent_dim": self.latent_dim,
            "time_embed_dim": self.time_embed_dim,
        }


class ResBlock(nn.Module):
    """Norm-SiLU-conv residual block with additive timestep conditioning.

    groups > 1 partitions the channels into isolated paths (no weight
    sharing, no cross-group mixing); normalization statistics are then
    computed per group so nothing leaks across the partition. Zeroing
    conv2 turns the block into an exact identity.
    """

    def __init__(self, in_channels, out_channels, time_dim, groups=1):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups if groups > 1 else _norm_groups(in_channels), in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1, groups=groups)
        self.time_proj = nn.Linear(time_dim, out_channels)
        self.norm2 = nn.GroupNorm(
            groups if groups > 1 else _norm_groups(out_channels), out_channels
        )
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, groups=groups)
        if in_channels == out_channels:
            self.skip = nn.Identity()
        else:
            self.skip = nn.Conv2d(in_channels, out_channels, 1, groups=groups)

    def forward(self, x, t_emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(t_emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class SelfAttention2d(nn.Module):
    """Single-head spatial self-attention with zero-initialized output."""

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.norm = nn.GroupNorm(_norm_groups(channels), channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = zero_module(nn.Conv2d(channels, channels, 1))

    def forward(self, x):
        n, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).chunk(3, dim=1)
        q = q.flatten(2).transpose(1, 2)  # (n, hw, c)
        k = k.flatten(2)  # (n, c, hw)
        attn = torch.softmax(q @ k / math.sqrt(c), dim=-1)
        v = v.flatten(2).transpose(1, 2)
        out = (attn @ v).transpose(1, 2).reshape(n, c, h, w)
        return x + self.proj(out)


class BinwiseEncoder(nn.Module):
    """Per-scale bin-isolated blocks followed by mixing/downsampling convs.

    forward returns the list of per-scale bin-isolated outputs (the skip
    and contrastive taps) plus the feature entering the bottleneck.
    """

    def __init__(self, cfg: GeneratorConfig, time_dim: int):
        super().__init__()
        bins, ch = cfg.bins, cfg.base_channels
        self.bins = bins
        self.input_proj = nn.Conv2d(2 * bins, ch, 3, padding=1, groups=bins)
        self.stages = nn.ModuleList(
            ResBlock(ch, ch, time_dim, groups=bins) for _ in range(cfg.scale_levels)
        )
        self.globals = nn.ModuleList(
            nn.Conv2d(ch, ch, 3, stride=2 if down else 1, padding=1)
            for down in cfg.downsample_flags
        )

    def forward(self, x, t_emb):
        f = self.input_proj(x)
        taps = []
        for stage, mix in zip(self.stages, self.globals):
            tap = stage(f, t_emb)
            taps.append(tap)
            f = mix(tap)
        return taps, f


class SpatialFrequencyBottleneck(nn.Module):
    """Sum of a spatial branch and a frequency branch at the lowest scale.

    Spatial: residual block + self-attention. Frequency: Haar-decompose,
    pass ll/lh/hl through untouched, transform only hh with a residual
    block, recompose. Requires even spatial dims.
    """

    def __init__(self, channels, time_dim):
        super().__init__()
        self.spatial = ResBlock(channels, channels, time_dim)
        self.attention = SelfAttention2d(channels)
        self.high_band = ResBlock(channels, channels, time_dim)

    def forward(self, f, t_emb):
        spatial_out = self.attention(self.spatial(f, t_emb))
        bands = dwt2(f)
        hh = self.high_band(bands.hh, t_emb)
        frequency_out = idwt2(WaveletSubbands(bands.ll, bands.lh, bands.hl, hh))
        return spatial_out + frequency_out


class Generator(nn.Module):
    """Time-conditional U-Net translator with an entropy latent.

    forward(x, t_index, z) returns the translated tensor (same shape as
    x, tanh-bounded) and the latent reconstruction z_hat read off the
    decoder output features.
    """

    def __init__(self, cfg: GeneratorConfig, steps: int = 5):
        super().__init__()
        self.cfg = cfg
        self.steps = steps
        ch, tdim = cfg.base_channels, cfg.time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(tdim, tdim), nn.SiLU(), nn.Linear(tdim, tdim)
        )
        self.encoder = BinwiseEncoder(cfg, tdim)
        self.latent_inject = nn.Conv2d(ch + cfg.latent_dim, ch, 1)
        self.bottleneck = SpatialFrequencyBottleneck(ch, tdim)
        self.upsamples = nn.ModuleDict(
            {
                str(level): nn.ConvTranspose2d(ch, ch, 4, stride=2, padding=1)
                for level, down in enumerate(cfg.downsample_flags)
                if down
            }
        )
        self.decoder_blocks = nn.ModuleList(
            ResBlock(2 * ch, ch, tdim) for _ in range(cfg.scale_levels)
        )
        self.out_norm = nn.GroupNorm(_norm_groups(ch), ch)
        self.out_conv = nn.Conv2d(ch, 2 * cfg.bins, 3, padding=1)
        self.latent_head = nn.Sequential(
            nn.Linear(ch, ch), nn.SiLU(), nn.Linear(ch, cfg.latent_dim)
        )

    def time_embedding(self, t_index, batch: int, like: torch.Tensor) -> torch.Tensor:
        if isinstance(t_index, torch.Tensor):
            t_index = int(t_index.item())
        if not 0 <= t_index < self.steps:
            raise IndexError(f"timestep {t_index} out of range [0, {self.steps})")
        t = torch.full((batch,), t_index / self.steps, dtype=like.dtype, device=like.device)
        return self.time_mlp(sinusoidal_time_embedding(t, self.cfg.time_embed_dim))

    def encode(self, x, t_index):
        """Per-scale bin-isolated features and the bottleneck input."""
        t_emb = self.time_embedding(t_index, x.shape[0], x)
        return self.encoder(x, t_emb)

    def encode_features(self, x, t_index):
        """Just the per-scale taps, for the contrastive losses."""
        return self.encode(x, t_index)[0]

    def forward(self, x, t_index, z):
        if x.dim() != 4:
            raise ValueError(f"expected (N, C, H, W) input, got shape {tuple(x.shape)}")
        if z.dim() != 2 or z.shape[1] != self.cfg.latent_dim:
            raise ValueError(f"latent must be (N, {self.cfg.latent_dim}), got {tuple(z.shape)}")
        t_emb = self.time_embedding(t_index, x.shape[0], x)
        taps, mid = self.encoder(x, t_emb)
        zmap = z[:, :, None, None].expand(-1, -1, mid.shape[2], mid.shape[3])
        mid = self.latent_inject(torch.cat([mid, zmap], dim=1))
        h = self.bottleneck(mid, t_emb)
        for level in reversed(range(self.cfg.scale_levels)):
            if h.shape[-1] != taps[level].shape[-1]:
                h = self.upsamples[str(level)](h)
            h = self.decoder_blocks[level](torch.cat([h, taps[level]], dim=1), t_emb)
        out = torch.tanh(self.out_conv(F.silu(self.out_norm(h))))
        z_hat = self.latent_head(h.mean(dim=(2, 3)))
        return out, z_hat


class PatchCritic(nn.Module):
    """Strided conv stack emitting one score per receptive-field patch."""

    def __init__(self, in_channels, base_channels=64, time_embed_dim=64, stages=3, steps=5):
        super().__init__()
        self.steps = steps
        self.time_embed_dim = time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(time_embed_dim, time_embed_dim),
            nn.SiLU(),
            nn.Linear(time_embed_dim, time_embed_dim),
        )
        convs, norms, projs = [], [], []
        ch_in = in_channels
        ch_out = base_channels
        for _ in range(stages):
            convs.append(nn.Conv2d(ch_in, ch_out, 4, stride=2, padding=1))
            norms.append(nn.GroupNorm(_norm_groups(ch_out), ch_out))
            projs.append(nn.Linear(time_embed_dim, ch_out))
            ch_in, ch_out = ch_out, min(2 * ch_out, 4 * base_channels)
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)
        self.time_projs = nn.ModuleList(projs)
        self.head = nn.Conv2d(ch_in, 1, 3, padding=1)

    def forward(self, x, t_index):
        if isinstance(t_index, torch.Tensor):
            t_index = int(t_index.item())
        if not 0 <= t_index < self.steps:
            raise IndexError(f"timestep {t_index} out of range [0, {self.steps})")
        t = torch.full((x.shape[0],), t_index / self.steps, dtype=x.dtype, device=x.device)
        t_emb = self.time_mlp(sinusoidal_time_embedding(t, self.time_embed_dim))
        h = x
        for conv, norm, proj in zip(self.convs, self.norms, self.time_projs):
            h = F.leaky_relu(norm(conv(h)), 0.2)
            h = h + proj(t_emb)[:, :, None, None]
        return self.head(h)


class ProjectionHeads(nn.Module):
    """Per-scale two-layer MLPs mapping feature vectors to the unit sphere."""

    def __init__(self, channel_dims, embed_dim=64):
        super().__init__()
        self.embed_dim = embed_dim
        self.heads = nn.ModuleList(
            nn.Sequential(nn.Linear(c, embed_dim), nn.ReLU(), nn.Linear(embed_dim, embed_dim))
            for c in channel_dims
        )

    def project(self, level, features, locations):
        """Gather per-location channel vectors and project to (N, S, D).

        features: (N, C, H, W); locations: flat int64 indices into H*W.
        Output rows are L2-normalized.
        """
        flat = features.flatten(2)  # (N, C, HW)
        sel = flat[:, :, locations].permute(0, 2, 1)  # (N, S, C)
        return F.normalize(self.heads[level](sel), dim=-1, eps=1e-8)


def _conv_block2d(ch_in, ch_out):
    return nn.Sequential(
        nn.Conv2d(ch_in, ch_out, 3, stride=2, padding=1),
        nn.GroupNorm(_norm_groups(ch_out), ch_out),
        nn.ReLU(),
    )


class FeatureExtractor2d(nn.Module):
    """Four-block CNN day/night classifier; 64-d pooled penultimate features.

    Inputs are normalized counts in [-1, 1]; internally they are shifted
    so empty cells sit at 0 — histograms are overwhelmingly background
    and the sparse coding separates the classes far better.
    """

    arch_id = "hist2d-v1"

    def __init__(self, in_channels, feature_dim=64, norm_cap=10.0):
        super().__init__()
        self.in_channels = in_channels
        self.feature_dim = feature_dim
        self.norm_cap = norm_cap
        self.fingerprint = None
        self.blocks = nn.Sequential(
            _conv_block2d(in_channels, 32),
            _conv_block2d(32, 64),
            _conv_block2d(64, 64),
            _conv_block2d(64, feature_dim),
        )
        self.classifier = nn.Linear(feature_dim, 2)

    def features(self, x):
        h = self.blocks(x + 1.0)
        return F.adaptive_avg_pool2d(h, 1).flatten(1)

    def forward(self, x):
        return self.classifier(self.features(x))


class FeatureExtractor3d(nn.Module):
    """Spatio-temporal classifier treating the B bins as a depth axis."""

    arch_id = "hist3d-v1"

    def __init__(self, bins, feature_dim=64, norm_cap=10.0):
        super().__init__()
        self.bins = bins
        self.in_channels = 2 * bins
        self.feature_dim = feature_dim
        self.norm_cap = norm_cap
        self.fingerprint = None
        kd = 3 if bins >= 3 else 1
        pad = (kd // 2, 1, 1)

        def block(ch_in, ch_out):
            return nn.Sequential(
                nn.Conv3d(ch_in, ch_out, (kd, 3, 3), stride=(1, 2, 2), padding=pad),
                nn.GroupNorm(_norm_groups(ch_out), ch_out),
                nn.ReLU(),
            )

        self.blocks = nn.Sequential(
            block(2, 32), block(32, 64), block(64, 64), block(64, feature_dim)
        )
        self.classifier = nn.Linear(feature_dim, 2)

    def features(self, x):
        n, c, h, w = x.shape
        vol = (x + 1.0).reshape(n, self.bins, 2, h, w).transpose(1, 2)  # (N, 2, B, H, W)
        out = self.blocks(vol)
        return F.adaptive_avg_pool3d(out, 1).flatten(1)

    def forward(self, x):
        return self.classifier(self.features(x))


def extract_features(extractor, histogram: EventHistogram) -> torch.Tensor:
    """Penultimate features of one histogram under a certified extractor."""
    if getattr(extractor, "fingerprint", None) is None:
        raise CertificationError(
            "fingerprint missing: extractor has not been trained/certified"
        )
    from .training import normalize_counts  # local to avoid a module cycle

    x = torch.from_numpy(normalize_counts(histogram.data, extractor.norm_cap))
    with torch.no_grad():
        extractor.eval()
        return extractor.features(x[None])[0]


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
