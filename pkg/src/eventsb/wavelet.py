"""Single-level orthonormal Haar decomposition on 2-D feature maps.

Each non-overlapping 2x2 block [[a, b], [c, d]] maps to four half-
resolution subbands:

    ll = (a + b + c + d) / 2      lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2      hh = (a - b - c + d) / 2

The 1/2 factor makes the transform orthonormal, so energy is preserved
(Parseval) and the inverse is exact. Both directions are plain tensor
arithmetic and therefore differentiable.
"""

from __future__ import annotations

from typing import NamedTuple

import torch


class WaveletSubbands(NamedTuple):
    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor


def dwt2(x: torch.Tensor) -> WaveletSubbands:
    """Decompose (..., H, W) into four (..., H/2, W/2) subbands; H, W even."""
    h, w = x.shape[-2], x.shape[-1]
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for a 2x2 block transform, got {h}x{w}")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return WaveletSubbands(
        ll=(a + b + c + d) / 2,
        lh=(a + b - c - d) / 2,
        hl=(a - b + c - d) / 2,
        hh=(a - b - c + d) / 2,
    )


def idwt2(s: WaveletSubbands) -> torch.Tensor:
    """Exact inverse of dwt2; subbands must share one shape."""
    ll, lh, hl, hh = s
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ValueError(
            f"subband shapes differ: {ll.shape}, {lh.shape}, {hl.shape}, {hh.shape}"
        )
    a = (ll + lh + hl + hh) / 2
    b = (ll + lh - hl - hh) / 2
    c = (ll - lh + hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    h2, w2 = ll.shape[-2], ll.shape[-1]
    lead = ll.shape[:-2]
    top = torch.stack((a, b), dim=-1).reshape(*lead, h2, 2 * w2)  # interleave columns
    bottom = torch.stack((c, d), dim=-1).reshape(*lead, h2, 2 * w2)
    return torch.stack((top, bottom), dim=-2).reshape(*lead, 2 * h2, 2 * w2)
