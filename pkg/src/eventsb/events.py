"""Event streams, multi-bin polarity histograms, and synthetic day/night scenes.

An event is a brightness change at a pixel: (x, y, t, p) with polarity
p = +1 (brighter) or -1 (darker). A stream collects the events of one
fixed time window over a W x H sensor. Histograms voxelize a stream into
2*B channels: B temporal bins, each split into a positive and a negative
polarity plane, ordered bin-major (channels 2b and 2b+1 belong to bin b).

Synthetic scenes stand in for recorded driving data. Day scenes are
clean edge events from moving squares; night scenes take the same shape
events and add the three hallmarks of night captures: single-polarity
bursts under light disks, uniform background noise, and positional edge
jitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigError

SUPPORTED_BINS = (1, 3, 8)

# Flicker event rate inside a light disk, events per pixel per window.
# Chosen so the disks are visually obvious against the default background
# noise without drowning the shape edges.
LIGHT_FLICKER_RATE = 0.5


class Event(NamedTuple):
    """One camera event: pixel column/row, timestamp in seconds, polarity."""

    x: int
    y: int
    t: float
    p: int


class EventStream:
    """Time-sorted events over a window [t_start, t_end) on a W x H sensor.

    Internally stores parallel numpy arrays; iteration yields Event tuples.
    Construction validates the full contract: sorted timestamps inside the
    window, in-bounds coordinates, and polarity in {+1, -1}.
    """

    def __init__(self, xs, ys, ts, ps, width, height, t_start, t_end):
        if t_end <= t_start:
            raise ConfigError(f"empty window: [{t_start}, {t_end})")
        xs = np.asarray(xs, dtype=np.int32)
        ys = np.asarray(ys, dtype=np.int32)
        ts = np.asarray(ts, dtype=np.float64)
        ps = np.asarray(ps, dtype=np.int8)
        n = len(ts)
        if not (len(xs) == len(ys) == len(ps) == n):
            raise ValueError("event field arrays must have equal length")
        if n:
            if np.any(np.diff(ts) < 0):
                raise ValueError("event timestamps must be non-decreasing")
            if ts[0] < t_start or ts[-1] >= t_end:
                raise ValueError("event timestamps must lie in [t_start, t_end)")
            if xs.min() < 0 or xs.max() >= width or ys.min() < 0 or ys.max() >= height:
                raise ValueError("event coordinates out of sensor bounds")
            if not np.all(np.abs(ps) == 1):
                raise ValueError("polarity must be +1 or -1")
        self.xs, self.ys, self.ts, self.ps = xs, ys, ts, ps
        self.width = int(width)
        self.height = int(height)
        self.t_start = float(t_start)
        self.t_end = float(t_end)

    @classmethod
    def from_events(cls, events, width, height, t_start, t_end) -> "EventStream":
        events = list(events)
        xs = [e[0] for e in events]
        ys = [e[1] for e in events]
        ts = [e[2] for e in events]
        ps = [e[3] for e in events]
        return cls(xs, ys, ts, ps, width, height, t_start, t_end)

    def __len__(self) -> int:
        return len(self.ts)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.xs, self.ys, self.ts, self.ps):
            yield Event(int(x), int(y), float(t), int(p))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.t_start == other.t_start
            and self.t_end == other.t_end
            and np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
            and np.array_equal(self.ts, other.ts)
            and np.array_equal(self.ps, other.ps)
        )


@dataclass
class EventHistogram:
    """Binned event counts of shape (2*B, H, W), bin-major channel order.

    Channel 2b holds positive-polarity counts of bin b, channel 2b+1 the
    negative counts. Counts stay raw (no normalization) so storage is
    lossless; the trainer normalizes on its way into the network.
    """

    data: np.ndarray
    bins: int
    domain_tag: str = "day"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.bins not in SUPPORTED_BINS:
            raise ConfigError(f"bins must be one of {SUPPORTED_BINS}, got {self.bins}")
        if self.data.ndim != 3 or self.data.shape[0] != 2 * self.bins:
            raise ValueError(
                f"histogram data must have shape (2*{self.bins}, H, W), got {self.data.shape}"
            )
        if self.domain_tag not in ("day", "night", "translated"):
            raise ValueError(f"unknown domain tag {self.domain_tag!r}")
        if np.any(self.data < 0):
            raise ValueError("histogram counts must be non-negative")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventHistogram):
            return NotImplemented
        return (
            self.bins == other.bins
            and self.domain_tag == other.domain_tag
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class SceneConfig:
    """Parameters of one synthetic scene.

    The window length is a free choice here (recorded sequences elsewhere
    are commonly cut at 100 ms, hence the default). night_* fields only
    matter for generate_night_scene; a night scene with all of them zeroed
    degenerates to the matching day scene.
    """

    resolution: tuple[int, int] = (32, 32)  # (H, W)
    n_shapes: int = 2
    night_light_count: int = 3
    night_noise_rate: float = 0.05  # background events / pixel / window
    edge_jitter_sigma: float = 0.7  # pixels
    polarity_bias: float = 0.85
    seed: int = 0
    window: float = 0.1  # seconds
    samples_per_window: int = 24  # temporal sampling density of shape edges

    def __post_init__(self):
        h, w = self.resolution
        if h < 8 or w < 8:
            raise ConfigError(f"resolution must be at least 8x8, got {h}x{w}")
        if min(self.n_shapes, self.night_light_count, self.samples_per_window) < 0:
            raise ConfigError("counts must be non-negative")
        if self.night_noise_rate < 0 or self.edge_jitter_sigma < 0:
            raise ConfigError("rates and sigmas must be non-negative")
        if not 0.0 <= self.polarity_bias <= 1.0:
            raise ConfigError(f"polarity_bias must be in [0, 1], got {self.polarity_bias}")
        if self.window <= 0:
            raise ConfigError("window must be positive")


def bin_events(stream: EventStream, bins: int) -> EventHistogram:
    """Voxelize a stream into a (2*bins, H, W) count histogram.

    An event at time t lands in bin floor((t - t_start) / span * bins),
    clamped to bins-1 as t approaches t_end (right-open intervals, so the
    last bin absorbs its upper edge). Positive polarity increments channel
    2b, negative 2b+1.
    """
    if bins < 1:
        raise ConfigError(f"bin count must be >= 1, got {bins}")
    span = stream.t_end - stream.t_start
    if span <= 0:
        raise ConfigError(f"empty window: [{stream.t_start}, {stream.t_end})")
    data = np.zeros((2 * bins, stream.height, stream.width), dtype=np.float32)
    if len(stream):
        b = np.floor((stream.ts - stream.t_start) / span * bins).astype(np.int64)
        np.clip(b, 0, bins - 1, out=b)
        ch = 2 * b + (stream.ps < 0)
        flat = (ch * stream.height + stream.ys) * stream.width + stream.xs
        np.add.at(data.reshape(-1), flat, 1.0)
    return EventHistogram(data=data, bins=bins, domain_tag="day")


def polarity_imbalance(histogram: EventHistogram) -> float:
    """Normalized polarity asymmetry |positive - negative| / total.

    Near 0 for balanced day captures; grows when one polarity dominates,
    as it does under artificial lighting at night.
    """
    pos = float(histogram.data[0::2].sum())
    neg = float(histogram.data[1::2].sum())
    total = pos + neg
    if total == 0:
        return 0.0
    return abs(pos - neg) / total


def moving_square_events(
    center,
    velocity,
    half_size,
    width,
    height,
    times,
):
    """Edge events of one square translating at constant velocity.

    At each sample time the square's leading edge (in the direction of
    motion, per axis) emits +1 events and the trailing edge -1 events,
    one per edge pixel; pixels are the floor of the continuous edge
    position. Events outside the sensor are dropped. Returns (xs, ys,
    ts, ps) arrays sorted by the order of `times`.
    """
    cx0, cy0 = center
    vx, vy = velocity
    xs, ys, ts, ps = [], [], [], []
    for t in np.asarray(times, dtype=np.float64):
        cx = cx0 + vx * t
        cy = cy0 + vy * t
        left = int(math.floor(cx - half_size))
        right = int(math.floor(cx + half_size))
        top = int(math.floor(cy - half_size))
        bottom = int(math.floor(cy + half_size))
        rows = np.arange(top, bottom + 1)
        cols = np.arange(left, right + 1)
        emitted = []
        if vx > 0:
            emitted += [(np.full_like(rows, right), rows, 1), (np.full_like(rows, left), rows, -1)]
        elif vx < 0:
            emitted += [(np.full_like(rows, left), rows, 1), (np.full_like(rows, right), rows, -1)]
        if vy > 0:
            emitted += [(cols, np.full_like(cols, bottom), 1), (cols, np.full_like(cols, top), -1)]
        elif vy < 0:
            emitted += [(cols, np.full_like(cols, top), 1), (cols, np.full_like(cols, bottom), -1)]
        for ex, ey, pol in emitted:
            keep = (ex >= 0) & (ex < width) & (ey >= 0) & (ey < height)
            xs.append(ex[keep])
            ys.append(ey[keep])
            ts.append(np.full(keep.sum(), t))
            ps.append(np.full(keep.sum(), pol, dtype=np.int8))
    if not xs:
        return (np.empty(0, np.int32),) * 2 + (np.empty(0, np.float64), np.empty(0, np.int8))
    return (
        np.concatenate(xs).astype(np.int32),
        np.concatenate(ys).astype(np.int32),
        np.concatenate(ts),
        np.concatenate(ps),
    )


def _shape_events(cfg: SceneConfig, rng: np.random.Generator):
    """Draw the moving-square edge events shared by day and night scenes."""
    h, w = cfg.resolution
    times = (np.arange(cfg.samples_per_window) + 0.5) / cfg.samples_per_window * cfg.window
    xs, ys, ts, ps = [], [], [], []
    for _ in range(cfg.n_shapes):
        half = int(rng.integers(2, max(3, min(h, w) // 6) + 1))
        cx0 = rng.uniform(half + 1.0, w - half - 2.0)
        cy0 = rng.uniform(half + 1.0, h - half - 2.0)
        # Speed in pixels per window, re-expressed per second; keep a floor
        # so per-bin motion is visible.
        speed = rng.uniform(2.0, max(3.0, min(h, w) / 4.0)) / cfg.window
        angle = rng.uniform(0.0, 2.0 * np.pi)
        vx, vy = speed * np.cos(angle), speed * np.sin(angle)
        ex, ey, et, ep = moving_square_events((cx0, cy0), (vx, vy), half, w, h, times)
        xs.append(ex)
        ys.append(ey)
        ts.append(et)
        ps.append(ep)
    if not xs:
        return (
            np.empty(0, np.int32),
            np.empty(0, np.int32),
            np.empty(0, np.float64),
            np.empty(0, np.int8),
        )
    return (np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(ps))


def _sorted_stream(xs, ys, ts, ps, cfg: SceneConfig) -> EventStream:
    h, w = cfg.resolution
    order = np.argsort(ts, kind="stable")
    return EventStream(xs[order], ys[order], ts[order], ps[order], w, h, 0.0, cfg.window)


def generate_day_scene(cfg: SceneConfig) -> EventStream:
    """Clean edge events from moving squares; zero background noise.

    Deterministic for a given config (including seed). Polarities are
    balanced by construction: every leading edge has a matching trailing
    edge.
    """
    rng = np.random.default_rng(cfg.seed)
    xs, ys, ts, ps = _shape_events(cfg, rng)
    return _sorted_stream(xs, ys, ts, ps, cfg)


def generate_night_scene(cfg: SceneConfig) -> EventStream:
    """Day-scene events plus night artifacts.

    On top of the identical shape events (same seed, same draws) this adds
    flicker bursts inside randomly placed light disks, uniform background
    noise at night_noise_rate, and Gaussian positional jitter. Finally,
    any event whose (jittered) position falls inside a light disk is
    forced to positive polarity with probability polarity_bias.
    """
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.resolution
    xs, ys, ts, ps = _shape_events(cfg, rng)

    disks = []
    if cfg.night_light_count > 0:
        for _ in range(cfg.night_light_count):
            radius = rng.uniform(min(h, w) / 10.0, min(h, w) / 5.0)
            cx = rng.uniform(0, w - 1)
            cy = rng.uniform(0, h - 1)
            disks.append((cx, cy, radius))
        flick_x, flick_y, flick_t, flick_p = [], [], [], []
        for cx, cy, radius in disks:
            count = int(rng.poisson(LIGHT_FLICKER_RATE * np.pi * radius**2))
            r = radius * np.sqrt(rng.uniform(0, 1, count))
            theta = rng.uniform(0, 2 * np.pi, count)
            fx = np.clip(np.round(cx + r * np.cos(theta)), 0, w - 1).astype(np.int32)
            fy = np.clip(np.round(cy + r * np.sin(theta)), 0, h - 1).astype(np.int32)
            flick_x.append(fx)
            flick_y.append(fy)
            flick_t.append(rng.uniform(0, cfg.window, count))
            flick_p.append(rng.choice(np.array([1, -1], dtype=np.int8), count))
        xs = np.concatenate([xs] + flick_x)
        ys = np.concatenate([ys] + flick_y)
        ts = np.concatenate([ts] + flick_t)
        ps = np.concatenate([ps] + flick_p)

    if cfg.night_noise_rate > 0:
        count = int(rng.poisson(cfg.night_noise_rate * h * w))
        xs = np.concatenate([xs, rng.integers(0, w, count).astype(np.int32)])
        ys = np.concatenate([ys, rng.integers(0, h, count).astype(np.int32)])
        ts = np.concatenate([ts, rng.uniform(0, cfg.window, count)])
        ps = np.concatenate([ps, rng.choice(np.array([1, -1], dtype=np.int8), count)])

    if cfg.edge_jitter_sigma > 0 and len(xs):
        jx = np.round(xs + rng.normal(0, cfg.edge_jitter_sigma, len(xs)))
        jy = np.round(ys + rng.normal(0, cfg.edge_jitter_sigma, len(ys)))
        xs = np.clip(jx, 0, w - 1).astype(np.int32)
        ys = np.clip(jy, 0, h - 1).astype(np.int32)

    if disks and len(xs):
        inside = np.zeros(len(xs), dtype=bool)
        for cx, cy, radius in disks:
            inside |= (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
        n_inside = int(inside.sum())
        if n_inside:
            forced = rng.uniform(0, 1, n_inside) < cfg.polarity_bias
            pin = ps[inside]
            pin[forced] = 1
            ps = ps.copy()
            ps[inside] = pin

    return _sorted_stream(xs, ys, ts, ps, cfg)
