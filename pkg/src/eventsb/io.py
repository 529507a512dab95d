"""Bit-exact binary storage for histograms (EVH1) and raw streams (EVS1).

Both formats are little-endian throughout.

EVH1 layout:
    magic "EVH1" | u32 B | u32 H | u32 W | u8 domain_tag |
    2*B*H*W float32 values in (channel, row, column) order

EVS1 layout:
    magic "EVS1" | u32 W | u32 H | f64 t_start | f64 t_end |
    per event: u16 x | u16 y | f64 t | i8 p

Writes are atomic: a temp file in the target directory is renamed over
the destination, so readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .events import EventHistogram, EventStream

HISTOGRAM_MAGIC = b"EVH1"
STREAM_MAGIC = b"EVS1"

_DOMAIN_TO_TAG = {"day": 0, "night": 1, "translated": 2}
_TAG_TO_DOMAIN = {v: k for k, v in _DOMAIN_TO_TAG.items()}

_EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<f8"), ("p", "i1")])


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write payload to path via temp file + rename in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_histogram(path, histogram: EventHistogram) -> None:
    header = HISTOGRAM_MAGIC + struct.pack(
        "<III", histogram.bins, histogram.height, histogram.width
    )
    header += struct.pack("<B", _DOMAIN_TO_TAG[histogram.domain_tag])
    payload = np.ascontiguousarray(histogram.data, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_histogram(path) -> EventHistogram:
    raw = Path(path).read_bytes()
    if len(raw) < 17:
        raise DataFormatError(f"truncated EVH1 header: {len(raw)} bytes", offset=len(raw))
    if raw[:4] != HISTOGRAM_MAGIC:
        raise DataFormatError(f"bad magic {raw[:4]!r}, expected {HISTOGRAM_MAGIC!r}", offset=0)
    bins, height, width = struct.unpack_from("<III", raw, 4)
    (tag,) = struct.unpack_from("<B", raw, 16)
    if tag not in _TAG_TO_DOMAIN:
        raise DataFormatError(f"unknown domain tag {tag}", offset=16)
    expected = 2 * bins * height * width * 4
    body = raw[17:]
    if len(body) != expected:
        raise DataFormatError(
            f"payload is {len(body)} bytes, expected {expected}", offset=17 + len(body)
        )
    data = np.frombuffer(body, dtype="<f4").reshape(2 * bins, height, width).copy()
    return EventHistogram(data=data, bins=bins, domain_tag=_TAG_TO_DOMAIN[tag])


def write_stream(path, stream: EventStream) -> None:
    if stream.width > 0xFFFF or stream.height > 0xFFFF:
        raise DataFormatError("EVS1 stores u16 coordinates; sensor too large")
    header = STREAM_MAGIC + struct.pack(
        "<IIdd", stream.width, stream.height, stream.t_start, stream.t_end
    )
    records = np.empty(len(stream), dtype=_EVENT_DTYPE)
    records["x"] = stream.xs
    records["y"] = stream.ys
    records["t"] = stream.ts
    records["p"] = stream.ps
    atomic_write_bytes(path, header + records.tobytes())


def read_stream(path) -> EventStream:
    raw = Path(path).read_bytes()
    if len(raw) < 28:
        raise DataFormatError(f"truncated EVS1 header: {len(raw)} bytes", offset=len(raw))
    if raw[:4] != STREAM_MAGIC:
        raise DataFormatError(f"bad magic {raw[:4]!r}, expected {STREAM_MAGIC!r}", offset=0)
    width, height, t_start, t_end = struct.unpack_from("<IIdd", raw, 4)
    body = raw[28:]
    if len(body) % _EVENT_DTYPE.itemsize:
        raise DataFormatError(
            f"payload is {len(body)} bytes, not a multiple of {_EVENT_DTYPE.itemsize}",
            offset=28 + len(body) - len(body) % _EVENT_DTYPE.itemsize,
        )
    records = np.frombuffer(body, dtype=_EVENT_DTYPE)
    bad = np.flatnonzero(np.abs(records["p"].astype(np.int16)) != 1)
    if bad.size:
        raise DataFormatError(
            f"invalid polarity {records['p'][bad[0]]}",
            offset=28 + int(bad[0]) * _EVENT_DTYPE.itemsize + 12,
        )
    try:
        return EventStream(
            records["x"].astype(np.int32),
            records["y"].astype(np.int32),
            records["t"].copy(),
            records["p"].copy(),
            width,
            height,
            t_start,
            t_end,
        )
    except ValueError as exc:
        raise DataFormatError(f"invalid stream contents: {exc}") from exc
