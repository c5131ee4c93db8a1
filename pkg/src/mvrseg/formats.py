"""Binary file formats: MVRF feature grids and MVRP probe parameters.

MVRF (little-endian):
    magic "MVRF" | version u16 = 1 | resolution_tag u32 | height u32 |
    width u32 | channels u32 | transform_tag u8 (0 id, 1 hflip, 2 vflip) |
    dtype u8 (0 = f32) | reserved u16 = 0 | payload h*w*c f32, row-major,
    channel-fastest.

MVRP (little-endian):
    magic "MVRP" | version u16 = 1 | in_dim u32 | hidden u32 |
    w1 row-major f32 | b1 f32 | w2 f32 | b2 f32.

Both formats round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import TRANSFORM_CODES, TRANSFORM_NAMES, FeatureStack
from .probe import ProbeParams

MVRF_MAGIC = b"MVRF"
MVRP_MAGIC = b"MVRP"
MVRF_VERSION = 1
MVRP_VERSION = 1

_MVRF_HEADER = struct.Struct("<4sHIIIIBBH")
_MVRP_HEADER = struct.Struct("<4sHII")

MVRF_HEADER_SIZE = _MVRF_HEADER.size  # 26 bytes


class FeatureFileError(Exception):
    """Base class for feature/probe file format errors."""


class CorruptHeaderError(FeatureFileError):
    """Header is malformed: bad magic, impossible dimensions, or trailing bytes."""


class UnsupportedVersionError(FeatureFileError):
    """File declares a version or dtype this reader does not implement."""


class TruncatedPayloadError(FeatureFileError):
    """Payload is shorter than the header promises."""


def write_feature_stack(path: str | Path, stack: FeatureStack) -> None:
    header = _MVRF_HEADER.pack(
        MVRF_MAGIC,
        MVRF_VERSION,
        stack.resolution_tag,
        stack.height,
        stack.width,
        stack.channels,
        TRANSFORM_CODES[stack.transform_tag],
        0,  # dtype f32
        0,  # reserved
    )
    payload = np.ascontiguousarray(stack.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_feature_stack(path: str | Path) -> FeatureStack:
    raw = Path(path).read_bytes()
    if len(raw) < MVRF_HEADER_SIZE:
        raise CorruptHeaderError(f"{path}: file shorter than the {MVRF_HEADER_SIZE}-byte header")
    magic, version, resolution, height, width, channels, tcode, dtype, reserved = (
        _MVRF_HEADER.unpack_from(raw)
    )
    if magic != MVRF_MAGIC:
        raise CorruptHeaderError(f"{path}: bad magic {magic!r}")
    if version != MVRF_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if dtype != 0:
        raise UnsupportedVersionError(f"{path}: unsupported dtype code {dtype}")
    if reserved != 0:
        raise CorruptHeaderError(f"{path}: reserved field must be 0, got {reserved}")
    if tcode not in TRANSFORM_NAMES:
        raise CorruptHeaderError(f"{path}: unknown transform code {tcode}")
    if min(height, width, channels) < 1:
        raise CorruptHeaderError(f"{path}: zero-sized grid {height}x{width}x{channels}")
    expected = height * width * channels * 4
    actual = len(raw) - MVRF_HEADER_SIZE
    if actual < expected:
        raise TruncatedPayloadError(f"{path}: payload {actual} bytes, header promises {expected}")
    if actual > expected:
        raise CorruptHeaderError(f"{path}: {actual - expected} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", offset=MVRF_HEADER_SIZE).reshape(
        height, width, channels
    )
    return FeatureStack(
        data=data.copy(),
        resolution_tag=resolution,
        transform_tag=TRANSFORM_NAMES[tcode],
    )


def write_probe_params(path: str | Path, params: ProbeParams) -> None:
    header = _MVRP_HEADER.pack(MVRP_MAGIC, MVRP_VERSION, params.in_dim, params.hidden)
    parts = [
        np.ascontiguousarray(params.w1, dtype="<f4").tobytes(),
        np.ascontiguousarray(params.b1, dtype="<f4").tobytes(),
        np.ascontiguousarray(params.w2, dtype="<f4").tobytes(),
        np.float32(params.b2).tobytes(),
    ]
    Path(path).write_bytes(header + b"".join(parts))


def read_probe_params(path: str | Path) -> ProbeParams:
    raw = Path(path).read_bytes()
    if len(raw) < _MVRP_HEADER.size:
        raise CorruptHeaderError(f"{path}: file shorter than the probe header")
    magic, version, in_dim, hidden = _MVRP_HEADER.unpack_from(raw)
    if magic != MVRP_MAGIC:
        raise CorruptHeaderError(f"{path}: bad magic {magic!r}")
    if version != MVRP_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if in_dim < 1 or hidden < 1:
        raise CorruptHeaderError(f"{path}: impossible dimensions {in_dim}x{hidden}")
    count = in_dim * hidden + hidden + hidden + 1
    expected = count * 4
    actual = len(raw) - _MVRP_HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(f"{path}: payload {actual} bytes, header promises {expected}")
    if actual > expected:
        raise CorruptHeaderError(f"{path}: {actual - expected} trailing bytes after payload")
    flat = np.frombuffer(raw, dtype="<f4", offset=_MVRP_HEADER.size).astype(np.float64)
    w1_end = in_dim * hidden
    return ProbeParams(
        w1=flat[:w1_end].reshape(in_dim, hidden),
        b1=flat[w1_end : w1_end + hidden],
        w2=flat[w1_end + hidden : w1_end + 2 * hidden],
        b2=float(flat[-1]),
    )
