"""Bit-exact tensor serialization, token metadata sidecars, and PGM heatmaps.

File layout (all integers little-endian)::

    magic      4 bytes  ASCII "CTT1"
    dtype_code u8       1 = 32-bit float, little-endian
    rank       u8       1..5
    reserved   u16      must be 0
    dims       rank*u32
    payload    prod(dims) * 4 bytes, row-major float32

The same logical tensor produces byte-identical files on any platform.
Token metadata travels in a JSON sidecar next to the tensor file (same
basename, ".json" extension).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CTT1"
DTYPE_F32_LE = 1
MAX_RANK = 5

_HEADER = struct.Struct("<4sBBH")


class TensorFormatError(ValueError):
    """A tensor file violates the format; `field` names the offending part."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class TokenMetadata:
    """Prompt text, per-position token strings, and selected concept indices."""

    prompt: str
    tokens: tuple[str, ...]
    selected: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "selected", tuple(self.selected))
        n = len(self.tokens)
        for prev, cur in zip((-1,) + self.selected, self.selected):
            if not 0 <= cur < n:
                raise ValueError(f"selected index {cur} out of range for {n} tokens")
            if cur <= prev:
                raise ValueError("selected indices must be strictly increasing")

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def as_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "tokens": list(self.tokens),
            "selected": list(self.selected),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenMetadata":
        return cls(
            prompt=d["prompt"],
            tokens=tuple(d["tokens"]),
            selected=tuple(d.get("selected", ())),
        )


def validate_selection(selected, n_tokens: int) -> tuple[int, ...]:
    """Normalize concept token indices: sorted, 0-based, in range, no duplicates."""
    indices = tuple(sorted(int(i) for i in selected))
    if not indices:
        raise ValueError("selection must name at least one token")
    for prev, cur in zip((-1,) + indices, indices):
        if not 0 <= cur < n_tokens:
            raise ValueError(f"token index {cur} out of range for {n_tokens} tokens")
        if cur == prev:
            raise ValueError(f"duplicate token index {cur} in selection")
    return indices


def write_tensor(data, path) -> None:
    """Serialize a dense real tensor (rank 1..5, all dims >= 1) to `path`.

    Values are stored as little-endian float32; writing a float32 array and
    reading it back is bit-identical.
    """
    arr = np.asarray(data)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ValueError(f"tensor rank must be in [1, {MAX_RANK}], got {arr.ndim}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"all dims must be >= 1, got shape {arr.shape}")
    header = _HEADER.pack(MAGIC, DTYPE_F32_LE, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a tensor file written by `write_tensor`; returns a float32 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TensorFormatError("magic", f"file too short for header ({len(raw)} bytes)")
    magic, dtype_code, rank, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFormatError("magic", f"expected {MAGIC!r}, got {magic!r}")
    if dtype_code != DTYPE_F32_LE:
        raise TensorFormatError("dtype_code", f"unsupported dtype code {dtype_code}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError("rank", f"rank must be in [1, {MAX_RANK}], got {rank}")
    if reserved != 0:
        raise TensorFormatError("reserved", f"reserved field must be 0, got {reserved}")
    dims_end = _HEADER.size + 4 * rank
    if len(raw) < dims_end:
        raise TensorFormatError("dims", "file truncated inside the dims block")
    dims = struct.unpack_from(f"<{rank}I", raw, _HEADER.size)
    if any(d < 1 for d in dims):
        raise TensorFormatError("dims", f"all dims must be >= 1, got {dims}")
    expected = int(np.prod(dims)) * 4
    payload = raw[dims_end:]
    if len(payload) < expected:
        raise TensorFormatError(
            "payload", f"truncated: expected {expected} bytes, got {len(payload)}"
        )
    if len(payload) > expected:
        raise TensorFormatError(
            "payload", f"{len(payload) - expected} trailing bytes after payload"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def sidecar_path(path) -> Path:
    """JSON metadata path for a tensor file: same basename, ".json" extension."""
    return Path(path).with_suffix(".json")


def write_metadata(meta: TokenMetadata, path) -> None:
    """Write the JSON sidecar for the tensor file (or sidecar path) `path`."""
    target = Path(path)
    if target.suffix != ".json":
        target = sidecar_path(target)
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(meta.as_dict(), fh, indent=2)
        fh.write("\n")


def read_metadata(path) -> TokenMetadata:
    """Read the JSON sidecar for the tensor file (or sidecar path) `path`."""
    target = Path(path)
    if target.suffix != ".json":
        target = sidecar_path(target)
    with open(target, "r", encoding="utf-8") as fh:
        return TokenMetadata.from_dict(json.load(fh))


def render_heatmap(map_values, path) -> None:
    """Render an h x w matrix as a binary PGM image, min-max scaled to 0..255.

    Rounding is half away from zero; a constant map renders as all zeros.
    """
    arr = np.asarray(map_values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"heatmap input must be 2-D, got rank {arr.ndim}")
    h, w = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"heatmap dims must be >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("heatmap input must be finite")
    lo = arr.min()
    span = arr.max() - lo
    if span > 0:
        scaled = (arr - lo) / span * 255.0
        pixels = np.floor(scaled + 0.5).astype(np.uint8)
    else:
        pixels = np.zeros((h, w), dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
