"""Minimal reader/writer for the tensor interchange files the core tools consume.

The adapter deliberately talks to the core through files and its command
line only, so it carries its own copy of the byte layout instead of
importing the core package:

    magic   4 bytes  b"CTT1"
    dtype   u8       1 = little-endian float32
    rank    u8       1..5
    pad     u16      zero
    dims    rank*u32 little-endian
    payload row-major float32
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CTT1"
_DTYPE_F32 = 1
_MAX_RANK = 5


def write_tensor(path, data):
    path = Path(path)
    arr = np.asarray(data)
    if not 1 <= arr.ndim <= _MAX_RANK:
        raise ValueError(f"rank must be 1..{_MAX_RANK}, got {arr.ndim}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack("<BBH", _DTYPE_F32, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    path.write_bytes(header + arr.tobytes())
    return path


def read_tensor(path):
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    dtype_code, rank, pad = struct.unpack_from("<BBH", blob, 4)
    if dtype_code != _DTYPE_F32 or not 1 <= rank <= _MAX_RANK or pad != 0:
        raise ValueError(f"unsupported header in {path}")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    payload = blob[8 + 4 * rank:]
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(payload) != expected:
        raise ValueError(f"payload size mismatch in {path}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def sidecar_path(tensor_path):
    return Path(tensor_path).with_suffix(".json")


def write_sidecar(tensor_path, prompt, tokens, selected, extra=None):
    """Write the JSON companion; extra keys ride along and core readers skip them."""
    doc = {"prompt": prompt, "tokens": list(tokens), "selected": list(selected)}
    if extra:
        doc.update(extra)
    path = sidecar_path(tensor_path)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def read_sidecar(tensor_path):
    return json.loads(sidecar_path(tensor_path).read_text())
