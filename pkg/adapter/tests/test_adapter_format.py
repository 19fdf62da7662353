"""The adapter's own file I/O must interoperate byte for byte with the core."""

import json
import struct
import subprocess

import numpy as np
import pytest

from crosstok_adapter import tensorfile


def test_roundtrip():
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7
    path = tensorfile.write_tensor("roundtrip.ctt", data)
    back = tensorfile.read_tensor(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, data)
    path.unlink()


def test_header_layout(tmp_path):
    path = tmp_path / "h.ctt"
    tensorfile.write_tensor(path, np.zeros((2, 2), dtype=np.float32))
    blob = path.read_bytes()
    assert blob[:4] == b"CTT1"
    assert struct.unpack_from("<BBH", blob, 4) == (1, 2, 0)
    assert struct.unpack_from("<2I", blob, 8) == (2, 2)
    assert len(blob) == 16 + 16


def test_rank_bounds(tmp_path):
    with pytest.raises(ValueError):
        tensorfile.write_tensor(tmp_path / "x.ctt", np.float32(3.0))
    with pytest.raises(ValueError):
        tensorfile.write_tensor(tmp_path / "x.ctt", np.zeros((1,) * 6))


def test_read_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ctt"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(ValueError):
        tensorfile.read_tensor(path)


def test_core_reads_adapter_files(tmp_path):
    """A file written here must be identical to what the core writes and reads."""
    rng = np.random.default_rng(7)
    data = rng.standard_normal((6, 8)).astype(np.float32)
    ours = tmp_path / "ours.ctt"
    tensorfile.write_tensor(ours, data)
    tensorfile.write_sidecar(ours, prompt="check", tokens=[f"t{i}" for i in range(6)],
                             selected=[1, 4], extra={"truncated": False})

    # the core render command accepts the file and the sidecar survives diagnose
    result = subprocess.run(
        ["crosstok", "render", "--attention", str(ours), "--out",
         str(tmp_path / "ours.pgm")],
        capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "ours.pgm").read_bytes().startswith(b"P5\n8 6\n255\n")

    result = subprocess.run(
        ["crosstok", "diagnose", "--embeddings", str(ours)],
        capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    report = json.loads(result.stdout)
    assert report["dominance"]["indices"] == [1, 4]


def test_matches_core_bytes(tmp_path):
    """Independent implementations of the same layout produce the same bytes."""
    crosstok_io = pytest.importorskip("crosstok.tensor_io")
    data = np.linspace(-1, 1, 60, dtype=np.float32).reshape(3, 4, 5)
    ours = tmp_path / "ours.ctt"
    theirs = tmp_path / "theirs.ctt"
    tensorfile.write_tensor(ours, data)
    crosstok_io.write_tensor(data, theirs)
    assert ours.read_bytes() == theirs.read_bytes()
    np.testing.assert_array_equal(tensorfile.read_tensor(theirs),
                                  crosstok_io.read_tensor(ours))


def test_sidecar_extra_keys(tmp_path):
    path = tmp_path / "s.ctt"
    tensorfile.write_tensor(path, np.ones((2, 2), dtype=np.float32))
    tensorfile.write_sidecar(path, prompt="p", tokens=["a", "b"], selected=[0],
                             extra={"truncated": True, "null_start": 2})
    doc = tensorfile.read_sidecar(path)
    assert doc["truncated"] is True
    assert doc["null_start"] == 2
    assert doc["selected"] == [0]
