import filecmp
import json
import subprocess

import numpy as np
import pytest

from crosstok.correction import (
    CorrectionConfig,
    EmbeddingMatrix,
    correct_by_similarities,
    load_embeddings,
    save_embeddings,
    suppress_dominant,
)
from crosstok.ctnms import AttentionStack, SuppressionConfig, apply_ctnms, load_attention, save_attention
from crosstok.harness import SceneSpec, run_simulation
from crosstok.tensor_io import TokenMetadata, read_tensor, render_heatmap, write_tensor


def _run(*args):
    return subprocess.run(["crosstok", *map(str, args)], capture_output=True, text=True)


def _embeddings_file(tmp_path, n=12, d=8, selected=(5, 9), seed=7):
    rng = np.random.default_rng(seed)
    meta = TokenMetadata("a cat and a dog", tuple(f"tok{i}" for i in range(n)), selected)
    matrix = EmbeddingMatrix(rng.standard_normal((n, d)).astype(np.float32), meta)
    path = tmp_path / "emb.ctt"
    save_embeddings(matrix, path)
    return path


def _attention_file(tmp_path, seed=3):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.01, 1.0, size=(2, 6, 6, 12)).astype(np.float32)
    vals /= vals.sum(axis=-1, keepdims=True)
    meta = TokenMetadata("a cat and a dog", tuple(f"tok{i}" for i in range(12)), (5, 9))
    path = tmp_path / "attn.ctt"
    save_attention(AttentionStack(vals, meta), path)
    return path


def test_correct_delegates_byte_identically(tmp_path):
    src = _embeddings_file(tmp_path)
    out = tmp_path / "g.ctt"
    res = _run(
        "correct", "--embeddings", src, "--select", "5,9",
        "--tau", "0.5", "--gamma", "3", "--alpha", "0.8", "--out", out,
    )
    assert res.returncode == 0, res.stderr
    ref = tmp_path / "ref.ctt"
    save_embeddings(
        correct_by_similarities(load_embeddings(src), (5, 9), CorrectionConfig()), ref
    )
    assert filecmp.cmp(out, ref, shallow=False)
    assert filecmp.cmp(tmp_path / "g.json", tmp_path / "ref.json", shallow=False)


def test_correct_uses_sidecar_selection(tmp_path):
    src = _embeddings_file(tmp_path)
    out = tmp_path / "g.ctt"
    assert _run("correct", "--embeddings", src, "--out", out).returncode == 0
    ref = tmp_path / "ref.ctt"
    save_embeddings(
        correct_by_similarities(load_embeddings(src), (5, 9), CorrectionConfig()), ref
    )
    assert filecmp.cmp(out, ref, shallow=False)


def test_suppress_dominant_delegates(tmp_path):
    src = _embeddings_file(tmp_path)
    out = tmp_path / "s.ctt"
    res = _run("suppress-dominant", "--embeddings", src, "--strength", "0.5", "--out", out)
    assert res.returncode == 0, res.stderr
    ref = tmp_path / "ref.ctt"
    save_embeddings(suppress_dominant(load_embeddings(src), (5, 9), 0.5), ref)
    assert filecmp.cmp(out, ref, shallow=False)


def test_ctnms_delegates_byte_identically(tmp_path):
    src = _attention_file(tmp_path)
    out = tmp_path / "B.ctt"
    res = _run(
        "ctnms", "--attention", src, "--select", "5,9", "--kernel", "3",
        "--sigma", "1.0", "--beta", "0.0", "--renormalize", "--out", out,
    )
    assert res.returncode == 0, res.stderr
    ref = tmp_path / "ref.ctt"
    save_attention(apply_ctnms(load_attention(src), (5, 9), SuppressionConfig()), ref)
    assert filecmp.cmp(out, ref, shallow=False)


def test_diagnose_prints_json(tmp_path):
    src = _embeddings_file(tmp_path)
    res = _run("diagnose", "--embeddings", src)
    assert res.returncode == 0, res.stderr
    report = json.loads(res.stdout)
    assert set(report) == {"dominance", "similarity"}
    assert report["dominance"]["indices"] == [5, 9]
    assert set(report["similarity"]) == {"5", "9"}
    entry = report["similarity"]["5"][0]
    assert set(entry) == {"index", "token", "cosine", "distance"}


def test_render_delegates(tmp_path):
    src = _attention_file(tmp_path)
    out = tmp_path / "m.pgm"
    res = _run("render", "--attention", src, "--token", "9", "--map", "0", "--out", out)
    assert res.returncode == 0, res.stderr
    ref = tmp_path / "ref.pgm"
    render_heatmap(read_tensor(src)[0, :, :, 9], ref)
    assert filecmp.cmp(out, ref, shallow=False)


def test_render_rank2(tmp_path):
    src = tmp_path / "plain.ctt"
    write_tensor(np.array([[0.0, 1.0], [0.5, 1.0]]), src)
    out = tmp_path / "m.pgm"
    assert _run("render", "--attention", src, "--out", out).returncode == 0
    assert out.read_bytes() == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 255])


def _sim_args(out):
    return [
        "simulate", "--out", out, "--tokens", "10", "--dim", "12", "--grid", "8x8",
        "--select", "2,6", "--centers", "2,2;5,5", "--steps", "3", "--seed", "99",
        "--ctnms", "--beta", "0.0",
    ]


def test_simulate_flags_match_library(tmp_path):
    cli_dir = tmp_path / "cli"
    res = _run(*_sim_args(cli_dir))
    assert res.returncode == 0, res.stderr
    lib_dir = tmp_path / "lib"
    spec = SceneSpec(
        n_tokens=10, dim=12, grid=(8, 8), selected=(2, 6),
        concept_centers=((2.0, 2.0), (5.0, 5.0)), steps=3, seed=99,
    )
    run_simulation(spec, suppression=SuppressionConfig(beta=0.0), out_dir=lib_dir)
    names = sorted(p.name for p in cli_dir.iterdir())
    assert names == sorted(p.name for p in lib_dir.iterdir())
    for name in names:
        assert filecmp.cmp(cli_dir / name, lib_dir / name, shallow=False), name


def test_simulate_config_file_matches_flags(tmp_path):
    cfg = {
        "n_tokens": 10,
        "dim": 12,
        "grid": [8, 8],
        "selected": [2, 6],
        "concept_centers": [[2.0, 2.0], [5.0, 5.0]],
        "steps": 3,
        "seed": 99,
        "suppression": {"beta": 0.0},
    }
    cfg_path = tmp_path / "scene.json"
    cfg_path.write_text(json.dumps(cfg))
    cfg_dir = tmp_path / "from_config"
    res = _run("simulate", "--config", cfg_path, "--out", cfg_dir)
    assert res.returncode == 0, res.stderr
    flag_dir = tmp_path / "from_flags"
    assert _run(*_sim_args(flag_dir)).returncode == 0
    for name in sorted(p.name for p in cfg_dir.iterdir()):
        assert filecmp.cmp(cfg_dir / name, flag_dir / name, shallow=False), name


def test_simulate_rejects_unknown_config_keys(tmp_path):
    cfg_path = tmp_path / "scene.json"
    cfg_path.write_text(json.dumps({"n_tokens": 4, "bogus": 1}))
    res = _run("simulate", "--config", cfg_path, "--out", tmp_path / "d")
    assert res.returncode == 1
    assert "bogus" in res.stderr


@pytest.mark.parametrize(
    "args",
    [
        ("correct", "--embeddings", "IN", "--select", "5,5", "--out", "OUT"),
        ("correct", "--embeddings", "IN", "--select", "5,99", "--out", "OUT"),
        ("correct", "--embeddings", "IN", "--select", "a,b", "--out", "OUT"),
        ("correct", "--embeddings", "IN", "--tau", "1.5", "--out", "OUT"),
        ("ctnms", "--attention", "IN_ATTN", "--kernel", "2", "--out", "OUT"),
    ],
)
def test_validation_errors_exit_one(tmp_path, args):
    emb = _embeddings_file(tmp_path)
    attn = _attention_file(tmp_path)
    out = tmp_path / "out.ctt"
    concrete = [str(emb) if a == "IN" else str(attn) if a == "IN_ATTN" else a for a in args]
    concrete = [str(out) if a == "OUT" else a for a in concrete]
    res = _run(*concrete)
    assert res.returncode == 1, (res.returncode, res.stderr)
    assert res.stderr.startswith("error:")
    assert not out.exists()


def test_unknown_subcommand_exits_one_with_usage(tmp_path):
    res = _run("frobnicate")
    assert res.returncode == 1
    assert "usage" in res.stderr


def test_unknown_flag_exits_one_with_usage(tmp_path):
    src = _embeddings_file(tmp_path)
    res = _run("correct", "--embeddings", src, "--out", tmp_path / "o.ctt", "--bogus")
    assert res.returncode == 1
    assert "usage" in res.stderr


def test_missing_input_exits_two(tmp_path):
    res = _run("correct", "--embeddings", tmp_path / "nope.ctt", "--out", tmp_path / "o.ctt")
    assert res.returncode == 2
    assert not (tmp_path / "o.ctt").exists()


def test_unwritable_output_exits_two(tmp_path):
    src = _embeddings_file(tmp_path)
    res = _run("correct", "--embeddings", src, "--out", tmp_path / "missing" / "o.ctt")
    assert res.returncode == 2


def test_malformed_tensor_exits_one(tmp_path):
    bad = tmp_path / "bad.ctt"
    bad.write_bytes(b"CTT1" + bytes([9, 2, 0, 0]) + b"\x00" * 8)
    res = _run("correct", "--embeddings", bad, "--out", tmp_path / "o.ctt")
    assert res.returncode == 1
    assert not (tmp_path / "o.ctt").exists()


def test_simulate_requires_scene_arguments(tmp_path):
    res = _run("simulate", "--out", tmp_path / "d")
    assert res.returncode == 1
    assert not (tmp_path / "d").exists()
