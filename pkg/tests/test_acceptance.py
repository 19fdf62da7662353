"""Acceptance gate: one test per shipping criterion, one printed verdict each.

Tolerances are pinned here and nowhere else; the reference implementations
live in oracles.py and share no code with the library.
"""

import filecmp
import json
import time

import numpy as np
import pytest

from crosstok.correction import (
    CorrectionConfig,
    EmbeddingMatrix,
    aggregate,
    blend,
    correct_by_similarities,
    similarity_scores,
    suppress_dominant,
    threshold_normalize,
    window_mask,
)
from crosstok.ctnms import AttentionStack, SuppressionConfig, apply_ctnms, gaussian_kernel, gaussian_smooth, winner_map
from crosstok.harness import SceneSpec, run_simulation
from crosstok.tensor_io import TokenMetadata
from oracles import ctnms_reference, correct_reference

CORRECTION_ORACLE_TOL = 1e-5
CORRECTION_ORACLE_BUDGET_S = 30.0
CTNMS_ORACLE_TOL = 1e-6
KERNEL_TOL = 1e-6
NORM_REL_TOL = 1e-6
MONOTONE_SLACK = 1e-9


@pytest.fixture
def announce(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def _announce(name: str, ok: bool):
        line = f"acceptance: {name}: {'PASS' if ok else 'FAIL'}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line, flush=True)
        else:
            print("\n" + line, flush=True)
        assert ok, line

    return _announce


def _matrix(values, selected=()):
    arr = np.asarray(values)
    meta = TokenMetadata(
        "acceptance prompt", tuple(f"tok{i}" for i in range(arr.shape[0])), tuple(selected)
    )
    return EmbeddingMatrix(arr, meta)


def _stack(values, selected=()):
    arr = np.asarray(values)
    meta = TokenMetadata(
        "acceptance prompt", tuple(f"tok{i}" for i in range(arr.shape[-1])), tuple(selected)
    )
    return AttentionStack(arr, meta)


def test_correction_matches_oracle(announce):
    rng = np.random.default_rng(20240817)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(100):
        values = rng.standard_normal((77, 768))
        k = int(rng.integers(1, 4))
        C = tuple(sorted(rng.choice(77, size=k, replace=False).tolist()))
        tau = float(rng.uniform(0.0, 1.0))
        gamma = int(rng.integers(0, 7))
        alpha = float(rng.uniform(0.0, 1.0))
        out = correct_by_similarities(
            _matrix(values), C, CorrectionConfig(tau=tau, gamma=gamma, alpha=alpha)
        )
        want = correct_reference(values.tolist(), list(C), tau, gamma, alpha)
        diff = float(np.max(np.abs(out.values - np.array(want))))
        worst = max(worst, diff)
    elapsed = time.perf_counter() - start
    announce(
        "similarity correction matches naive reference "
        f"(max diff {worst:.2e}, {elapsed:.1f}s)",
        worst <= CORRECTION_ORACLE_TOL and elapsed < CORRECTION_ORACLE_BUDGET_S,
    )


def test_identity_endpoints(announce):
    rng = np.random.default_rng(20240818)
    ok = True
    for _ in range(50):
        values = rng.standard_normal((20, 16)).astype(np.float32)
        C = tuple(sorted(rng.choice(20, size=2, replace=False).tolist()))
        f = _matrix(values)

        out = correct_by_similarities(f, C, CorrectionConfig(alpha=0.0))
        ok &= np.array_equal(out.values, values) and out.values.dtype == values.dtype

        out = suppress_dominant(f, C, 0.0)
        ok &= np.array_equal(out.values, values)

        attn = rng.uniform(0.0, 1.0, size=(2, 8, 8, 12)).astype(np.float32)
        A = _stack(attn)
        AC = tuple(sorted(rng.choice(12, size=2, replace=False).tolist()))
        out = apply_ctnms(A, AC, SuppressionConfig(beta=1.0))
        ok &= np.array_equal(out.values, attn) and out.values.dtype == attn.dtype

        out = apply_ctnms(A, (int(AC[0]),), SuppressionConfig(beta=0.0))
        ok &= np.array_equal(out.values, attn)
    announce("identity settings return bit-identical arrays", ok)


def test_suppression_invariants(announce):
    rng = np.random.default_rng(20240819)
    ok = True
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 5))
        values = rng.uniform(0.0, 1.0, size=(m, 16, 16, 77))
        k = int(rng.integers(1, 4))
        C = tuple(sorted(rng.choice(77, size=k, replace=False).tolist()))
        A = _stack(values)
        cfg = SuppressionConfig(beta=0.0, renormalize=True)

        out = apply_ctnms(A, C, cfg)
        nonzero_selected = np.count_nonzero(out.values[..., list(C)], axis=-1)
        ok &= bool((nonzero_selected <= 1).all())

        raw = apply_ctnms(A, C, SuppressionConfig(beta=0.0, renormalize=False))
        untouched = [i for i in range(77) if i not in C]
        ok &= np.array_equal(raw.values[..., untouched], values[..., untouched])

        picked = values[..., list(C)]
        winners = winner_map(gaussian_smooth(picked, 3, 1.0))
        for lam in (0.25, 3.7):
            scaled = winner_map(gaussian_smooth(lam * picked, 3, 1.0))
            ok &= np.array_equal(winners, scaled)

        want = np.array(ctnms_reference(values.tolist(), list(C), 3, 1.0, 0.0, True))
        worst = max(worst, float(np.max(np.abs(out.values - want))))
    ok &= worst <= CTNMS_ORACLE_TOL
    announce(
        f"attention suppression invariants hold (oracle max diff {worst:.2e})", ok
    )


def test_smoothing_kernel_and_fixed_points(announce):
    kernel = gaussian_kernel(3, 1.0)
    ok = bool(np.max(np.abs(kernel - np.array([0.27406862, 0.45186276, 0.27406862]))) <= KERNEL_TOL)
    for shape in [(1, 1, 1, 1), (1, 16, 16, 2), (3, 7, 5, 4)]:
        for value in (7.0, -2.5, 0.123):
            for kappa, sigma in [(3, 1.0), (5, 0.5), (3, 2.0)]:
                arr = np.full(shape, value)
                ok &= np.array_equal(gaussian_smooth(arr, kappa, sigma), arr)
    announce("smoothing weights correct and constants are exact fixed points", ok)


def test_dominant_norm_scaling(announce):
    rng = np.random.default_rng(20240820)
    ok = True
    for _ in range(40):
        values = rng.standard_normal((20, 16))
        k = int(rng.integers(2, 5))
        C = tuple(sorted(rng.choice(20, size=k, replace=False).tolist()))
        target = int(rng.choice(list(C)))
        values[target] *= 3.0  # strict dominance
        f = _matrix(values)
        pre = np.linalg.norm(values[target])

        s = float(rng.uniform(0.05, 0.95))
        post = np.linalg.norm(suppress_dominant(f, C, s).values[target])
        ok &= abs(post - (1.0 - s) * pre) <= NORM_REL_TOL * pre

        halved = np.linalg.norm(suppress_dominant(f, C, 0.5).values[target])
        ok &= abs(halved - 0.5 * pre) <= NORM_REL_TOL * pre
    announce("dominant row norm scales by exactly one minus strength", ok)


def _two_concept_spec():
    return SceneSpec(
        n_tokens=12,
        dim=32,
        grid=(16, 16),
        selected=(3, 7),
        concept_centers=((5.0, 5.0), (10.0, 10.0)),
        steps=6,
        seed=2024,
        bias_weight=2.0,
    )


def test_harness_determinism_and_localization(announce, tmp_path):
    spec = _two_concept_spec()
    cfg = SuppressionConfig(beta=0.0)

    d1, d2 = tmp_path / "run1", tmp_path / "run2"
    t1 = run_simulation(spec, suppression=cfg, out_dir=d1)
    run_simulation(spec, suppression=cfg, out_dir=d2)
    names = sorted(p.name for p in d1.iterdir())
    ok = names == sorted(p.name for p in d2.iterdir())
    for name in names:
        ok &= filecmp.cmp(d1 / name, d2 / name, shallow=False)

    for rec in t1.records:
        ok &= rec.localization == (1.0, 1.0)
    for line in (d1 / "metrics.jsonl").read_text().splitlines():
        ok &= json.loads(line)["localization"] == [1.0, 1.0]

    baseline = run_simulation(spec)
    for rec in baseline.records:
        ok &= all(score < 1.0 for score in rec.localization)
    announce("trajectories replay byte-identically and suppression localizes fully", ok)


def test_blend_cosine_monotonicity(announce):
    rng = np.random.default_rng(20240821)
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    checked = 0
    ok = True
    while checked < 20:
        values = rng.standard_normal((24, 16))
        k = int(rng.integers(1, 3))
        C = tuple(sorted(rng.choice(24, size=k, replace=False).tolist()))
        for c in C:
            scores = threshold_normalize(similarity_scores(values, c), 0.3)
            scores = window_mask(c, 4, 24)[:, None] * scores
            target = aggregate(scores, values)
            t_norm = np.linalg.norm(target)
            if t_norm < 1e-8:
                continue
            cosines = []
            degenerate = False
            for alpha in grid:
                mixed = blend(values[c], target, alpha)
                m_norm = np.linalg.norm(mixed)
                if m_norm < 1e-12:
                    degenerate = True
                    break
                cosines.append(float(mixed @ target / (m_norm * t_norm)))
            if degenerate:
                continue
            for lo, hi in zip(cosines, cosines[1:]):
                ok &= hi >= lo - MONOTONE_SLACK
            checked += 1
    announce("blending toward the aggregate never lowers its cosine", ok)
