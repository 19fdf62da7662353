"""Deterministic toy cross-attention loop for exercising the transforms.

A synthetic scene seeds token embeddings and per-pixel query features whose
dot products produce softmax attention with spatial bumps around configured
concept centers.  The loop runs a fixed number of steps counted down in
diffusion order, optionally correcting embeddings once up front, swapping in
replacement embeddings below an injection threshold, and suppressing
cross-token overlap each step.  No images are denoised; the point is
reproducible attention dynamics for the suppression logic to act on.

All randomness flows from numpy's PCG64 bit generator seeded per scene, so a
given spec always produces byte-identical trajectory files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from crosstok.correction import CorrectionConfig, EmbeddingMatrix, correct_by_similarities
from crosstok.ctnms import (
    AttentionStack,
    SuppressionConfig,
    apply_ctnms,
    gaussian_smooth,
    save_attention,
    winner_map,
)
from crosstok.tensor_io import TokenMetadata, validate_selection

QUERY_MOMENTUM = 0.5


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic scene layout: token count, grid, concept placement, seed."""

    n_tokens: int
    dim: int
    grid: tuple[int, int]
    selected: tuple[int, ...]
    concept_centers: tuple[tuple[float, float], ...]
    steps: int
    seed: int
    n_maps: int = 1
    bias_weight: float = 1.0
    bump_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "selected", validate_selection(self.selected, self.n_tokens))
        object.__setattr__(
            self, "concept_centers", tuple((float(r), float(c)) for r, c in self.concept_centers)
        )
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.n_maps < 1:
            raise ValueError(f"n_maps must be >= 1, got {self.n_maps}")
        if self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        h, w = self.grid
        if h < 1 or w < 1:
            raise ValueError(f"grid dims must be >= 1, got {self.grid}")
        if len(self.concept_centers) != len(self.selected):
            raise ValueError(
                f"{len(self.selected)} selected tokens need as many concept "
                f"centers, got {len(self.concept_centers)}"
            )
        for r, c in self.concept_centers:
            if not (0 <= r <= h - 1 and 0 <= c <= w - 1):
                raise ValueError(f"concept center ({r}, {c}) outside grid {self.grid}")
        if self.bump_radius is not None and not self.bump_radius > 0:
            raise ValueError(f"bump_radius must be > 0, got {self.bump_radius}")

    @property
    def effective_bump_radius(self) -> float:
        if self.bump_radius is not None:
            return float(self.bump_radius)
        return max(1.0, min(self.grid) / 4.0)


@dataclass(frozen=True)
class InjectionSchedule:
    """Embedding swap for late denoising steps: below the threshold step the
    injected matrix replaces the base one; replaced_index records which token
    the swap targets."""

    threshold_step: int
    base: EmbeddingMatrix
    injected: EmbeddingMatrix
    replaced_index: int

    def __post_init__(self):
        if self.threshold_step < 0:
            raise ValueError(f"threshold_step must be >= 0, got {self.threshold_step}")
        if self.base.values.shape != self.injected.values.shape:
            raise ValueError(
                f"base shape {self.base.values.shape} does not match "
                f"injected shape {self.injected.values.shape}"
            )
        if not 0 <= self.replaced_index < self.base.n_tokens:
            raise ValueError(
                f"replaced_index {self.replaced_index} out of range for "
                f"{self.base.n_tokens} tokens"
            )


@dataclass
class StepRecord:
    """One recorded step: the (possibly suppressed) attention stack plus
    per-selected-token embedding norms and winner-region localization."""

    step: int
    attention: AttentionStack
    norms: tuple[float, ...]
    localization: tuple[float, ...]


@dataclass
class Trajectory:
    spec: SceneSpec
    records: list[StepRecord] = field(default_factory=list)

    def save(self, out_dir) -> None:
        """Write step_<k>_attention.ctt files (with sidecars) and metrics.jsonl."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.records:
                save_attention(rec.attention, out / f"step_{rec.step}_attention.ctt")
                fh.write(
                    json.dumps(
                        {
                            "step": rec.step,
                            "selected": list(self.spec.selected),
                            "norms": list(rec.norms),
                            "localization": list(rec.localization),
                        }
                    )
                    + "\n"
                )


def synth_scene(spec: SceneSpec) -> tuple[EmbeddingMatrix, np.ndarray]:
    """Generate seeded token embeddings and query features for a scene.

    Embeddings and queries draw from two independent streams spawned from the
    scene seed, so the query noise does not depend on the embedding draw.
    Around each concept center the queries are pulled toward that concept's
    embedding direction with a Gaussian falloff, which is what makes the
    attention form spatial bumps.
    """
    child_emb, child_query = np.random.SeedSequence(spec.seed).spawn(2)
    rng_emb = np.random.Generator(np.random.PCG64(child_emb))
    rng_query = np.random.Generator(np.random.PCG64(child_query))

    values = rng_emb.standard_normal((spec.n_tokens, spec.dim))
    meta = TokenMetadata(
        prompt=f"synthetic scene (seed={spec.seed})",
        tokens=tuple(f"tok_{i}" for i in range(spec.n_tokens)),
        selected=spec.selected,
    )
    embeddings = EmbeddingMatrix(values, meta)

    h, w = spec.grid
    queries = rng_query.standard_normal((spec.n_maps, h, w, spec.dim))
    if spec.bias_weight != 0.0:
        rows = np.arange(h, dtype=np.float64)[:, None]
        cols = np.arange(w, dtype=np.float64)[None, :]
        radius = spec.effective_bump_radius
        for c, (r0, c0) in zip(spec.selected, spec.concept_centers):
            norm = np.linalg.norm(values[c])
            if norm == 0:
                continue
            bump = np.exp(-((rows - r0) ** 2 + (cols - c0) ** 2) / (2.0 * radius * radius))
            queries += spec.bias_weight * bump[None, :, :, None] * (values[c] / norm)
    return embeddings, queries


def cross_attention(queries, keys: EmbeddingMatrix, scale: float | None = None) -> AttentionStack:
    """Scaled dot-product attention over tokens at every (map, pixel).

    scale defaults to 1 / sqrt(dim).  Output rows are a softmax, so the token
    axis sums to 1 at every pixel.
    """
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim != 4:
        raise ValueError(f"queries must be 4-D (maps, h, w, dim), got rank {Q.ndim}")
    K = keys.values.astype(np.float64)
    if Q.shape[3] != K.shape[1]:
        raise ValueError(f"query dim {Q.shape[3]} does not match embedding dim {K.shape[1]}")
    if scale is None:
        scale = 1.0 / np.sqrt(K.shape[1])
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    logits = scale * np.einsum("mhwd,td->mhwt", Q, K)
    logits -= logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=-1, keepdims=True)
    return AttentionStack(weights, keys.metadata)


def injection_schedule_select(step: int, sched: InjectionSchedule) -> EmbeddingMatrix:
    """Pick the active embeddings for a step counted down in diffusion order:
    injected strictly below the threshold step, base otherwise."""
    return sched.injected if step < sched.threshold_step else sched.base


def _winner_localization(stack: AttentionStack, winners: np.ndarray, C) -> tuple[float, ...]:
    # Containment of each selected token's mass in the region where it wins,
    # computed as in / (in + out) so full containment is exactly 1.0.
    scores = []
    for position, token in enumerate(C):
        channel = stack.values[..., token].astype(np.float64)
        region = winners == position
        inside = channel[region].sum()
        outside = channel[~region].sum()
        scores.append(0.0 if inside + outside == 0 else float(inside / (inside + outside)))
    return tuple(scores)


def run_simulation(
    spec: SceneSpec,
    correction: CorrectionConfig | None = None,
    suppression: SuppressionConfig | None = None,
    schedule: InjectionSchedule | None = None,
    out_dir=None,
) -> Trajectory:
    """Run the toy attention loop and record one stack of maps per step.

    Embedding corrections happen exactly once, before the loop; inside the
    loop embeddings change only through the injection schedule.  Each step
    computes softmax cross-attention from the current query features, applies
    cross-token suppression when configured, records the stack together with
    selected-token norms and winner-region localization, then relaxes the
    queries toward the attention-weighted embedding mix with momentum 0.5.
    Steps count down from spec.steps - 1 to 0.  When out_dir is given the
    trajectory is also written there.
    """
    embeddings, queries = synth_scene(spec)
    base = embeddings
    injected = None
    if schedule is not None:
        if schedule.threshold_step > spec.steps:
            raise ValueError(
                f"threshold_step {schedule.threshold_step} exceeds {spec.steps} steps"
            )
        if schedule.base.values.shape != (spec.n_tokens, spec.dim):
            raise ValueError(
                f"schedule embeddings {schedule.base.values.shape} do not match "
                f"scene ({spec.n_tokens}, {spec.dim})"
            )
        base, injected = schedule.base, schedule.injected
    if correction is not None:
        base = correct_by_similarities(base, spec.selected, correction)
        if injected is not None:
            injected = correct_by_similarities(injected, spec.selected, correction)

    metric_cfg = suppression if suppression is not None else SuppressionConfig()
    C = spec.selected
    trajectory = Trajectory(spec=spec)
    for step in range(spec.steps - 1, -1, -1):
        if schedule is not None:
            active = injected if step < schedule.threshold_step else base
        else:
            active = base
        attn = cross_attention(queries, active)
        smoothed = gaussian_smooth(
            attn.values[..., list(C)], metric_cfg.kernel_size, metric_cfg.sigma
        )
        winners = winner_map(smoothed)
        recorded = apply_ctnms(attn, C, suppression) if suppression is not None else attn
        active64 = active.values.astype(np.float64)
        norms = tuple(float(np.linalg.norm(active64[c])) for c in C)
        trajectory.records.append(
            StepRecord(
                step=step,
                attention=recorded,
                norms=norms,
                localization=_winner_localization(recorded, winners, C),
            )
        )
        context = np.einsum("mhwt,td->mhwd", recorded.values.astype(np.float64), active64)
        queries = (1.0 - QUERY_MOMENTUM) * queries + QUERY_MOMENTUM * context
    if out_dir is not None:
        trajectory.save(out_dir)
    return trajectory
