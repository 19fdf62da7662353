"""Correction of concept embeddings by similarity aggregation, plus norm-based
suppression of the dominant concept.

Both transforms act on the text-encoder output matrix before any diffusion
step.  A concept row is rebuilt as a per-dimension similarity-weighted sum
over all token rows, then blended with the original row; the dominant concept
(largest row norm among the selected tokens) can be damped by rescaling.

Arithmetic runs in double precision regardless of the stored dtype; corrected
rows are cast back so untouched rows stay bit-identical to the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crosstok.tensor_io import (
    TokenMetadata,
    read_metadata,
    read_tensor,
    validate_selection,
    write_metadata,
    write_tensor,
)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Text-encoder output, one row per token, with token metadata."""

    values: np.ndarray
    metadata: TokenMetadata

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got rank {arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValueError("embedding matrix must be finite")
        if arr.shape[0] != self.metadata.n_tokens:
            raise ValueError(
                f"row count {arr.shape[0]} does not match "
                f"{self.metadata.n_tokens} metadata tokens"
            )
        object.__setattr__(self, "values", arr)

    @property
    def n_tokens(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CorrectionConfig:
    """Hyperparameters for similarity correction and dominance suppression.

    tau is the relative score threshold, gamma the token-window half-width,
    alpha the blend strength toward the aggregated row, and strength_s the
    dominance suppression strength.  preserve_row_norm optionally rescales a
    corrected row back to the original row's Euclidean norm, since the raw
    weighted sum can inflate it.
    """

    tau: float = 0.5
    gamma: int = 3
    alpha: float = 0.8
    strength_s: float = 0.5
    preserve_row_norm: bool = False

    def __post_init__(self):
        for name in ("tau", "alpha", "strength_s"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, EmbeddingMatrix) else np.asarray(f)


def similarity_scores(f, c: int) -> np.ndarray:
    """Elementwise product of row c with every row: S[i, j] = f[c, j] * f[i, j]."""
    v = _values(f).astype(np.float64)
    n = v.shape[0]
    if not 0 <= c < n:
        raise ValueError(f"token index {c} out of range for {n} tokens")
    return v[c] * v


def threshold_normalize(S, tau: float) -> np.ndarray:
    """Scale scores by the global maximum and zero everything below tau.

    After division by max(S) the surviving entries lie in [tau, 1]; negative
    entries are always dropped.  A non-positive maximum (degenerate input)
    yields an all-zero matrix.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    S = np.asarray(S, dtype=np.float64)
    peak = S.max()
    if peak <= 0:
        return np.zeros_like(S)
    scaled = S / peak
    return np.where(scaled >= tau, scaled, 0.0)


def window_mask(c: int, gamma: int, n: int) -> np.ndarray:
    """Rectangular token window: 1 within gamma positions of c, else 0."""
    if not 0 <= c < n:
        raise ValueError(f"token index {c} out of range for {n} tokens")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return (np.abs(np.arange(n) - c) <= gamma).astype(np.float64)


def aggregate(S_tilde, f) -> np.ndarray:
    """Per-dimension weighted sum over tokens: out[j] = sum_i S[i, j] * f[i, j]."""
    S = np.asarray(S_tilde, dtype=np.float64)
    v = _values(f).astype(np.float64)
    if S.shape != v.shape:
        raise ValueError(f"score shape {S.shape} does not match embeddings {v.shape}")
    return (S * v).sum(axis=0)


def blend(f_c, f_tilde, alpha: float) -> np.ndarray:
    """Convex combination (1 - alpha) * f_c + alpha * f_tilde."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    a = np.asarray(f_c, dtype=np.float64)
    b = np.asarray(f_tilde, dtype=np.float64)
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return (1.0 - alpha) * a + alpha * b


def correct_by_similarities(f: EmbeddingMatrix, selected, cfg: CorrectionConfig) -> EmbeddingMatrix:
    """Rebuild each selected concept row from its most similar token rows.

    Per concept c: score every entry by the elementwise product with row c,
    keep entries at or above tau after normalizing by the global maximum,
    restrict to tokens within gamma positions of c, sum the weighted rows per
    dimension, and blend the result with the original row by alpha.  Every
    concept reads from the original matrix, so the output does not depend on
    the iteration order over the selection.  Non-selected rows are returned
    bit-identical.
    """
    C = validate_selection(selected, f.n_tokens)
    out = f.values.copy()
    if cfg.alpha == 0.0:
        return EmbeddingMatrix(out, f.metadata)
    v = f.values.astype(np.float64)
    for c in C:
        scores = similarity_scores(v, c)
        scores = threshold_normalize(scores, cfg.tau)
        scores = window_mask(c, cfg.gamma, f.n_tokens)[:, None] * scores
        row = blend(v[c], aggregate(scores, v), cfg.alpha)
        if cfg.preserve_row_norm:
            norm = np.linalg.norm(row)
            if norm > 0:
                row = row * (np.linalg.norm(v[c]) / norm)
        out[c] = row.astype(out.dtype)
    return EmbeddingMatrix(out, f.metadata)


def _selected_norms(values: np.ndarray, C: tuple[int, ...]) -> np.ndarray:
    return np.linalg.norm(values.astype(np.float64)[list(C)], axis=1)


def suppress_dominant(f: EmbeddingMatrix, selected, s: float) -> EmbeddingMatrix:
    """Rescale the selected row with the largest Euclidean norm by (1 - s).

    Ties break to the lowest token index; all other rows are unchanged.
    """
    C = validate_selection(selected, f.n_tokens)
    if not C:
        raise ValueError("selection must contain at least one token index")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"suppression strength must be in [0, 1], got {s}")
    out = f.values.copy()
    if s == 0.0:
        return EmbeddingMatrix(out, f.metadata)
    dominant = C[int(np.argmax(_selected_norms(f.values, C)))]
    row = f.values[dominant].astype(np.float64) * (1.0 - s)
    out[dominant] = row.astype(out.dtype)
    return EmbeddingMatrix(out, f.metadata)


def save_embeddings(f: EmbeddingMatrix, path) -> None:
    """Write the matrix as a tensor file plus its JSON metadata sidecar."""
    write_tensor(f.values, path)
    write_metadata(f.metadata, path)


def load_embeddings(path) -> EmbeddingMatrix:
    """Read a tensor file and its JSON metadata sidecar."""
    return EmbeddingMatrix(read_tensor(path), read_metadata(path))
