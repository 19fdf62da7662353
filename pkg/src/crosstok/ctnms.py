"""Cross-token non-maximum suppression of attention map stacks.

Per pixel, the selected token whose smoothed attention is strongest keeps its
score and the competing selected tokens are damped, which prevents different
concepts from painting the same region.  Smoothing only decides the winners;
the suppression mask multiplies the original, unsmoothed maps.  Non-selected
tokens (articles, padding) are never touched by the mask.
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
class AttentionStack:
    """Cross-attention maps, shape (maps, height, width, tokens), non-negative."""

    values: np.ndarray
    metadata: TokenMetadata

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 4:
            raise ValueError(f"attention stack must be 4-D, got rank {arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValueError("attention stack must be finite")
        if (arr < 0).any():
            raise ValueError("attention stack must be non-negative")
        if arr.shape[3] != self.metadata.n_tokens:
            raise ValueError(
                f"token axis {arr.shape[3]} does not match "
                f"{self.metadata.n_tokens} metadata tokens"
            )
        object.__setattr__(self, "values", arr)

    @property
    def n_maps(self) -> int:
        return self.values.shape[0]

    @property
    def grid(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    @property
    def n_tokens(self) -> int:
        return self.values.shape[3]

    def token_sums(self) -> np.ndarray:
        """Per (map, pixel) sum over the token axis."""
        return self.values.astype(np.float64).sum(axis=-1)


@dataclass(frozen=True)
class SuppressionConfig:
    """Smoothing kernel, suppression factor for losing tokens, renormalization.

    beta = 0 suppresses losers completely (hard one-hot among the selected
    tokens); beta = 1 disables suppression.  renormalize restores each
    (map, pixel) token sum to its pre-suppression value, since masking breaks
    the softmax normalization downstream consumers may rely on.
    """

    kernel_size: int = 3
    sigma: float = 1.0
    beta: float = 0.0
    renormalize: bool = True

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")


def gaussian_kernel(kappa: int, sigma: float) -> np.ndarray:
    """1-D Gaussian taps exp(-x^2 / (2 sigma^2)) for |x| <= (kappa-1)/2, sum 1."""
    if kappa < 1 or kappa % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {kappa}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x = np.arange(kappa, dtype=np.float64) - (kappa - 1) / 2
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _smooth_axis(x: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    # Residual form out = x + sum_j w_j * (shift_j(x) - x): algebraically the
    # plain correlation when the taps sum to 1, but exact on constant inputs
    # (replicate-padded shifts of a constant cancel termwise).
    radius = len(weights) // 2
    if radius == 0:
        return x
    pad = [(0, 0)] * x.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(x, pad, mode="edge")
    length = x.shape[axis]
    acc = np.zeros_like(x)
    for tap, w in enumerate(weights):
        if tap == radius:
            continue
        window = [slice(None)] * x.ndim
        window[axis] = slice(tap, tap + length)
        acc += w * (padded[tuple(window)] - x)
    return x + acc


def gaussian_smooth(channels, kappa: int, sigma: float) -> np.ndarray:
    """Convolve each height x width slice with a separable Gaussian kernel.

    Borders use replicate padding, so constant slices are fixed points of the
    operation, borders included.
    """
    arr = np.asarray(channels)
    if arr.ndim != 4:
        raise ValueError(f"channels must be 4-D (maps, h, w, k), got rank {arr.ndim}")
    taps = gaussian_kernel(kappa, sigma)
    out = arr.astype(np.float64)
    out = _smooth_axis(out, taps, axis=1)
    out = _smooth_axis(out, taps, axis=2)
    return out.astype(arr.dtype) if arr.dtype != out.dtype else out


def winner_map(channels) -> np.ndarray:
    """Index of the strongest channel at each (map, pixel); ties go lowest."""
    arr = np.asarray(channels)
    if arr.ndim != 4:
        raise ValueError(f"channels must be 4-D (maps, h, w, k), got rank {arr.ndim}")
    if arr.shape[3] < 1:
        raise ValueError("need at least one candidate channel")
    return np.argmax(arr, axis=-1)


def suppression_mask(winners, selected, t: int, beta: float) -> np.ndarray:
    """Per-token multipliers: 1 everywhere except losing selected tokens get beta.

    winners holds positions into the selection (from `winner_map`); tokens
    outside the selection always receive 1.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    M = np.asarray(winners)
    if M.ndim != 3:
        raise ValueError(f"winner map must be 3-D (maps, h, w), got rank {M.ndim}")
    C = tuple(selected)
    if not C:
        raise ValueError("selection must contain at least one token index")
    if t < max(C) + 1:
        raise ValueError(f"token count {t} too small for selection {C}")
    if M.min() < 0 or M.max() >= len(C):
        raise ValueError(
            f"winner indices must lie in [0, {len(C)}), got "
            f"[{M.min()}, {M.max()}]"
        )
    mask = np.ones(M.shape + (t,), dtype=np.float64)
    for position, token in enumerate(C):
        mask[..., token] = np.where(M == position, 1.0, beta)
    return mask


def apply_ctnms(A: AttentionStack, selected, cfg: SuppressionConfig) -> AttentionStack:
    """Suppress losing selected tokens per pixel across an attention stack.

    The selected channels are Gaussian-smoothed to decide a winner per
    (map, pixel); losers among the selected tokens are scaled by beta while
    the original (unsmoothed) scores of winners and of non-selected tokens
    pass through.  With cfg.renormalize, each (map, pixel) token vector is
    rescaled to its pre-suppression sum, skipping pixels whose masked sum is
    zero.
    """
    C = validate_selection(selected, A.n_tokens)
    if not C:
        raise ValueError("selection must contain at least one token index")
    values = A.values.astype(np.float64)
    smoothed = gaussian_smooth(values[..., list(C)], cfg.kernel_size, cfg.sigma)
    winners = winner_map(smoothed)
    mask = suppression_mask(winners, C, A.n_tokens, cfg.beta)
    out = mask * values
    if cfg.renormalize:
        pre = values.sum(axis=-1)
        post = out.sum(axis=-1)
        scale = np.ones_like(pre)
        np.divide(pre, post, out=scale, where=post > 0)
        out *= scale[..., None]
    if out.dtype != A.values.dtype:
        out = out.astype(A.values.dtype)
    return AttentionStack(out, A.metadata)


def save_attention(A: AttentionStack, path) -> None:
    """Write the stack as a tensor file plus its JSON metadata sidecar."""
    write_tensor(A.values, path)
    write_metadata(A.metadata, path)


def load_attention(path) -> AttentionStack:
    """Read a tensor file and its JSON metadata sidecar."""
    return AttentionStack(read_tensor(path), read_metadata(path))
