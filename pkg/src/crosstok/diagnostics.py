"""Measurements for the two multi-concept failure modes: one concept
dominating generation, and a concept's contribution spreading over other
tokens' attention maps.  Also provides the row-swap probe for checking where
dominance is decided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from crosstok.correction import EmbeddingMatrix, _selected_norms
from crosstok.ctnms import AttentionStack
from crosstok.tensor_io import TokenMetadata, validate_selection

MAX_UNIT_DISTANCE = math.sqrt(2.0)


@dataclass(frozen=True)
class TokenSimilarity:
    """Cosine and unit-normalized Euclidean distance from a concept to one token."""

    index: int
    token: str
    cosine: float
    distance: float

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "token": self.token,
            "cosine": self.cosine,
            "distance": self.distance,
        }


@dataclass(frozen=True)
class DominanceReport:
    """Euclidean norms of the selected rows and which of them dominates."""

    indices: tuple[int, ...]
    tokens: tuple[str, ...]
    norms: tuple[float, ...]
    dominant: int
    ratio: float

    def as_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "tokens": list(self.tokens),
            "norms": list(self.norms),
            "dominant": self.dominant,
            "ratio": self.ratio,
        }


def similarity_profile(f: EmbeddingMatrix, c: int) -> list[TokenSimilarity]:
    """Compare row c against every other row after unit normalization.

    Zero-norm rows cannot be normalized; against them the cosine is reported
    as 0 and the distance as the orthogonal-case maximum sqrt(2).
    """
    v = f.values.astype(np.float64)
    n = v.shape[0]
    if not 0 <= c < n:
        raise ValueError(f"token index {c} out of range for {n} tokens")
    norms = np.linalg.norm(v, axis=1)
    records = []
    for i in range(n):
        if i == c:
            continue
        if norms[c] == 0 or norms[i] == 0:
            cosine, distance = 0.0, MAX_UNIT_DISTANCE
        else:
            u_c = v[c] / norms[c]
            u_i = v[i] / norms[i]
            cosine = float(u_c @ u_i)
            distance = float(np.linalg.norm(u_c - u_i))
        records.append(TokenSimilarity(i, f.metadata.tokens[i], cosine, distance))
    return records


def norm_report(f: EmbeddingMatrix, selected) -> DominanceReport:
    """Norms of the selected rows, the dominant index, and max / second-max."""
    C = validate_selection(selected, f.n_tokens)
    if not C:
        raise ValueError("selection must contain at least one token index")
    norms = _selected_norms(f.values, C)
    dominant = C[int(np.argmax(norms))]
    if len(C) == 1:
        ratio = 1.0
    else:
        top, second = np.sort(norms)[::-1][:2]
        if second > 0:
            ratio = float(top / second)
        else:
            ratio = 1.0 if top == 0 else math.inf
    return DominanceReport(
        indices=C,
        tokens=tuple(f.metadata.tokens[c] for c in C),
        norms=tuple(float(x) for x in norms),
        dominant=dominant,
        ratio=ratio,
    )


def localization_score(A: AttentionStack, c: int, region) -> float:
    """Fraction of token c's attention mass inside the given spatial region.

    region is an h x w boolean mask applied across all maps.  Returns 0 when
    the channel carries no mass at all.
    """
    if not 0 <= c < A.n_tokens:
        raise ValueError(f"token index {c} out of range for {A.n_tokens} tokens")
    mask = np.asarray(region, dtype=bool)
    if mask.shape != A.grid:
        raise ValueError(f"region shape {mask.shape} does not match grid {A.grid}")
    if not mask.any():
        raise ValueError("region must contain at least one pixel")
    channel = A.values[..., c].astype(np.float64)
    inside = channel[:, mask].sum()
    outside = channel[:, ~mask].sum()
    if inside + outside == 0:
        return 0.0
    return float(inside / (inside + outside))


def swap_embeddings(f: EmbeddingMatrix, c1: int, c2: int) -> EmbeddingMatrix:
    """Exchange two rows and their token strings; everything else unchanged."""
    n = f.n_tokens
    for c in (c1, c2):
        if not 0 <= c < n:
            raise ValueError(f"token index {c} out of range for {n} tokens")
    if c1 == c2:
        raise ValueError("swap indices must be distinct")
    out = f.values.copy()
    out[[c1, c2]] = out[[c2, c1]]
    tokens = list(f.metadata.tokens)
    tokens[c1], tokens[c2] = tokens[c2], tokens[c1]
    meta = TokenMetadata(f.metadata.prompt, tuple(tokens), f.metadata.selected)
    return EmbeddingMatrix(out, meta)
