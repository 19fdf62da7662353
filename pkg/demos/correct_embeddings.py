"""Walk through the embedding-side corrections on a two-concept toy prompt.

Builds a small embedding matrix where the second concept leans on the first
(shared direction, smaller norm), then shows what the similarity blend and
the dominant-row rescale do to norms and cross-token similarity.

Run:  python3 demos/correct_embeddings.py
"""

import numpy as np

from crosstok import (
    CorrectionConfig,
    EmbeddingMatrix,
    TokenMetadata,
    correct_by_similarities,
    norm_report,
    similarity_profile,
    suppress_dominant,
)

TOKENS = ("<start>", "a", "photo", "of", "a", "cat", "and", "a", "dog", "<end>")
CAT, DOG = 5, 8


def build_matrix(seed=42):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((len(TOKENS), 24))
    # make "cat" loud and let "dog" share half its direction with "cat":
    # the classic setup where one concept swallows the other.
    values[CAT] *= 2.5
    values[DOG] = 0.5 * values[DOG] + 0.5 * values[CAT] / 2.5
    meta = TokenMetadata("a photo of a cat and a dog", TOKENS, (CAT, DOG))
    return EmbeddingMatrix(values, meta)


def show_norms(tag, matrix):
    rep = norm_report(matrix, (CAT, DOG))
    print(f"{tag:>12}  norms cat={rep.norms[0]:.3f} dog={rep.norms[1]:.3f} "
          f"dominant={TOKENS[rep.dominant]!r} ratio={rep.ratio:.2f}")


def main():
    f = build_matrix()
    show_norms("input", f)

    # dominance first: rescale the loud row, nothing else moves
    calmed = suppress_dominant(f, (CAT, DOG), 0.5)
    show_norms("suppressed", calmed)

    # then rebuild each concept row from its similarity neighborhood
    cfg = CorrectionConfig(tau=0.5, gamma=3, alpha=0.8)
    corrected = correct_by_similarities(calmed, (CAT, DOG), cfg)
    show_norms("corrected", corrected)

    print("\nhow close is 'dog' to every other token, before vs after:")
    before = {e.index: e for e in similarity_profile(f, DOG)}
    after = {e.index: e for e in similarity_profile(corrected, DOG)}
    print(f"{'token':>10} {'cos before':>11} {'cos after':>10}")
    for i, tok in enumerate(TOKENS):
        if i == DOG:
            continue
        print(f"{tok:>10} {before[i].cosine:>11.3f} {after[i].cosine:>10.3f}")

    untouched = [i for i in range(len(TOKENS)) if i not in (CAT, DOG)]
    assert np.array_equal(corrected.values[untouched], calmed.values[untouched])
    print("\nnon-concept rows were left bit-identical.")


if __name__ == "__main__":
    main()
