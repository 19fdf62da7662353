"""Corpus-level geometry profile: where do padding tokens sit relative to each concept?

For every two-concept prompt we export the encoder states, then ask the
core diagnose command for cosine and distance from each concept token to
every other token. Padding rows (everything after the end marker) are
pooled across the corpus and averaged against the first and the second
concept separately.
"""

import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import encoder as enc
from .corecli import run_core

MAX_PROMPT_WORDS = 10


@dataclass(frozen=True)
class CorpusEntry:
    prompt: str
    first: str
    second: str


def parse_corpus_line(line):
    """Parse 'prompt | first | second' into a CorpusEntry."""
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 3 or not all(parts):
        raise ValueError(f"expected 'prompt | first | second', got {line!r}")
    return CorpusEntry(*parts)


def _validate_entry(entry):
    if len(entry.prompt.split()) >= MAX_PROMPT_WORDS:
        raise ValueError(f"prompt has {len(entry.prompt.split())} words, "
                         f"limit is {MAX_PROMPT_WORDS - 1}: {entry.prompt!r}")


def _prompt_profile(entry, text_encoder, workdir, binary):
    tensor = Path(workdir) / "profile.ctt"
    encoded = enc.export_text_embeddings(
        entry.prompt, tensor, encoder=text_encoder,
        concepts=(entry.first, entry.second))
    i_first = enc.find_token_index(encoded.tokens, entry.first)
    i_second = enc.find_token_index(encoded.tokens, entry.second)
    select = ",".join(str(i) for i in sorted((i_first, i_second)))

    report = json.loads(run_core(
        "diagnose", "--embeddings", tensor, "--select", select, binary=binary))

    def null_stats(concept_index):
        rows = [r for r in report["similarity"][str(concept_index)]
                if r["index"] >= encoded.null_start]
        return ([r["cosine"] for r in rows], [r["distance"] for r in rows])

    cos_first, dist_first = null_stats(i_first)
    cos_second, dist_second = null_stats(i_second)
    return {
        "prompt": entry.prompt,
        "first": entry.first,
        "second": entry.second,
        "first_index": i_first,
        "second_index": i_second,
        "null_count": len(cos_first),
        "cos_first": cos_first,
        "cos_second": cos_second,
        "dist_first": dist_first,
        "dist_second": dist_second,
    }


def corpus_profile(entries, model_dir=None, text_encoder=None, binary="crosstok"):
    """Aggregate null-token geometry over a corpus of two-concept prompts.

    Returns a dict with pooled means toward the first and second concept
    plus the raw per-prompt breakdown.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("corpus is empty")
    for e in entries:
        _validate_entry(e)
    if text_encoder is None:
        if model_dir is None:
            raise ValueError("need model_dir or text_encoder")
        text_encoder = enc.load_text_encoder(model_dir)

    per_prompt = []
    with tempfile.TemporaryDirectory(prefix="adapter_fig5_") as workdir:
        for entry in entries:
            per_prompt.append(_prompt_profile(entry, text_encoder, workdir, binary))

    pools = {k: [] for k in ("cos_first", "cos_second", "dist_first", "dist_second")}
    for row in per_prompt:
        for k in pools:
            pools[k].extend(row[k])
    if not pools["cos_first"]:
        raise ValueError("corpus produced no padding tokens to profile")

    def mean(xs):
        return sum(xs) / len(xs)

    summary = {
        "prompts": len(per_prompt),
        "null_tokens": len(pools["cos_first"]),
        "first": {"mean_cosine": mean(pools["cos_first"]),
                  "mean_distance": mean(pools["dist_first"])},
        "second": {"mean_cosine": mean(pools["cos_second"]),
                   "mean_distance": mean(pools["dist_second"])},
    }
    summary["per_prompt"] = [
        {k: row[k] for k in ("prompt", "first", "second",
                             "first_index", "second_index", "null_count")}
        | {"first_mean_cosine": mean(row["cos_first"]) if row["cos_first"] else None,
           "second_mean_cosine": mean(row["cos_second"]) if row["cos_second"] else None}
        for row in per_prompt
    ]
    return summary
