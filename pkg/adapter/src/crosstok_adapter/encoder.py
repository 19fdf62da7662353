"""Export prompt embeddings from a pretrained text encoder into core tensor files."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import tensorfile


@dataclass(frozen=True)
class EncodedPrompt:
    """One tokenized prompt and its per-token hidden states."""

    prompt: str
    tokens: tuple
    values: np.ndarray  # (tokens, dim) float32
    truncated: bool
    null_start: int  # first padding slot after the end marker


def load_text_encoder(model_dir, device="cpu"):
    """Load tokenizer and text encoder from a local directory or hub id."""
    from transformers import AutoTokenizer, CLIPTextModel

    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    model = CLIPTextModel.from_pretrained(model_dir)
    model.to(device)
    model.eval()
    return tokenizer, model


def encode_prompt(tokenizer, model, prompt, max_length=None):
    if max_length is None:
        max_length = tokenizer.model_max_length
    raw_ids = tokenizer(prompt, padding=False, truncation=False)["input_ids"]
    truncated = len(raw_ids) > max_length
    enc = tokenizer(
        prompt,
        padding="max_length",
        max_length=max_length,
        truncation=True,
        return_tensors="pt",
    )
    input_ids = enc["input_ids"].to(model.device)
    with torch.no_grad():
        hidden = model(input_ids=input_ids).last_hidden_state[0]
    tokens = tuple(tokenizer.convert_ids_to_tokens(enc["input_ids"][0]))

    # padding begins right after the first end-of-text marker
    ids = enc["input_ids"][0].tolist()
    eos = tokenizer.eos_token_id
    null_start = (ids.index(eos) + 1) if eos in ids else len(ids)

    values = hidden.cpu().numpy().astype(np.float32)
    return EncodedPrompt(prompt, tokens, values, truncated, null_start)


def find_token_index(tokens, word):
    """Index of the first token matching a word, ignoring case and the BPE end marker."""
    want = word.lower()
    for i, tok in enumerate(tokens):
        if tok.lower().removesuffix("</w>") == want:
            return i
    raise ValueError(f"token {word!r} not found in prompt")


def concept_indices(tokens, words):
    indices = [find_token_index(tokens, w) for w in words]
    if len(set(indices)) != len(indices):
        raise ValueError("concept words resolve to the same token")
    return indices


def export_text_embeddings(prompt, out_path, model_dir=None, encoder=None,
                           concepts=(), max_length=None):
    """Encode a prompt and write the tensor plus sidecar for the core tools.

    Pass either model_dir or an already loaded (tokenizer, model) pair.
    concepts is a sequence of words to mark as selected in the sidecar.
    """
    if encoder is None:
        if model_dir is None:
            raise ValueError("need model_dir or encoder")
        encoder = load_text_encoder(model_dir)
    tokenizer, model = encoder
    encoded = encode_prompt(tokenizer, model, prompt, max_length=max_length)
    selected = sorted(concept_indices(encoded.tokens, concepts)) if concepts else []

    out_path = Path(out_path)
    tensorfile.write_tensor(out_path, encoded.values)
    tensorfile.write_sidecar(
        out_path,
        prompt=encoded.prompt,
        tokens=encoded.tokens,
        selected=selected,
        extra={"truncated": encoded.truncated, "null_start": encoded.null_start},
    )
    return encoded
