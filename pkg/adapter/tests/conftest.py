"""Shared fixtures: a tiny word-level text encoder saved to disk.

The adapter only needs "some pretrained checkpoint directory" to exercise
its plumbing, so tests build a miniature one locally: a word-level
tokenizer with start/end markers and a small randomly initialized text
model, both saved in the standard layout. No network access involved.
"""

import pytest
import torch

VOCAB_WORDS = [
    "a", "photo", "of", "cat", "and", "dog", "pot", "next", "to", "the",
    "on", "sat", "mat", "with", "bird", "fish", "car", "tree", "near",
    "red", "blue", "green", "horse", "boat", "moon", "sun", "star",
    "book", "cup", "hat", "box", "key", "lamp", "door", "painting",
]

BOS = "<|startoftext|>"
EOS = "<|endoftext|>"
UNK = "<|unk|>"
MAX_LENGTH = 16


def _build_tokenizer(save_dir):
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
    from transformers import PreTrainedTokenizerFast

    vocab = {BOS: 0, EOS: 1, UNK: 2}
    for word in VOCAB_WORDS:
        vocab[word] = len(vocab)
    tok = Tokenizer(models.WordLevel(vocab, unk_token=UNK))
    tok.normalizer = normalizers.Lowercase()
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    tok.post_processor = processors.TemplateProcessing(
        single=f"{BOS} $A {EOS}",
        pair=None,
        special_tokens=[(BOS, 0), (EOS, 1)],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token=BOS,
        eos_token=EOS,
        unk_token=UNK,
        pad_token=EOS,
        model_max_length=MAX_LENGTH,
    )
    fast.save_pretrained(save_dir)
    return len(vocab)


def _build_model(save_dir, vocab_size):
    from transformers import CLIPTextConfig, CLIPTextModel

    config = CLIPTextConfig(
        vocab_size=vocab_size,
        hidden_size=32,
        intermediate_size=64,
        projection_dim=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        max_position_embeddings=MAX_LENGTH,
        bos_token_id=0,
        eos_token_id=1,
        pad_token_id=1,
    )
    torch.manual_seed(1234)
    model = CLIPTextModel(config)
    model.eval()
    model.save_pretrained(save_dir)


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny_encoder")
    vocab_size = _build_tokenizer(path)
    _build_model(path, vocab_size)
    return path


@pytest.fixture(scope="session")
def text_encoder(encoder_dir):
    from crosstok_adapter.encoder import load_text_encoder

    return load_text_encoder(encoder_dir)
