"""Adapter between a pretrained text encoder / diffusion pipeline and the crosstok tools.

All traffic to the core goes through its tensor files and command line;
nothing here imports the core package.
"""

from .corecli import CoreCliError, run_core
from .corpus import CorpusEntry, corpus_profile, parse_corpus_line
from .encoder import (EncodedPrompt, concept_indices, encode_prompt,
                      export_text_embeddings, find_token_index,
                      load_text_encoder)
from .generate import (CorrectionSettings, SuppressionSettings,
                       TrajectoryRecorder, correct_embedding_file,
                       generate_with_corrections, suppress_attention_probs,
                       winner_localization)
from .tensorfile import (read_sidecar, read_tensor, sidecar_path,
                         write_sidecar, write_tensor)

__all__ = [
    "CoreCliError",
    "CorpusEntry",
    "CorrectionSettings",
    "EncodedPrompt",
    "SuppressionSettings",
    "TrajectoryRecorder",
    "concept_indices",
    "corpus_profile",
    "correct_embedding_file",
    "encode_prompt",
    "export_text_embeddings",
    "find_token_index",
    "generate_with_corrections",
    "load_text_encoder",
    "parse_corpus_line",
    "read_sidecar",
    "read_tensor",
    "run_core",
    "sidecar_path",
    "suppress_attention_probs",
    "winner_localization",
    "write_sidecar",
    "write_tensor",
]

__version__ = "0.1.0"
