"""Tweak text embeddings and cross-attention maps for multi-concept image generation.

The package operates on two kinds of data: text-encoder output embeddings
(one row per token) and cross-attention map stacks (maps x height x width x
tokens).  It provides similarity-based embedding correction, norm-based
dominance suppression, cross-token non-maximum suppression of attention maps,
diagnostics for concept dominance and contribution localization, a
deterministic toy attention harness, and a small binary tensor format used as
the file boundary toward real diffusion pipelines.
"""

from crosstok.tensor_io import (
    TensorFormatError,
    TokenMetadata,
    read_metadata,
    read_tensor,
    render_heatmap,
    sidecar_path,
    write_metadata,
    write_tensor,
)
from crosstok.correction import (
    CorrectionConfig,
    EmbeddingMatrix,
    aggregate,
    blend,
    correct_by_similarities,
    load_embeddings,
    save_embeddings,
    similarity_scores,
    suppress_dominant,
    threshold_normalize,
    window_mask,
)
from crosstok.ctnms import (
    AttentionStack,
    SuppressionConfig,
    apply_ctnms,
    gaussian_kernel,
    gaussian_smooth,
    load_attention,
    save_attention,
    suppression_mask,
    winner_map,
)
from crosstok.diagnostics import (
    DominanceReport,
    TokenSimilarity,
    localization_score,
    norm_report,
    similarity_profile,
    swap_embeddings,
)
from crosstok.harness import (
    InjectionSchedule,
    SceneSpec,
    StepRecord,
    Trajectory,
    cross_attention,
    injection_schedule_select,
    run_simulation,
    synth_scene,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionStack",
    "CorrectionConfig",
    "DominanceReport",
    "EmbeddingMatrix",
    "InjectionSchedule",
    "SceneSpec",
    "StepRecord",
    "SuppressionConfig",
    "TensorFormatError",
    "TokenMetadata",
    "TokenSimilarity",
    "Trajectory",
    "aggregate",
    "apply_ctnms",
    "blend",
    "correct_by_similarities",
    "cross_attention",
    "gaussian_kernel",
    "gaussian_smooth",
    "injection_schedule_select",
    "load_attention",
    "load_embeddings",
    "localization_score",
    "norm_report",
    "read_metadata",
    "read_tensor",
    "render_heatmap",
    "run_simulation",
    "save_attention",
    "save_embeddings",
    "sidecar_path",
    "similarity_profile",
    "similarity_scores",
    "suppress_dominant",
    "suppression_mask",
    "swap_embeddings",
    "synth_scene",
    "threshold_normalize",
    "window_mask",
    "winner_map",
    "write_metadata",
    "write_tensor",
]
