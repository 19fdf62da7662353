"""Run a diffusion pipeline with corrected embeddings and attention suppression.

Everything algorithmic stays on the core side: embeddings are corrected by
the crosstok correct / suppress-dominant commands, and attention maps are
masked by round-tripping each batch of probabilities through crosstok
ctnms. The adapter only moves tensors between torch and the shared file
format.

diffusers is imported lazily; every entry point that does not need a full
pipeline works without it.
"""

import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import encoder as enc
from . import tensorfile
from .corecli import run_core


@dataclass(frozen=True)
class CorrectionSettings:
    tau: float = 0.5
    gamma: int = 3
    alpha: float = 0.8
    preserve_norm: bool = False
    strength: float = 0.5  # 0 disables the dominant-concept step


@dataclass(frozen=True)
class SuppressionSettings:
    kernel_size: int = 3
    sigma: float = 1.0
    beta: float = 0.0
    renormalize: bool = True
    resolution: int = 16  # only square maps with this edge are touched
    from_step: int = 0    # first denoising step the mask applies to
    until_step: int | None = None


def correct_embedding_file(tensor_path, out_path, settings, selected=None,
                           binary="crosstok"):
    """Apply the core correction (and optional dominant suppression) to a tensor file."""
    tensor_path = Path(tensor_path)
    out_path = Path(out_path)
    select_args = []
    if selected is not None:
        select_args = ["--select", ",".join(str(i) for i in selected)]
    args = ["correct", "--embeddings", tensor_path, "--out", out_path,
            "--tau", settings.tau, "--gamma", settings.gamma,
            "--alpha", settings.alpha, *select_args]
    if settings.preserve_norm:
        args.append("--preserve-norm")
    run_core(*args, binary=binary)
    if settings.strength > 0:
        run_core("suppress-dominant", "--embeddings", out_path,
                 "--out", out_path, "--strength", settings.strength,
                 *select_args, binary=binary)
    return out_path


def suppress_attention_probs(probs, height, width, selected, settings,
                             binary="crosstok"):
    """Mask a torch attention tensor through the core ctnms command.

    probs: (batch_heads, height*width, tokens), softmax output.
    Returns a tensor of the same shape, dtype and device.
    """
    if probs.ndim != 3 or probs.shape[1] != height * width:
        raise ValueError("probs must be (batch_heads, height*width, tokens)")
    stack = (probs.detach().to(torch.float32).cpu().numpy()
             .reshape(-1, height, width, probs.shape[-1]))
    with tempfile.TemporaryDirectory(prefix="adapter_ctnms_") as workdir:
        src = Path(workdir) / "attn.ctt"
        dst = Path(workdir) / "attn_masked.ctt"
        tensorfile.write_tensor(src, stack)
        tensorfile.write_sidecar(
            src, prompt="", tokens=[f"tok_{i}" for i in range(stack.shape[-1])],
            selected=sorted(selected))
        args = ["ctnms", "--attention", src, "--out", dst,
                "--kernel", settings.kernel_size, "--sigma", settings.sigma,
                "--beta", settings.beta,
                "--renormalize" if settings.renormalize else "--no-renormalize"]
        run_core(*args, binary=binary)
        masked = tensorfile.read_tensor(dst)
    out = torch.from_numpy(masked.reshape(probs.shape[0], height * width, -1))
    return out.to(dtype=probs.dtype, device=probs.device)


def winner_localization(stack, selected, settings=None, binary="crosstok"):
    """Fraction of each selected channel's mass inside its own winner region.

    Computed entirely through the core: an exclusive mask (beta 0, no
    renormalization) keeps exactly the in-region mass, so the ratio of
    surviving to original mass is the localization score.
    """
    settings = settings or SuppressionSettings()
    stack = np.asarray(stack, dtype=np.float32)
    with tempfile.TemporaryDirectory(prefix="adapter_loc_") as workdir:
        src = Path(workdir) / "loc.ctt"
        dst = Path(workdir) / "loc_masked.ctt"
        tensorfile.write_tensor(src, stack)
        tensorfile.write_sidecar(
            src, prompt="", tokens=[f"tok_{i}" for i in range(stack.shape[-1])],
            selected=sorted(selected))
        run_core("ctnms", "--attention", src, "--out", dst,
                 "--kernel", settings.kernel_size, "--sigma", settings.sigma,
                 "--beta", 0.0, "--no-renormalize", binary=binary)
        masked = tensorfile.read_tensor(dst)
    scores = []
    for c in sorted(selected):
        total = float(stack[..., c].sum())
        kept = float(masked[..., c].sum())
        scores.append(kept / total if total > 0 else 0.0)
    return scores


class TrajectoryRecorder:
    """Collects per-step attention at one resolution and writes core-style dumps."""

    def __init__(self, resolution, selected, tokens, prompt=""):
        self.resolution = resolution
        self.selected = sorted(selected)
        self.tokens = list(tokens)
        self.prompt = prompt
        self._steps = {}

    def add(self, step, probs, height, width):
        if height != self.resolution or width != self.resolution:
            return
        stack = (probs.detach().to(torch.float32).cpu().numpy()
                 .reshape(-1, height, width, probs.shape[-1]))
        self._steps.setdefault(step, []).append(stack.mean(axis=0))

    def save(self, out_dir, binary="crosstok"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        with metrics_path.open("w") as fh:
            for step in sorted(self._steps):
                stack = np.mean(self._steps[step], axis=0)[np.newaxis]
                path = out_dir / f"step_{step}_attention.ctt"
                tensorfile.write_tensor(path, stack)
                tensorfile.write_sidecar(path, prompt=self.prompt,
                                         tokens=self.tokens,
                                         selected=self.selected)
                loc = winner_localization(stack, self.selected, binary=binary)
                fh.write(json.dumps({"step": step,
                                     "selected": self.selected,
                                     "localization": loc}) + "\n")
        return out_dir


class _StepClock:
    """Shared mutable step counter the attention wrappers read."""

    def __init__(self):
        self.step = 0


def _require_diffusers():
    try:
        import diffusers
    except ImportError as exc:
        raise RuntimeError(
            "image generation needs the diffusers package; "
            "install crosstok-adapter[pipeline]") from exc
    return diffusers


def _wrap_cross_attention(pipe, selected, settings, clock, recorder):
    """Replace every cross-attention processor with one that masks its probs."""

    class _MaskingProcessor:
        def __call__(self, attn, hidden_states, encoder_hidden_states=None,
                     attention_mask=None, **kwargs):
            residual = hidden_states
            if attn.spatial_norm is not None:
                hidden_states = attn.spatial_norm(hidden_states)
            batch, seq_len, _ = hidden_states.shape
            attention_mask = attn.prepare_attention_mask(
                attention_mask, seq_len, batch)
            query = attn.to_q(hidden_states)
            context = (hidden_states if encoder_hidden_states is None
                       else encoder_hidden_states)
            if attn.norm_cross:
                context = attn.norm_encoder_hidden_states(context)
            key = attn.to_k(context)
            value = attn.to_v(context)
            query = attn.head_to_batch_dim(query)
            key = attn.head_to_batch_dim(key)
            value = attn.head_to_batch_dim(value)
            probs = attn.get_attention_scores(query, key, attention_mask)

            edge = int(math.isqrt(seq_len))
            is_cross = encoder_hidden_states is not None
            in_window = (clock.step >= settings.from_step
                         and (settings.until_step is None
                              or clock.step < settings.until_step))
            if is_cross and edge * edge == seq_len:
                if recorder is not None:
                    recorder.add(clock.step, probs, edge, edge)
                if edge == settings.resolution and in_window:
                    probs = suppress_attention_probs(
                        probs, edge, edge, selected, settings)

            hidden_states = torch.bmm(probs, value)
            hidden_states = attn.batch_to_head_dim(hidden_states)
            hidden_states = attn.to_out[0](hidden_states)
            hidden_states = attn.to_out[1](hidden_states)
            if attn.residual_connection:
                hidden_states = hidden_states + residual
            return hidden_states / attn.rescale_output_factor

    processors = {}
    for name in pipe.unet.attn_processors:
        if name.endswith("attn2.processor"):
            processors[name] = _MaskingProcessor()
        else:
            processors[name] = pipe.unet.attn_processors[name]
    pipe.unet.set_attn_processor(processors)


def generate_with_corrections(prompt, concepts, pipeline_dir, out_dir,
                              correction=None, suppression=None, seed=0,
                              steps=30, guidance_scale=7.5,
                              binary="crosstok"):
    """Generate one image with embedding corrections and attention masking.

    concepts: words in the prompt whose tokens get corrected and separated.
    correction None skips the embedding stage entirely; CorrectionSettings
    with alpha=0 and strength=0 runs it as an exact identity. suppression
    None leaves the pipeline's attention untouched.
    Returns a dict of output paths.
    """
    _require_diffusers()
    from diffusers import StableDiffusionPipeline

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipe = StableDiffusionPipeline.from_pretrained(
        pipeline_dir, safety_checker=None)
    pipe.to("cpu")

    text_encoder = (pipe.tokenizer, pipe.text_encoder)
    exported = out_dir / "embeddings.ctt"
    encoded = enc.export_text_embeddings(prompt, exported, encoder=text_encoder,
                                         concepts=concepts)
    selected = sorted(enc.concept_indices(encoded.tokens, concepts))

    source = exported
    if correction is not None:
        source = correct_embedding_file(exported, out_dir / "corrected.ctt",
                                        correction, binary=binary)
    cond = torch.from_numpy(tensorfile.read_tensor(source)).unsqueeze(0)
    uncond_path = out_dir / "uncond.ctt"
    uncond_enc = enc.export_text_embeddings("", uncond_path, encoder=text_encoder)
    uncond = torch.from_numpy(uncond_enc.values).unsqueeze(0)

    clock = _StepClock()
    recorder = TrajectoryRecorder(
        resolution=suppression.resolution if suppression else 16,
        selected=selected, tokens=encoded.tokens, prompt=prompt)
    if suppression is not None:
        _wrap_cross_attention(pipe, selected, suppression, clock, recorder)

    def on_step_end(pipeline, step, timestep, callback_kwargs):
        clock.step = step + 1
        return callback_kwargs

    generator = torch.Generator("cpu").manual_seed(seed)
    result = pipe(prompt_embeds=cond, negative_prompt_embeds=uncond,
                  num_inference_steps=steps, guidance_scale=guidance_scale,
                  generator=generator, callback_on_step_end=on_step_end)
    image_path = out_dir / "image.png"
    result.images[0].save(image_path)

    trajectory_dir = None
    if suppression is not None:
        trajectory_dir = recorder.save(out_dir / "trajectory", binary=binary)
    return {"image": image_path, "embeddings": exported,
            "corrected": source if correction is not None else None,
            "trajectory": trajectory_dir}
