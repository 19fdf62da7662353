"""Command line front end.

Subcommands operate on the binary tensor files plus JSON sidecars; everything
is computed before any output file is touched, and a write failure removes the
partial file.  Exit codes: 0 success, 1 validation problem (bad arguments or
malformed input data), 2 I/O failure (missing file, unwritable path).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from crosstok.correction import (
    CorrectionConfig,
    EmbeddingMatrix,
    correct_by_similarities,
    load_embeddings,
    save_embeddings,
    suppress_dominant,
)
from crosstok.ctnms import AttentionStack, SuppressionConfig, apply_ctnms, load_attention, save_attention
from crosstok.diagnostics import norm_report, similarity_profile
from crosstok.harness import SceneSpec, run_simulation
from crosstok.tensor_io import (
    TensorFormatError,
    TokenMetadata,
    read_tensor,
    render_heatmap,
    validate_selection,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad arguments; here that is a validation
    # problem, so raise instead and let run() map it to exit code 1.
    def error(self, message):
        raise ValueError(f"{message}\n{self.format_usage()}".rstrip())


def _parse_select(text: str, n_tokens: int) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",")]
    if any(p == "" for p in parts) or not parts:
        raise ValueError(f"bad --select value {text!r}: expected comma-separated indices")
    try:
        indices = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad --select value {text!r}: expected comma-separated indices") from None
    return validate_selection(indices, n_tokens)


def _resolve_selection(args, metadata) -> tuple[int, ...]:
    if args.select is not None:
        return _parse_select(args.select, len(metadata.tokens))
    if not metadata.selected:
        raise ValueError("no selected tokens: none in the sidecar and no --select given")
    return metadata.selected


def _with_selection(matrix: EmbeddingMatrix, selected) -> EmbeddingMatrix:
    if selected == matrix.metadata.selected:
        return matrix
    meta = TokenMetadata(matrix.metadata.prompt, matrix.metadata.tokens, selected)
    return EmbeddingMatrix(matrix.values, meta)


def _write_or_clean(write, path):
    try:
        write()
    except OSError:
        Path(path).unlink(missing_ok=True)
        raise


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"bad --grid value {text!r}: expected HxW like 16x16")
    try:
        h, w = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"bad --grid value {text!r}: expected HxW like 16x16") from None
    return h, w


def _parse_centers(text: str) -> tuple[tuple[float, float], ...]:
    centers = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ValueError(f"bad --centers value {text!r}: expected r,c;r,c;...")
        try:
            centers.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ValueError(f"bad --centers value {text!r}: expected r,c;r,c;...") from None
    return tuple(centers)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crosstok", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correct", help="blend selected embedding rows with similarity-weighted context")
    p.add_argument("--embeddings", required=True, help="embedding tensor file (.ctt with JSON sidecar)")
    p.add_argument("--out", required=True)
    p.add_argument("--select", help="comma-separated token indices (default: sidecar selection)")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--gamma", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--preserve-norm", action="store_true")

    p = sub.add_parser("suppress-dominant", help="scale down the largest-norm selected row")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--select")
    p.add_argument("--strength", type=float, default=0.5)

    p = sub.add_parser("ctnms", help="keep each pixel's winning token, damp the losers")
    p.add_argument("--attention", required=True, help="attention stack file (.ctt with JSON sidecar)")
    p.add_argument("--out", required=True)
    p.add_argument("--select")
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--renormalize", dest="renormalize", action="store_true", default=True)
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")

    p = sub.add_parser("diagnose", help="print dominance and similarity diagnostics as JSON")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--select")

    p = sub.add_parser("simulate", help="run the synthetic attention loop, write a trajectory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON file with scene fields (overrides scene flags)")
    p.add_argument("--tokens", type=int, default=16)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--grid", default="16x16")
    p.add_argument("--select", help="required unless --config provides it")
    p.add_argument("--centers", help="concept centers as r,c;r,c;...")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--maps", type=int, default=1)
    p.add_argument("--bias", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--correct", action="store_true", help="correct embeddings before the loop")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--gamma", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--ctnms", action="store_true", help="suppress cross-token overlap each step")
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--renormalize", dest="renormalize", action="store_true", default=True)
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")

    p = sub.add_parser("render", help="render one map channel to a binary PGM heatmap")
    p.add_argument("--attention", required=True, help=".ctt tensor file, rank 2 or rank 4")
    p.add_argument("--out", required=True)
    p.add_argument("--map", type=int, default=0, help="map index for rank-4 stacks")
    p.add_argument("--token", type=int, default=None, help="token channel for rank-4 stacks")
    return parser


def _cmd_correct(args) -> int:
    matrix = load_embeddings(args.embeddings)
    selected = _resolve_selection(args, matrix.metadata)
    cfg = CorrectionConfig(
        tau=args.tau, gamma=args.gamma, alpha=args.alpha, preserve_row_norm=args.preserve_norm
    )
    out = correct_by_similarities(matrix, selected, cfg)
    _write_or_clean(lambda: save_embeddings(_with_selection(out, selected), args.out), args.out)
    return 0


def _cmd_suppress_dominant(args) -> int:
    matrix = load_embeddings(args.embeddings)
    selected = _resolve_selection(args, matrix.metadata)
    out = suppress_dominant(matrix, selected, args.strength)
    _write_or_clean(lambda: save_embeddings(_with_selection(out, selected), args.out), args.out)
    return 0


def _cmd_ctnms(args) -> int:
    stack = load_attention(args.attention)
    selected = _resolve_selection(args, stack.metadata)
    cfg = SuppressionConfig(
        kernel_size=args.kernel, sigma=args.sigma, beta=args.beta, renormalize=args.renormalize
    )
    out = apply_ctnms(stack, selected, cfg)
    if selected != out.metadata.selected:
        meta = TokenMetadata(out.metadata.prompt, out.metadata.tokens, selected)
        out = AttentionStack(out.values, meta)
    _write_or_clean(lambda: save_attention(out, args.out), args.out)
    return 0


def _cmd_diagnose(args) -> int:
    matrix = load_embeddings(args.embeddings)
    selected = _resolve_selection(args, matrix.metadata)
    report = norm_report(matrix, selected)
    profiles = {
        str(c): [entry.as_dict() for entry in similarity_profile(matrix, c)] for c in selected
    }
    print(json.dumps({"dominance": report.as_dict(), "similarity": profiles}, indent=2))
    return 0


def _scene_from_config(path) -> tuple[SceneSpec, CorrectionConfig | None, SuppressionConfig | None]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"bad config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"bad config file {path}: expected a JSON object")
    known = {
        "n_tokens", "dim", "grid", "selected", "concept_centers", "steps", "seed",
        "n_maps", "bias_weight", "bump_radius", "correction", "suppression",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"bad config file {path}: unknown keys {sorted(unknown)}")
    scene_keys = {k: v for k, v in raw.items() if k not in ("correction", "suppression")}
    for key in ("grid",):
        if key in scene_keys:
            scene_keys[key] = tuple(scene_keys[key])
    if "concept_centers" in scene_keys:
        scene_keys["concept_centers"] = tuple(tuple(c) for c in scene_keys["concept_centers"])
    if "selected" in scene_keys:
        scene_keys["selected"] = tuple(scene_keys["selected"])
    try:
        spec = SceneSpec(**scene_keys)
    except TypeError as exc:
        raise ValueError(f"bad config file {path}: {exc}") from None
    correction = CorrectionConfig(**raw["correction"]) if "correction" in raw else None
    suppression = SuppressionConfig(**raw["suppression"]) if "suppression" in raw else None
    return spec, correction, suppression


def _cmd_simulate(args) -> int:
    if args.config is not None:
        spec, correction, suppression = _scene_from_config(args.config)
    else:
        if args.select is None or args.centers is None:
            raise ValueError("simulate needs --select and --centers (or a --config file)")
        spec = SceneSpec(
            n_tokens=args.tokens,
            dim=args.dim,
            grid=_parse_grid(args.grid),
            selected=_parse_select(args.select, args.tokens),
            concept_centers=_parse_centers(args.centers),
            steps=args.steps,
            seed=args.seed,
            n_maps=args.maps,
            bias_weight=args.bias,
            bump_radius=args.radius,
        )
        correction = (
            CorrectionConfig(tau=args.tau, gamma=args.gamma, alpha=args.alpha)
            if args.correct
            else None
        )
        suppression = (
            SuppressionConfig(
                kernel_size=args.kernel, sigma=args.sigma, beta=args.beta,
                renormalize=args.renormalize,
            )
            if args.ctnms
            else None
        )
    run_simulation(spec, correction=correction, suppression=suppression, out_dir=args.out)
    return 0


def _cmd_render(args) -> int:
    tensor = read_tensor(args.attention)
    if tensor.ndim == 2:
        plane = tensor
    elif tensor.ndim == 4:
        if args.token is None:
            raise ValueError("rank-4 tensors need --token to pick a channel")
        m, _, _, t = tensor.shape
        if not 0 <= args.map < m:
            raise ValueError(f"--map {args.map} out of range for {m} maps")
        if not 0 <= args.token < t:
            raise ValueError(f"--token {args.token} out of range for {t} tokens")
        plane = tensor[args.map, :, :, args.token]
    else:
        raise ValueError(f"cannot render rank-{tensor.ndim} tensor; expected rank 2 or 4")
    _write_or_clean(lambda: render_heatmap(np.asarray(plane), args.out), args.out)
    return 0


_COMMANDS = {
    "correct": _cmd_correct,
    "suppress-dominant": _cmd_suppress_dominant,
    "ctnms": _cmd_ctnms,
    "diagnose": _cmd_diagnose,
    "simulate": _cmd_simulate,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return _COMMANDS[args.command](args)


def run() -> None:
    try:
        code = main()
    except (TensorFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 2
    sys.exit(code)


if __name__ == "__main__":
    run()
