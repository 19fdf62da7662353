"""Command line front end: export | generate | fig5.

Exit codes follow the core convention: 0 success, 1 bad input or
validation failure, 2 I/O trouble.
"""

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import encoder as enc
from .corecli import CoreCliError
from .generate import (CorrectionSettings, SuppressionSettings,
                       generate_with_corrections)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(f"{message}\n{self.format_usage()}")


def _split_words(text):
    words = [w.strip() for w in text.split(",") if w.strip()]
    if not words:
        raise ValueError("expected a comma separated word list")
    return words


def build_parser():
    parser = _Parser(prog="crosstok-adapter",
                     description="Bridge a pretrained text encoder to the crosstok tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a prompt and write a tensor file")
    p.add_argument("--prompt", required=True)
    p.add_argument("--model", required=True, help="text encoder directory or hub id")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--concepts", help="comma separated words to mark selected")
    p.add_argument("--max-length", type=int, default=None)

    p = sub.add_parser("fig5", help="null-token geometry profile over a prompt corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, type=Path,
                   help="text file, one 'prompt | first | second' per line")
    p.add_argument("--out", type=Path, help="write the JSON report here instead of stdout")
    p.add_argument("--binary", default="crosstok")

    p = sub.add_parser("generate", help="run a diffusion pipeline with corrections")
    p.add_argument("--prompt", required=True)
    p.add_argument("--concepts", required=True, help="comma separated concept words")
    p.add_argument("--pipeline", required=True, help="diffusion pipeline directory")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--no-correct", action="store_true")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--gamma", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--preserve-norm", action="store_true")
    p.add_argument("--strength", type=float, default=0.5)
    p.add_argument("--no-suppress", action="store_true")
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--renormalize", dest="renormalize", action="store_true",
                   default=True)
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--from-step", type=int, default=0)
    p.add_argument("--until-step", type=int, default=None)
    p.add_argument("--binary", default="crosstok")
    return parser


def _cmd_export(args):
    concepts = _split_words(args.concepts) if args.concepts else ()
    enc.export_text_embeddings(args.prompt, args.out, model_dir=args.model,
                               concepts=concepts, max_length=args.max_length)
    print(str(args.out))


def _cmd_fig5(args):
    lines = [ln for ln in args.corpus.read_text().splitlines() if ln.strip()]
    entries = [corpus_mod.parse_corpus_line(ln) for ln in lines]
    report = corpus_mod.corpus_profile(entries, model_dir=args.model,
                                       binary=args.binary)
    text = json.dumps(report, indent=2)
    if args.out:
        args.out.write_text(text + "\n")
        print(str(args.out))
    else:
        print(text)


def _cmd_generate(args):
    correction = None if args.no_correct else CorrectionSettings(
        tau=args.tau, gamma=args.gamma, alpha=args.alpha,
        preserve_norm=args.preserve_norm, strength=args.strength)
    suppression = None if args.no_suppress else SuppressionSettings(
        kernel_size=args.kernel, sigma=args.sigma, beta=args.beta,
        renormalize=args.renormalize, resolution=args.resolution,
        from_step=args.from_step, until_step=args.until_step)
    paths = generate_with_corrections(
        args.prompt, _split_words(args.concepts), args.pipeline, args.out,
        correction=correction, suppression=suppression, seed=args.seed,
        steps=args.steps, guidance_scale=args.guidance, binary=args.binary)
    print(str(paths["image"]))


def main(argv=None):
    args = build_parser().parse_args(argv)
    {"export": _cmd_export, "fig5": _cmd_fig5,
     "generate": _cmd_generate}[args.command](args)
    return 0


def run():
    try:
        sys.exit(main())
    except CoreCliError as err:
        print(f"error: {err}", file=sys.stderr)
        sys.exit(err.returncode if err.returncode in (1, 2) else 1)
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        sys.exit(1)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    run()
