"""Command line for the adapters, compatible with the pipeline's subprocess
provider protocol:

    cd-adapter --task <segment|features|embed> --image <path>
               [--crop r0,c0,r1,c1] [--text <string>] --out <path>

plus adapter-only flags: --stub (no checkpoint), --checkpoint, --model,
--device, --masks/--prompts (batch embedding), --crop-pad-fraction, and
repeatable --param key=value pass-through for mask generation.
"""

from __future__ import annotations

import argparse
import sys

from .export import AdapterJob, run_job
from .files import AdapterError


def _parse_crop(text: str) -> tuple[int, int, int, int]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("--crop wants r0,c0,r1,c1")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _parse_params(pairs: list[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for pair in pairs:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--param wants key=value, got '{pair}'")
        key, value = pair.split("=", 1)
        try:
            out[key] = int(value)
        except ValueError:
            out[key] = float(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cd-adapter", description=__doc__)
    parser.add_argument("--task", required=True, choices=["segment", "features", "embed"])
    parser.add_argument("--image")
    parser.add_argument("--crop", type=_parse_crop)
    parser.add_argument("--text")
    parser.add_argument("--out", required=True)
    parser.add_argument("--masks", help="mask manifest path(s), comma separated")
    parser.add_argument("--prompts", help="prompts file for batch embedding")
    parser.add_argument("--crop-pad-fraction", type=float, default=0.1)
    parser.add_argument("--stub", action="store_true", help="built-in test model, no checkpoint")
    parser.add_argument("--checkpoint")
    parser.add_argument("--model", default="sam-hq-vit_h")
    parser.add_argument("--device")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    job = AdapterJob(
        task=args.task,
        image_path=args.image,
        out_path=args.out,
        text=args.text,
        crop=args.crop,
        masks_paths=tuple(args.masks.split(",")) if args.masks else (),
        prompts_path=args.prompts,
        crop_pad_fraction=args.crop_pad_fraction,
        use_stub=args.stub,
        checkpoint=args.checkpoint,
        model_name=args.model,
        device=args.device,
        params=_parse_params(args.param),
    )
    try:
        run_job(job)
    except (AdapterError, OSError, ValueError) as exc:
        print(f"cd-adapter: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
