"""Command-line surface.

Subcommands: ``run`` (single pair), ``eval`` (dataset manifest), ``synth``
(fixture generation), ``inspect`` (provider-file validation). Exit codes:
0 success, 1 usage error, 2 runtime/pipeline error, 3 partial dataset
failure. ``ADAPTCD_LOG`` (error|warn|info|debug) controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats, pipeline, synth
from .errors import AdaptcdError, ConfigError, FormatError
from .evaluation import evaluate_dataset, load_manifest
from .providers import (
    EmbeddingProviderSpec,
    FeatureProviderSpec,
    SegmentationProviderSpec,
)
from .report import write_report
from .semantic import TextPrototypes

logger = logging.getLogger(__name__)

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("ADAPTCD_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adaptcd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="detect changes in one bi-temporal pair")
    p_run.add_argument("--image-a", required=True)
    p_run.add_argument("--image-b", required=True)
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--prompts", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--no-ara", action="store_true", help="disable radiometric alignment")
    p_run.add_argument("--no-act", action="store_true", help="use the fixed-percentile similarity cut")
    p_run.add_argument("--no-acf", action="store_true", help="skip confidence filtering")
    p_run.add_argument("--dump-intermediate", action="store_true")
    p_run.add_argument("--provider", help="seg=<kind>:<param>,feat=<kind>:<param>,emb=<kind>:<param>")

    p_eval = sub.add_parser("eval", help="evaluate a dataset manifest")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--provider")

    p_synth = sub.add_parser("synth", help="generate deterministic synthetic fixtures")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", required=True, type=int)
    p_synth.add_argument("--family", choices=["all", "e2e", "ablation"], default="all")
    p_synth.add_argument("--count", type=int, default=20, help="ablation fixture count")

    p_inspect = sub.add_parser("inspect", help="validate and describe a provider file")
    p_inspect.add_argument("path")
    return parser


def _parse_provider_flag(value: str, config: pipeline.PipelineConfig) -> pipeline.PipelineConfig:
    """Grammar: seg=<kind>:<param>,feat=<kind>:<param>,emb=<kind>:<param>.

    The parameter is kind-specific: grid tile size, blur radius, or a file
    path (paths containing commas need the JSON config instead).
    """
    updates: dict = {}
    for part in value.split(","):
        if "=" not in part:
            raise ConfigError(f"bad --provider entry '{part}'")
        role, spec_text = part.split("=", 1)
        kind, _, param = spec_text.partition(":")
        if role == "seg":
            if kind == "synthetic-grid":
                updates["segmentation"] = SegmentationProviderSpec(
                    kind=kind, tile_size=int(param) if param else 32
                )
            elif kind == "file":
                updates["segmentation"] = SegmentationProviderSpec(kind=kind, manifest_path=param)
            else:
                raise ConfigError(f"--provider seg kind '{kind}' needs the JSON config")
        elif role == "feat":
            if kind == "synthetic":
                updates["features"] = FeatureProviderSpec(
                    kind=kind, blur_radius=int(param) if param else 2
                )
            elif kind == "file":
                updates["features"] = FeatureProviderSpec(kind=kind, feature_path=param)
            else:
                raise ConfigError(f"--provider feat kind '{kind}' needs the JSON config")
        elif role == "emb":
            if kind == "file":
                updates["embeddings"] = EmbeddingProviderSpec(kind=kind, manifest_path=param)
            elif kind == "synthetic-color":
                anchors_doc = json.loads(Path(param).read_text())
                updates["embeddings"] = EmbeddingProviderSpec(
                    kind=kind, anchors={k: tuple(v) for k, v in anchors_doc.items()}
                )
            else:
                raise ConfigError(f"--provider emb kind '{kind}' needs the JSON config")
        else:
            raise ConfigError(f"unknown --provider role '{role}'")
    return replace(config, **updates)


def _cmd_run(args: argparse.Namespace) -> int:
    for path in (args.image_a, args.image_b, args.config, args.prompts):
        if not Path(path).is_file():
            print(f"error: no such file: {path}", file=sys.stderr)
            return 1
    try:
        config = pipeline.load_config(args.config)
        target, background = formats.read_prompts(args.prompts)
        config = replace(config, prototypes=TextPrototypes(target=target, background=background))
        if args.provider:
            config = _parse_provider_flag(args.provider, config)
        config = pipeline.with_ablations(
            config, no_ara=args.no_ara, no_act=args.no_act, no_acf=args.no_acf
        )
        image_a = formats.read_image_png(args.image_a)
        image_b = formats.read_image_png(args.image_b)
        artifacts = pipeline.run(image_a, image_b, config)
    except (AdaptcdError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_mask_png(out / "mask.png", artifacts.change.mask)
    mask_set_doc = {
        "height": artifacts.change.mask.height,
        "width": artifacts.change.mask.width,
        "instances": [{"id": 0, "rle": [int(r) for r in artifacts.change.mask.runs]}],
    }
    (out / "mask.masks.json").write_text(json.dumps(mask_set_doc, sort_keys=True, indent=2) + "\n")
    summary = {
        "stages": {
            "ara_enabled": config.ara_enabled,
            "act_enabled": config.act_enabled,
            "acf_enabled": config.acf_enabled,
        },
        "alignment": None
        if artifacts.aligned is None
        else {"alpha": artifacts.aligned.alpha, "delta_max": artifacts.aligned.delta_max},
        "mask_counts": {
            "phase_a": len(artifacts.masks_a),
            "phase_b": len(artifacts.masks_b),
            "merged": len(artifacts.masks_all),
        },
        "thresholds": None
        if artifacts.thresholds is None
        else {
            "tau_global": artifacts.thresholds.tau_global,
            "tau_edge": artifacts.thresholds.tau_edge,
            "tau_final": artifacts.thresholds.tau_final,
            "edge_pixel_count": artifacts.thresholds.edge_pixel_count,
            "theta_threshold": artifacts.theta_threshold,
        },
        "fixed_similarity_cut": artifacts.fixed_cut,
        "candidate_ids": artifacts.candidates.ids(),
        "tau_conf": artifacts.tau_conf,
        "changed_pixels": artifacts.change.mask.area(),
        "region_stats": [
            {
                "label": s.label,
                "area": s.area,
                "mean_confidence": s.mean_confidence,
                "std_confidence": s.std_confidence,
                "cv": None if s.cv == float("inf") else s.cv,
                "reliable": s.reliable,
            }
            for s in artifacts.change.region_stats
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    for stage, seconds in artifacts.stage_seconds.items():
        logger.info("stage %s: %.3fs", stage, seconds)
    if args.dump_intermediate or config.dump_intermediate:
        pipeline.dump_artifacts(artifacts, out / "dump")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    if not Path(args.manifest).is_file() or not Path(args.config).is_file():
        print("error: manifest/config path missing", file=sys.stderr)
        return 1
    try:
        manifest = load_manifest(args.manifest)
        config = pipeline.load_config(args.config)
        if manifest.prompts_path:
            target, background = formats.read_prompts(manifest.prompts_path)
            config = replace(
                config, prototypes=TextPrototypes(target=target, background=background)
            )
        if args.provider:
            config = _parse_provider_flag(args.provider, config)
    except (AdaptcdError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, FormatError) else 2
    report = evaluate_dataset(manifest, config)
    write_report(report, args.out)
    print(Path(args.out, "report.txt").read_text(), end="")
    if report.failures and report.failures == len(report.pairs):
        return 2
    if report.failures:
        return 3
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: output dir not writable: {exc}", file=sys.stderr)
        return 2
    if args.family == "e2e":
        synth.generate_e2e_fixture(out / "e2e-single", args.seed, distractor=False)
        synth.generate_e2e_fixture(out / "e2e-distractor", args.seed, distractor=True)
    elif args.family == "ablation":
        for i in range(args.count):
            synth.generate_ablation_fixture(out / f"seed-{i:03d}", args.seed * 1000 + i)
    else:
        synth.generate_fixture_tree(out, args.seed, ablation_count=args.count)
    return 0


def _describe_dfm(path: Path) -> None:
    fmap = formats.read_dfm(path)
    print(f"dfm: C={fmap.channels} H={fmap.height} W={fmap.width}")
    print(f"value range: [{fmap.data.min():.6g}, {fmap.data.max():.6g}]")


def _describe_masks(path: Path) -> None:
    masks = formats.read_masks_manifest(path)
    h, w = masks.masks[0].shape
    areas = [m.area() for m in masks]
    print(f"masks: {len(masks)} instances, frame {h}x{w}")
    print(f"areas: min={min(areas)} max={max(areas)} total={sum(areas)}")


def _describe_embeddings(path: Path) -> None:
    dim, entries = formats.read_embedding_manifest(path)
    norms = [float(np.linalg.norm(v)) for v in entries.values()]
    print(f"embeddings: dim={dim}, {len(entries)} entries")
    if norms:
        print(f"norms: min={min(norms):.6f} max={max(norms):.6f}")
    mask_keys = sum(1 for k in entries if k.startswith("mask:"))
    text_keys = sum(1 for k in entries if k.startswith("text:"))
    print(f"keys: {mask_keys} mask, {text_keys} text")


def _cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.is_file():
        print(f"error: no such file: {path}", file=sys.stderr)
        return 2
    name = path.name
    try:
        if name.endswith(".dfm"):
            _describe_dfm(path)
        elif name.endswith(".masks.json"):
            _describe_masks(path)
        elif name.endswith(".emb.json"):
            _describe_embeddings(path)
        else:
            print(f"error: unrecognized provider file type: {name}", file=sys.stderr)
            return 2
    except (FormatError, AdaptcdError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    print("ok")
    return 0


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "run": _cmd_run,
        "eval": _cmd_eval,
        "synth": _cmd_synth,
        "inspect": _cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except AdaptcdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
