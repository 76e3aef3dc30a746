"""Ablation study over the noisy fixture family.

Runs the pipeline on every fixture under five configurations (full, each
single stage disabled, all disabled) and checks that the full pipeline's mean
F1 dominates every single-stage ablation, with the everything-off baseline
lowest. A report is emitted regardless of the outcome; failures are flagged,
not hidden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import formats, pipeline
from .evaluation import confusion, load_ground_truth, metrics

VARIANTS: dict[str, dict[str, bool]] = {
    "full": {},
    "no-ara": {"no_ara": True},
    "no-act": {"no_act": True},
    "no-acf": {"no_acf": True},
    "baseline": {"no_ara": True, "no_act": True, "no_acf": True},
}


@dataclass
class AblationReport:
    per_variant_f1: dict[str, list[float]]
    mean_f1: dict[str, float]
    ordering_ok: bool
    baseline_lowest: bool

    @property
    def passed(self) -> bool:
        return self.ordering_ok and self.baseline_lowest


def run_ablation_study(fixture_dirs: list[Path]) -> AblationReport:
    per_variant: dict[str, list[float]] = {name: [] for name in VARIANTS}
    for fixture in fixture_dirs:
        config = pipeline.load_config(fixture / "config.json")
        image_a = formats.read_image_png(fixture / "a.png")
        image_b = formats.read_image_png(fixture / "b.png")
        gt = load_ground_truth(fixture / "gt.png")
        for name, switches in VARIANTS.items():
            variant = pipeline.with_ablations(config, **switches)
            artifacts = pipeline.run(image_a, image_b, variant)
            scores = metrics(confusion(artifacts.change.mask, gt))
            per_variant[name].append(scores.f1)
    mean_f1 = {name: float(np.mean(values)) for name, values in per_variant.items()}
    singles = ("no-ara", "no-act", "no-acf")
    ordering_ok = all(mean_f1["full"] >= mean_f1[name] for name in singles)
    baseline_lowest = all(mean_f1["baseline"] <= mean_f1[name] for name in singles)
    return AblationReport(
        per_variant_f1=per_variant,
        mean_f1=mean_f1,
        ordering_ok=ordering_ok,
        baseline_lowest=baseline_lowest,
    )


def write_ablation_report(report: AblationReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "mean_f1": report.mean_f1,
        "per_variant_f1": report.per_variant_f1,
        "ordering_ok": report.ordering_ok,
        "baseline_lowest": report.baseline_lowest,
        "passed": report.passed,
    }
    (out / "ablation.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    lines = [f"{'variant':<12}{'mean F1 x100':>14}"]
    lines.append("-" * 26)
    for name in VARIANTS:
        lines.append(f"{name:<12}{report.mean_f1[name] * 100:>14.2f}")
    lines.append("-" * 26)
    lines.append(f"ordering_ok: {report.ordering_ok}")
    lines.append(f"baseline_lowest: {report.baseline_lowest}")
    if not report.passed:
        lines.append("ABLATION ORDERING FAILED")
    (out / "ablation.txt").write_text("\n".join(lines) + "\n")
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(VARIANTS)
    ax.bar(names, [report.mean_f1[n] * 100 for n in names], color="tab:blue")
    ax.set_ylabel("mean F1 x100")
    ax.set_ylim(0, 105)
    ax.set_title("stage-ablation ordering" + ("" if report.passed else " (FAILED)"))
    fig.tight_layout()
    fig.savefig(out / "ablation.png", dpi=110, metadata={"Software": None})
    plt.close(fig)
