"""Report emission: machine JSON, human fixed-width table, delimited CSV,
and a matplotlib summary figure rendered alongside them."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluation import DatasetReport, Metrics

_COLUMNS = ("Prec.", "Rec.", "F1", "IoU")


def _row_values(m: Metrics) -> tuple[float, float, float, float]:
    return (m.precision * 100, m.recall * 100, m.f1 * 100, m.iou * 100)


def report_to_doc(report: DatasetReport) -> dict:
    doc: dict = {"pairs": [], "aggregate": {}, "failures": report.failures}
    for pair in report.pairs:
        entry: dict = {"id": pair.pair_id}
        if pair.error is not None:
            entry["error"] = pair.error
        else:
            entry["counts"] = {
                "tp": pair.counts.tp,
                "fp": pair.counts.fp,
                "fn": pair.counts.fn,
                "tn": pair.counts.tn,
            }
            entry["metrics"] = {
                "precision": pair.scores.precision,
                "recall": pair.scores.recall,
                "f1": pair.scores.f1,
                "iou": pair.scores.iou,
            }
        doc["pairs"].append(entry)
    for name, agg in (("micro", report.micro), ("macro", report.macro)):
        if agg is not None:
            doc["aggregate"][name] = {
                "precision": agg.precision,
                "recall": agg.recall,
                "f1": agg.f1,
                "iou": agg.iou,
            }
    return doc


def format_table(report: DatasetReport) -> str:
    """Fixed-width table, metrics x100 to two decimals."""
    width = max([len("aggregate (micro)")] + [len(p.pair_id) for p in report.pairs]) + 2
    lines = [
        f"{'pair':<{width}}" + "".join(f"{c:>9}" for c in _COLUMNS),
        "-" * (width + 9 * len(_COLUMNS)),
    ]
    for pair in report.pairs:
        if pair.error is not None:
            lines.append(f"{pair.pair_id:<{width}}" + f"{'FAILED':>9}" + f"  ({pair.error})")
        else:
            vals = _row_values(pair.scores)
            lines.append(
                f"{pair.pair_id:<{width}}" + "".join(f"{v:>9.2f}" for v in vals)
            )
    lines.append("-" * (width + 9 * len(_COLUMNS)))
    for name, agg in (("aggregate (micro)", report.micro), ("aggregate (macro)", report.macro)):
        if agg is not None:
            vals = _row_values(agg)
            lines.append(f"{name:<{width}}" + "".join(f"{v:>9.2f}" for v in vals))
    if report.failures:
        lines.append(f"failed pairs: {report.failures}")
    return "\n".join(lines) + "\n"


def format_csv(report: DatasetReport) -> str:
    lines = ["pair,precision,recall,f1,iou,status"]
    for pair in report.pairs:
        if pair.error is not None:
            lines.append(f"{pair.pair_id},,,,,failed")
        else:
            v = _row_values(pair.scores)
            lines.append(
                f"{pair.pair_id},{v[0]:.2f},{v[1]:.2f},{v[2]:.2f},{v[3]:.2f},ok"
            )
    for name, agg in (("micro", report.micro), ("macro", report.macro)):
        if agg is not None:
            v = _row_values(agg)
            lines.append(f"{name},{v[0]:.2f},{v[1]:.2f},{v[2]:.2f},{v[3]:.2f},aggregate")
    return "\n".join(lines) + "\n"


def render_figure(report: DatasetReport, path: str | Path) -> None:
    """Per-pair metric bars with aggregate reference lines."""
    scored = [p for p in report.pairs if p.scores is not None]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(scored) + 3), 4.0))
    if scored:
        idx = range(len(scored))
        bar_w = 0.2
        for offset, (label, key) in enumerate(
            [("Prec.", "precision"), ("Rec.", "recall"), ("F1", "f1"), ("IoU", "iou")]
        ):
            values = [getattr(p.scores, key) * 100 for p in scored]
            ax.bar(
                [i + (offset - 1.5) * bar_w for i in idx],
                values,
                width=bar_w,
                label=label,
            )
        ax.set_xticks(list(idx))
        ax.set_xticklabels([p.pair_id for p in scored], rotation=30, ha="right")
        if report.micro is not None:
            ax.axhline(report.micro.f1 * 100, color="gray", linestyle="--", linewidth=1)
    ax.set_ylabel("score x100 (changed class)")
    ax.set_ylim(0, 105)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(f"dataset evaluation ({len(scored)} scored, {report.failures} failed)")
    fig.tight_layout()
    # suppress the Software text chunk so identical runs emit identical bytes
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def write_report(report: DatasetReport, out_dir: str | Path) -> dict[str, str]:
    """Write report.json / report.txt / report.csv / report.png; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": str(out / "report.json"),
        "txt": str(out / "report.txt"),
        "csv": str(out / "report.csv"),
        "png": str(out / "report.png"),
    }
    (out / "report.json").write_text(
        json.dumps(report_to_doc(report), sort_keys=True, indent=2) + "\n"
    )
    (out / "report.txt").write_text(format_table(report))
    (out / "report.csv").write_text(format_csv(report))
    render_figure(report, out / "report.png")
    return paths
