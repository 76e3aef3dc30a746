"""Changed-class metrics and dataset-manifest batch evaluation.

Precision, recall, F1, and IoU are computed on change pixels only. The
empty-vs-empty convention is IoU = 1 (perfect agreement) with P = R = F1 = 0;
every zero denominator otherwise scores 0. Dataset aggregation is reported
both micro (summed confusion counts) and macro (mean of per-pair metrics)
because neither convention is canonical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats, pipeline
from .errors import AdaptcdError, DimensionMismatchError, FormatError
from .imaging import BinaryMask, rle_decode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    iou: float


@dataclass(frozen=True)
class ManifestEntry:
    pair_id: str
    image_a: str
    image_b: str
    ground_truth: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    prompts_path: str | None = None


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Pixel-wise confusion counts; 1 = changed."""
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"pred {pred.shape} vs gt {gt.shape}")
    p = rle_decode(pred).astype(bool)
    g = rle_decode(gt).astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp, fp, fn, tn)


def metrics(counts: ConfusionCounts) -> Metrics:
    """Changed-class precision/recall/F1/IoU from confusion counts."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    if tp + fp + fn > 0:
        iou = tp / (tp + fp + fn)
    else:
        iou = 1.0  # both prediction and truth empty: perfect agreement
    return Metrics(precision=precision, recall=recall, f1=f1, iou=iou)


def metrics_from_pr(precision: float, recall: float) -> Metrics:
    """Metrics reconstructed from precision/recall alone.

    F1 is the harmonic mean; IoU follows from the exact identity
    IoU = F1 / (2 - F1). Inputs and outputs are fractions in [0, 1].
    """
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    iou = f1 / (2.0 - f1) if f1 < 2.0 else 1.0
    return Metrics(precision=precision, recall=recall, f1=f1, iou=iou)


def load_manifest(path: str | Path) -> DatasetManifest:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(doc, dict):
        pairs = doc.get("pairs")
        prompts = doc.get("prompts")
    else:
        pairs = doc
        prompts = None
    if not isinstance(pairs, list) or not pairs:
        raise FormatError(f"{path}: manifest must list at least one pair")
    base = Path(path).parent
    entries = []
    for item in pairs:
        for key in ("id", "image_a", "image_b", "ground_truth"):
            if key not in item:
                raise FormatError(f"{path}: pair entry missing '{key}'")
        entries.append(
            ManifestEntry(
                pair_id=str(item["id"]),
                image_a=str(base / item["image_a"]),
                image_b=str(base / item["image_b"]),
                ground_truth=str(base / item["ground_truth"]),
            )
        )
    prompts_path = str(base / prompts) if prompts else None
    return DatasetManifest(entries=tuple(entries), prompts_path=prompts_path)


def load_ground_truth(path: str | Path) -> BinaryMask:
    """Ground truth as grayscale PNG (nonzero = changed) or a single-instance
    mask manifest."""
    text = str(path)
    if text.endswith(".masks.json") or text.endswith(".json"):
        masks = formats.read_masks_manifest(path)
        if len(masks) != 1:
            raise FormatError(f"{path}: ground-truth manifest must hold one instance")
        return masks.masks[0]
    return formats.read_mask_png(path)


@dataclass
class PairResult:
    pair_id: str
    counts: ConfusionCounts | None
    scores: Metrics | None
    error: str | None


@dataclass
class DatasetReport:
    pairs: list[PairResult]
    micro: Metrics | None
    macro: Metrics | None
    failures: int


def evaluate_dataset(
    manifest: DatasetManifest, config: pipeline.PipelineConfig
) -> DatasetReport:
    """Run the pipeline over every manifest pair and score against ground truth.

    Per-pair failures are recorded and the run continues; aggregates cover
    the scored pairs only.
    """
    results: list[PairResult] = []
    for entry in manifest.entries:
        try:
            image_a = formats.read_image_png(entry.image_a)
            image_b = formats.read_image_png(entry.image_b)
            gt = load_ground_truth(entry.ground_truth)
            artifacts = pipeline.run(image_a, image_b, config)
            counts = confusion(artifacts.change.mask, gt)
            results.append(
                PairResult(entry.pair_id, counts, metrics(counts), error=None)
            )
        except (AdaptcdError, OSError) as exc:
            logger.warning("pair %s failed: %s", entry.pair_id, exc)
            results.append(PairResult(entry.pair_id, None, None, error=str(exc)))
    scored = [r for r in results if r.counts is not None]
    micro = macro = None
    if scored:
        total = scored[0].counts
        for r in scored[1:]:
            total = total + r.counts
        micro = metrics(total)
        macro = Metrics(
            precision=float(np.mean([r.scores.precision for r in scored])),
            recall=float(np.mean([r.scores.recall for r in scored])),
            f1=float(np.mean([r.scores.f1 for r in scored])),
            iou=float(np.mean([r.scores.iou for r in scored])),
        )
    return DatasetReport(
        pairs=results,
        micro=micro,
        macro=macro,
        failures=len(results) - len(scored),
    )
