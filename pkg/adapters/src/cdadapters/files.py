"""Provider exchange file writers/readers and the shared crop rule.

Formats mirror the consuming pipeline byte-for-byte conventions:
``.dfm`` (magic DFM1, u32-LE C/H/W, f32-LE channel-major payload),
``.masks.json`` (row-major zeros-first RLE), ``.emb.json``, and
``.prompts.json``. The crop rule must stay pixel-identical to the pipeline's
region cropping: bounding box padded by max(4, round(fraction * longest
side)) per side, clamped to the frame.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np


class AdapterError(Exception):
    pass


def rle_encode(grid: np.ndarray) -> list[int]:
    """Row-major RLE, first run counts zeros (possibly zero)."""
    flat = (np.asarray(grid).ravel() != 0).astype(np.int8)
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: list[int], height: int, width: int) -> np.ndarray:
    if sum(runs) != height * width:
        raise AdapterError(f"run-sum {sum(runs)} != H*W {height * width}")
    values = np.zeros(len(runs), dtype=np.uint8)
    values[1::2] = 1
    return np.repeat(values, runs).reshape(height, width)


def mask_bbox(grid: np.ndarray) -> tuple[int, int, int, int]:
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        raise AdapterError("empty mask has no bounding box")
    return int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1


def padded_crop_box(
    grid: np.ndarray, frame: tuple[int, int], pad_fraction: float
) -> tuple[int, int, int, int]:
    """Crop box for a mask: bbox + max(4, round(fraction * longest side))."""
    r0, c0, r1, c1 = mask_bbox(grid)
    side = max(r1 - r0, c1 - c0)
    pad = max(4, int(math.floor(pad_fraction * side + 0.5)))
    h, w = frame
    return max(0, r0 - pad), max(0, c0 - pad), min(h, r1 + pad), min(w, c1 + pad)


def write_masks_manifest(path: str | Path, height: int, width: int, rles: list[list[int]]) -> None:
    doc = {
        "height": height,
        "width": width,
        "instances": [{"id": i, "rle": rle} for i, rle in enumerate(rles)],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_masks_manifest(path: str | Path) -> tuple[int, int, list[list[int]]]:
    doc = json.loads(Path(path).read_text())
    try:
        h, w = int(doc["height"]), int(doc["width"])
        instances = sorted(doc["instances"], key=lambda inst: inst["id"])
        return h, w, [inst["rle"] for inst in instances]
    except (KeyError, TypeError) as exc:
        raise AdapterError(f"{path}: malformed mask manifest ({exc})") from exc


def write_dfm(path: str | Path, tensor: np.ndarray) -> None:
    tensor = np.asarray(tensor)
    if tensor.ndim != 3:
        raise AdapterError(f"feature tensor must be CxHxW, got {tensor.shape}")
    with open(path, "wb") as fh:
        fh.write(b"DFM1")
        fh.write(struct.pack("<III", *tensor.shape))
        fh.write(tensor.astype("<f4").tobytes(order="C"))


def write_embedding_manifest(path: str | Path, dim: int, entries: dict[str, np.ndarray]) -> None:
    doc = {
        "dim": dim,
        "entries": {k: [float(np.float32(x)) for x in v] for k, v in entries.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_prompts(path: str | Path) -> tuple[str, str]:
    doc = json.loads(Path(path).read_text())
    try:
        return doc["target"], doc["background"]
    except KeyError as exc:
        raise AdapterError(f"{path}: prompts file needs 'target' and 'background'") from exc


def read_image(path: str | Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
