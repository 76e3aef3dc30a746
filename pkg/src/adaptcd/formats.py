"""Exchange file formats shared by providers, the CLI, and external tools.

- ``.dfm``       dense feature tensor: ASCII magic ``DFM1``, three u32 LE
                 (C, H, W), then C*H*W f32 LE values in channel-major order.
- ``.masks.json``  instance mask manifest with the row-major zeros-first RLE.
- ``.emb.json``    embedding manifest keyed ``mask:<id>`` / ``text:<string>``.
- ``.prompts.json`` mutually exclusive target/background prototype strings.

Readers validate every declared invariant and fail loudly, naming the first
violation; writers emit canonical, byte-reproducible documents.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .imaging import BinaryMask, DenseFeatureMap, MaskSet

DFM_MAGIC = b"DFM1"
_DFM_HEADER = struct.Struct("<III")


def write_dfm(path: str | Path, fmap: DenseFeatureMap) -> None:
    payload = fmap.data.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(DFM_MAGIC)
        fh.write(_DFM_HEADER.pack(fmap.channels, fmap.height, fmap.width))
        fh.write(payload)


def read_dfm(path: str | Path) -> DenseFeatureMap:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != DFM_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {DFM_MAGIC!r}")
    if len(blob) < 4 + _DFM_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    c, h, w = _DFM_HEADER.unpack_from(blob, 4)
    if c < 1 or h < 1 or w < 1:
        raise FormatError(f"{path}: dims must be positive, got C={c} H={h} W={w}")
    expected = 4 + _DFM_HEADER.size + 4 * c * h * w
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length mismatch, expected {expected} bytes got {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=4 + _DFM_HEADER.size)
    arr = values.reshape(c, h, w).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite feature values")
    return DenseFeatureMap(arr)


def _validate_runs(runs: list, pixel_count: int, label: str) -> np.ndarray:
    if not isinstance(runs, list) or not runs:
        raise FormatError(f"{label}: rle must be a nonempty list")
    arr = np.asarray(runs)
    if arr.dtype.kind not in "iu":
        raise FormatError(f"{label}: rle entries must be integers")
    if arr.min() < 0:
        raise FormatError(f"{label}: negative run-length")
    if np.any(arr[1:] == 0):
        raise FormatError(f"{label}: zero-length run after the leading position")
    if int(arr.sum()) != pixel_count:
        raise FormatError(
            f"{label}: run-sum {int(arr.sum())} != H*W {pixel_count}"
        )
    return arr.astype(np.int64)


def write_masks_manifest(path: str | Path, masks: MaskSet) -> None:
    if len(masks) == 0:
        raise FormatError("mask manifest requires at least one instance")
    h, w = masks.masks[0].shape
    doc = {
        "height": h,
        "width": w,
        "instances": [
            {"id": i, "rle": [int(r) for r in m.runs]} for i, m in enumerate(masks)
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_masks_manifest(path: str | Path, source: str = "file") -> MaskSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("height", "width", "instances"):
        if key not in doc:
            raise FormatError(f"{path}: missing key '{key}'")
    h, w = doc["height"], doc["width"]
    if not (isinstance(h, int) and isinstance(w, int) and h > 0 and w > 0):
        raise FormatError(f"{path}: height/width must be positive integers")
    instances = doc["instances"]
    if not isinstance(instances, list) or not instances:
        raise FormatError(f"{path}: instances must be a nonempty list")
    ids = [inst.get("id") for inst in instances]
    if sorted(ids) != list(range(len(instances))):
        raise FormatError(f"{path}: instance ids must be dense 0..N-1, got {ids}")
    masks: list[BinaryMask | None] = [None] * len(instances)
    for inst in instances:
        runs = _validate_runs(inst.get("rle"), h * w, f"{path}: instance id {inst['id']}")
        masks[inst["id"]] = BinaryMask(h, w, runs)
    return MaskSet(masks=tuple(masks), sources=(source,) * len(masks))


def write_embedding_manifest(path: str | Path, dim: int, entries: dict[str, np.ndarray]) -> None:
    doc = {
        "dim": dim,
        "entries": {
            key: [float(np.float32(x)) for x in vec] for key, vec in entries.items()
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_embedding_manifest(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if "dim" not in doc or "entries" not in doc:
        raise FormatError(f"{path}: missing key 'dim' or 'entries'")
    dim = doc["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise FormatError(f"{path}: dim must be a positive integer, got {dim!r}")
    entries = {}
    if not isinstance(doc["entries"], dict):
        raise FormatError(f"{path}: entries must be an object")
    for key, vec in doc["entries"].items():
        if not isinstance(vec, list) or len(vec) != dim:
            raise FormatError(
                f"{path}: entry '{key}' length {len(vec) if isinstance(vec, list) else '?'} != dim {dim}"
            )
        arr = np.asarray(vec, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: entry '{key}' has non-finite components")
        entries[key] = arr.astype(np.float32).astype(np.float64)
    return dim, entries


def write_image_png(path: str | Path, image) -> None:
    from PIL import Image as PilImage

    PilImage.fromarray(np.asarray(image.data), mode="RGB").save(path, format="PNG")


def read_image_png(path: str | Path):
    from PIL import Image as PilImage

    from .imaging import Image

    with PilImage.open(path) as img:
        return Image(np.asarray(img.convert("RGB"), dtype=np.uint8))


def write_mask_png(path: str | Path, mask: BinaryMask) -> None:
    from PIL import Image as PilImage

    from .imaging import rle_decode

    grid = rle_decode(mask) * np.uint8(255)
    PilImage.fromarray(grid, mode="L").save(path, format="PNG")


def read_mask_png(path: str | Path) -> BinaryMask:
    from PIL import Image as PilImage

    from .imaging import rle_encode

    with PilImage.open(path) as img:
        grid = np.asarray(img.convert("L"))
    return rle_encode(grid > 0)


def write_prompts(path: str | Path, target: str, background: str) -> None:
    doc = {"target": target, "background": background}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_prompts(path: str | Path) -> tuple[str, str]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("target", "background"):
        if key not in doc or not isinstance(doc[key], str) or not doc[key]:
            raise FormatError(f"{path}: missing or empty '{key}' prompt")
    if doc["target"] == doc["background"]:
        raise FormatError(f"{path}: target and background prompts must differ")
    return doc["target"], doc["background"]
