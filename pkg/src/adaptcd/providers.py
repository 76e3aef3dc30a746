"""Pluggable stand-ins for the three foundation-model roles.

Each role (instance segmentation, dense features, region/text embeddings)
is served by one of three provider kinds:

- ``file``        read a pre-exported exchange file verbatim;
- synthetic       a deterministic closed-form stand-in (grid tiles, blurred
                  color channels plus a gradient channel, mean-color vectors);
- ``subprocess``  shell out to an external tool speaking the file protocol.

Synthetic providers are pure functions of (image bytes, spec): sums run in
fixed row-major order over exact integer accumulators wherever possible, so
two runs produce bit-identical outputs.
"""

from __future__ import annotations

import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .errors import (
    ConfigError,
    CorruptFeatureError,
    DimensionMismatchError,
    FormatError,
    MissingPrototypeError,
    ProviderError,
)
from .imaging import BinaryMask, DenseFeatureMap, Image, MaskSet, sobel_magnitude

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class SegmentationProviderSpec:
    kind: str  # file | synthetic-grid | subprocess
    manifest_path: str | None = None
    tile_size: int = 32
    command: tuple[str, ...] = ()
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("file", "synthetic-grid", "subprocess"):
            raise ConfigError(f"unknown segmentation provider kind '{self.kind}'")
        if self.kind == "file" and not self.manifest_path:
            raise ConfigError("file segmentation provider needs manifest_path")
        if self.kind == "synthetic-grid" and self.tile_size < 4:
            raise ConfigError(f"tile size must be >= 4, got {self.tile_size}")
        if self.kind == "subprocess" and (not self.command or self.timeout <= 0):
            raise ConfigError("subprocess provider needs a command and timeout > 0")


@dataclass(frozen=True)
class FeatureProviderSpec:
    kind: str  # file | synthetic | subprocess
    feature_path: str | None = None
    blur_radius: int = 2
    command: tuple[str, ...] = ()
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("file", "synthetic", "subprocess"):
            raise ConfigError(f"unknown feature provider kind '{self.kind}'")
        if self.kind == "file" and not self.feature_path:
            raise ConfigError("file feature provider needs feature_path")
        if self.kind == "synthetic" and self.blur_radius < 0:
            raise ConfigError("blur radius must be >= 0")
        if self.kind == "subprocess" and (not self.command or self.timeout <= 0):
            raise ConfigError("subprocess provider needs a command and timeout > 0")


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    kind: str  # file | synthetic-color | subprocess
    manifest_path: str | None = None
    anchors: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    dim: int = 3
    command: tuple[str, ...] = ()
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("file", "synthetic-color", "subprocess"):
            raise ConfigError(f"unknown embedding provider kind '{self.kind}'")
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")
        if self.kind == "file" and not self.manifest_path:
            raise ConfigError("file embedding provider needs manifest_path")
        if self.kind == "synthetic-color":
            if self.dim != 3:
                raise ConfigError("synthetic-color embeddings are 3-dimensional")
            for name, rgb in self.anchors.items():
                if len(rgb) != 3 or any(not (0.0 <= x <= 1.0) for x in rgb):
                    raise ConfigError(
                        f"anchor '{name}' components must lie in [0, 1], got {rgb}"
                    )
        if self.kind == "subprocess" and (not self.command or self.timeout <= 0):
            raise ConfigError("subprocess provider needs a command and timeout > 0")


@dataclass(frozen=True)
class UnitVector:
    """L2-normalized embedding, or an explicitly flagged zero vector."""

    components: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.components, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "components", arr)


def _normalize(vec: np.ndarray) -> UnitVector:
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return UnitVector(np.zeros_like(vec), degenerate=True)
    return UnitVector(vec / norm)


def _run_tool(
    command: tuple[str, ...], args: list[str], timeout: float, out_path: Path
) -> None:
    try:
        proc = subprocess.run(
            list(command) + args,
            capture_output=True,
            timeout=timeout,
            text=True,
        )
    except subprocess.TimeoutExpired as exc:
        raise ProviderError(f"provider command timed out after {timeout}s: {command}") from exc
    if proc.returncode != 0:
        raise ProviderError(
            f"provider command exited {proc.returncode}: {command}\n{proc.stderr.strip()}"
        )
    if not out_path.exists():
        raise ProviderError(f"provider command wrote no output file {out_path}")


def _with_temp_image(image: Image):
    tmp = tempfile.TemporaryDirectory(prefix="adaptcd-provider-")
    image_path = Path(tmp.name) / "image.png"
    formats.write_image_png(image_path, image)
    return tmp, image_path


def segment(image: Image, spec: SegmentationProviderSpec) -> MaskSet:
    """Class-agnostic instance masks for one image."""
    if spec.kind == "synthetic-grid":
        return _grid_masks(image.height, image.width, spec.tile_size)
    if spec.kind == "file":
        masks = formats.read_masks_manifest(spec.manifest_path)
        if masks.masks and masks.masks[0].shape != image.shape:
            raise DimensionMismatchError(
                f"manifest dims {masks.masks[0].shape} != image dims {image.shape}"
            )
        return masks
    tmp, image_path = _with_temp_image(image)
    with tmp:
        out_path = Path(tmp.name) / "out.masks.json"
        _run_tool(
            spec.command,
            ["--task", "segment", "--image", str(image_path), "--out", str(out_path)],
            spec.timeout,
            out_path,
        )
        masks = formats.read_masks_manifest(out_path, source="subprocess")
    if masks.masks and masks.masks[0].shape != image.shape:
        raise DimensionMismatchError(
            f"subprocess mask dims {masks.masks[0].shape} != image dims {image.shape}"
        )
    return masks


def _rect_runs(h: int, w: int, r0: int, c0: int, r1: int, c1: int) -> np.ndarray:
    """Canonical RLE of an axis-aligned filled rectangle, built analytically."""
    pairs: list[list[int]] = []

    def push(value: int, length: int) -> None:
        if length == 0:
            return
        if pairs and pairs[-1][0] == value:
            pairs[-1][1] += length
        else:
            pairs.append([value, length])

    push(0, r0 * w + c0)
    for row in range(r0, r1):
        push(1, c1 - c0)
        if row < r1 - 1:
            push(0, w - (c1 - c0))
    push(0, (w - c1) + (h - r1) * w)
    runs = [0] if (not pairs or pairs[0][0] == 1) else []
    runs.extend(length for _, length in pairs)
    return np.asarray(runs, dtype=np.int64)


def _grid_masks(h: int, w: int, tile: int) -> MaskSet:
    masks = []
    for r0 in range(0, h, tile):
        for c0 in range(0, w, tile):
            runs = _rect_runs(h, w, r0, c0, min(r0 + tile, h), min(c0 + tile, w))
            masks.append(BinaryMask(h, w, runs))
    return MaskSet(masks=tuple(masks), sources=("synthetic",) * len(masks))


def box_blur_channel(channel: np.ndarray, radius: int) -> np.ndarray:
    """Mean filter over a (2r+1)^2 window with replicate padding.

    The window sums are exact integer arithmetic, so the result is
    bit-reproducible regardless of summation strategy.
    """
    if radius == 0:
        return channel.astype(np.float64)
    padded = np.pad(channel.astype(np.int64), radius, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    k = 2 * radius + 1
    h, w = channel.shape
    sums = (
        integral[k : k + h, k : k + w]
        - integral[:h, k : k + w]
        - integral[k : k + h, :w]
        + integral[:h, :w]
    )
    return sums / float(k * k)


def synthetic_features(image: Image, blur_radius: int) -> DenseFeatureMap:
    """Four channels: box-blurred RGB scaled to [0, 1], plus the gradient
    magnitude of the luminance."""
    data = image.data
    channels = [box_blur_channel(data[:, :, c], blur_radius) / 255.0 for c in range(3)]
    luma = (
        LUMA_WEIGHTS[0] * data[:, :, 0]
        + LUMA_WEIGHTS[1] * data[:, :, 1]
        + LUMA_WEIGHTS[2] * data[:, :, 2]
    ) / 255.0
    channels.append(sobel_magnitude(luma))
    return DenseFeatureMap(np.stack(channels, axis=0))


def _read_feature_file(path: str | Path) -> DenseFeatureMap:
    try:
        return formats.read_dfm(path)
    except FormatError as exc:
        if "non-finite" in str(exc):
            raise CorruptFeatureError(str(exc)) from exc
        raise


def extract_features(image: Image, spec: FeatureProviderSpec) -> DenseFeatureMap:
    """Dense per-pixel features for one image (dims may differ for file kind;
    the pipeline upsamples)."""
    if spec.kind == "synthetic":
        return synthetic_features(image, spec.blur_radius)
    if spec.kind == "file":
        return _read_feature_file(spec.feature_path)
    tmp, image_path = _with_temp_image(image)
    with tmp:
        out_path = Path(tmp.name) / "out.dfm"
        _run_tool(
            spec.command,
            ["--task", "features", "--image", str(image_path), "--out", str(out_path)],
            spec.timeout,
            out_path,
        )
        return _read_feature_file(out_path)


def mean_color_vector(crop: Image) -> UnitVector:
    """Normalized mean-RGB of a crop; degenerate when the mean is black."""
    sums = crop.data.reshape(-1, 3).astype(np.int64).sum(axis=0)
    mean = sums / (crop.height * crop.width) / 255.0
    return _normalize(mean)


def embed_region(crop: Image, spec: EmbeddingProviderSpec, key: int) -> UnitVector:
    """Embedding of one cropped region, addressed by mask id for file kind."""
    if spec.kind == "synthetic-color":
        return mean_color_vector(crop)
    if spec.kind == "file":
        dim, entries = formats.read_embedding_manifest(spec.manifest_path)
        name = f"mask:{key}"
        if name not in entries:
            raise ProviderError(f"{spec.manifest_path}: missing entry '{name}'")
        return _normalize_manifest_entry(entries[name])
    return _subprocess_embed(crop, spec, [])


def embed_text(prototype: str, spec: EmbeddingProviderSpec) -> UnitVector:
    """Embedding of one text prototype."""
    if not prototype:
        raise MissingPrototypeError("prototype string must be nonempty")
    if spec.kind == "synthetic-color":
        if prototype not in spec.anchors:
            raise MissingPrototypeError(
                f"prototype '{prototype}' has no color anchor"
            )
        return _normalize(np.asarray(spec.anchors[prototype], dtype=np.float64))
    if spec.kind == "file":
        dim, entries = formats.read_embedding_manifest(spec.manifest_path)
        name = f"text:{prototype}"
        if name not in entries:
            raise MissingPrototypeError(f"{spec.manifest_path}: missing entry '{name}'")
        return _normalize_manifest_entry(entries[name])
    tmp = tempfile.TemporaryDirectory(prefix="adaptcd-provider-")
    with tmp:
        out_path = Path(tmp.name) / "out.emb.json"
        _run_tool(
            spec.command,
            ["--task", "embed", "--text", prototype, "--out", str(out_path)],
            spec.timeout,
            out_path,
        )
        return _single_manifest_entry(out_path)


def _normalize_manifest_entry(vec: np.ndarray) -> UnitVector:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return UnitVector(vec, degenerate=True)
    if abs(norm - 1.0) > 1e-6:
        return _normalize(vec)
    return UnitVector(vec)


def _subprocess_embed(crop: Image, spec: EmbeddingProviderSpec, extra: list[str]) -> UnitVector:
    tmp, image_path = _with_temp_image(crop)
    with tmp:
        out_path = Path(tmp.name) / "out.emb.json"
        _run_tool(
            spec.command,
            ["--task", "embed", "--image", str(image_path), "--out", str(out_path)] + extra,
            spec.timeout,
            out_path,
        )
        return _single_manifest_entry(out_path)


def _single_manifest_entry(path: Path) -> UnitVector:
    dim, entries = formats.read_embedding_manifest(path)
    if len(entries) != 1:
        raise ProviderError(
            f"{path}: expected exactly one embedding entry, got {len(entries)}"
        )
    (vec,) = entries.values()
    return _normalize_manifest_entry(vec)
