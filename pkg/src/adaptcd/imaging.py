"""Core raster, mask, and feature-tensor types with the generic image operations
(morphology, gradients, resampling, connected components) used by every stage.

Masks are run-length encoded row-major, first run counting zeros (a run of 0
is allowed only at the start). All operations are pure functions; the wrapped
numpy buffers are frozen at construction so values can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatchError,
    EmptyRegionError,
    GridTooSmallError,
    MalformedMaskError,
)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Image:
    """H x W x 3 8-bit raster holding one temporal phase."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError(
                f"image must be HxWx3 with positive dims, got shape {arr.shape}"
            )
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.data.shape[0], self.data.shape[1])


@dataclass(frozen=True)
class BinaryMask:
    """RLE-backed binary mask.

    ``runs`` alternates zero-run/one-run lengths in row-major pixel order,
    starting with the count of leading zeros (which may itself be zero).
    """

    height: int
    width: int
    runs: np.ndarray

    def __post_init__(self) -> None:
        runs = np.ascontiguousarray(self.runs, dtype=np.int64)
        if self.height < 1 or self.width < 1:
            raise MalformedMaskError("mask dims must be positive")
        if runs.ndim != 1:
            raise MalformedMaskError("runs must be a flat sequence")
        if runs.size and runs.min() < 0:
            raise MalformedMaskError("run-lengths must be >= 0")
        if runs.size and np.any(runs[1:] == 0):
            raise MalformedMaskError(
                "zero-length run allowed only at the leading position"
            )
        if int(runs.sum()) != self.height * self.width:
            raise MalformedMaskError(
                f"run-sum {int(runs.sum())} != H*W {self.height * self.width}"
            )
        object.__setattr__(self, "runs", _freeze(runs))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def area(self) -> int:
        """Number of set pixels."""
        return int(self.runs[1::2].sum())


@dataclass(frozen=True)
class MaskSet:
    """Ordered list of same-size masks with dense ids 0..N-1 and a phase tag each."""

    masks: tuple[BinaryMask, ...]
    sources: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.masks) != len(self.sources):
            raise DimensionMismatchError("one source tag per mask required")
        shapes = {m.shape for m in self.masks}
        if len(shapes) > 1:
            raise DimensionMismatchError(f"masks disagree on dims: {shapes}")

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)


@dataclass(frozen=True)
class DenseFeatureMap:
    """C x H x W real-valued feature tensor, channel-major."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionMismatchError(
                f"feature map must be CxHxW with positive dims, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise DimensionMismatchError("feature map contains non-finite values")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.data.shape[1], self.data.shape[2])


@dataclass(frozen=True)
class BBox:
    """Half-open pixel box: rows [row0, row1), cols [col0, col1)."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self) -> None:
        if not (0 <= self.row0 < self.row1 and 0 <= self.col0 < self.col1):
            raise DimensionMismatchError(f"degenerate box {self}")

    @property
    def height(self) -> int:
        return self.row1 - self.row0

    @property
    def width(self) -> int:
        return self.col1 - self.col0


@dataclass
class Component:
    """One 8-connected foreground component of a labeled mask."""

    label: int
    area: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)


def rle_encode(grid: np.ndarray) -> BinaryMask:
    """Encode a dense binary grid into canonical row-major RLE."""
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise MalformedMaskError(f"grid must be 2-D with positive dims, got {grid.shape}")
    flat = (grid.ravel() != 0).astype(np.int8)
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges)
    if flat[0] == 1:
        runs = np.concatenate(([0], runs))
    return BinaryMask(grid.shape[0], grid.shape[1], runs)


def rle_decode(mask: BinaryMask) -> np.ndarray:
    """Decode to a dense uint8 grid of 0/1, exact inverse of :func:`rle_encode`."""
    values = np.zeros(mask.runs.size, dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, mask.runs)
    return flat.reshape(mask.height, mask.width)


def mask_pixel_indices(mask: BinaryMask) -> tuple[np.ndarray, np.ndarray]:
    """Row/col indices of set pixels in row-major order, straight from the runs."""
    runs = mask.runs
    starts = np.concatenate(([0], np.cumsum(runs)[:-1]))
    one_starts = starts[1::2]
    one_lens = runs[1::2]
    total = int(one_lens.sum())
    if total == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    # flat index of every set pixel: repeat each run start, add within-run offset
    offsets = np.arange(total) - np.repeat(np.cumsum(one_lens) - one_lens, one_lens)
    flat = np.repeat(one_starts, one_lens) + offsets
    return flat // mask.width, flat % mask.width


def mask_bbox(mask: BinaryMask) -> BBox:
    """Tightest axis-aligned box containing all set pixels."""
    rows, cols = mask_pixel_indices(mask)
    if rows.size == 0:
        raise EmptyRegionError("cannot take the bounding box of an empty mask")
    return BBox(int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1)


def dilate_3x3(mask: BinaryMask, iterations: int) -> BinaryMask:
    """Morphological dilation with the full 3x3 structuring element.

    Border pixels use clipped neighborhoods (no wraparound). ``iterations=0``
    returns the mask unchanged.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    grid = rle_decode(mask).astype(bool)
    for _ in range(iterations):
        grown = grid.copy()
        grown[:-1, :] |= grid[1:, :]
        grown[1:, :] |= grid[:-1, :]
        grown[:, :-1] |= grid[:, 1:]
        grown[:, 1:] |= grid[:, :-1]
        grown[:-1, :-1] |= grid[1:, 1:]
        grown[:-1, 1:] |= grid[1:, :-1]
        grown[1:, :-1] |= grid[:-1, 1:]
        grown[1:, 1:] |= grid[:-1, :-1]
        grid = grown
    return rle_encode(grid)


def sobel_magnitude(grid: np.ndarray) -> np.ndarray:
    """Gradient magnitude sqrt(Gx^2 + Gy^2) with 3x3 Sobel kernels.

    Borders use replicate padding. Requires at least a 3x3 input.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 3 or grid.shape[1] < 3:
        raise GridTooSmallError(f"need at least 3x3 for gradients, got {grid.shape}")
    padded = np.pad(grid, 1, mode="edge")
    h, w = grid.shape

    def window(dr: int, dc: int) -> np.ndarray:
        return padded[dr : dr + h, dc : dc + w]

    # difference of two identically-ordered sums: exactly zero on constants
    gx = (window(0, 2) + 2.0 * window(1, 2) + window(2, 2)) - (
        window(0, 0) + 2.0 * window(1, 0) + window(2, 0)
    )
    gy = (window(2, 0) + 2.0 * window(2, 1) + window(2, 2)) - (
        window(0, 0) + 2.0 * window(0, 1) + window(0, 2)
    )
    return np.sqrt(gx * gx + gy * gy)


def bilinear_upsample(fmap: DenseFeatureMap, target: tuple[int, int]) -> DenseFeatureMap:
    """Resample every channel to ``target`` (H, W) with half-pixel-center bilinear
    interpolation (align-corners off). Identity targets pass through bit-exactly.
    """
    th, tw = target
    if th < 1 or tw < 1:
        raise DimensionMismatchError(f"target dims must be positive, got {target}")
    sh, sw = fmap.spatial_shape
    if (th, tw) == (sh, sw):
        return fmap

    def axis_coords(t_len: int, s_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(t_len) + 0.5) * (s_len / t_len) - 0.5
        pos = np.clip(pos, 0.0, s_len - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, s_len - 1)
        return lo, hi, pos - lo

    r0, r1, wr = axis_coords(th, sh)
    c0, c1, wc = axis_coords(tw, sw)
    wr = wr[:, None]
    wc = wc[None, :]
    src = fmap.data
    out = np.empty((fmap.channels, th, tw), dtype=np.float64)
    for c in range(fmap.channels):
        ch = src[c]
        top = ch[np.ix_(r0, c0)] * (1 - wc) + ch[np.ix_(r0, c1)] * wc
        bot = ch[np.ix_(r1, c0)] * (1 - wc) + ch[np.ix_(r1, c1)] * wc
        out[c] = top * (1 - wr) + bot * wr
    return DenseFeatureMap(out)


def connected_components_8(mask: BinaryMask) -> tuple[np.ndarray, list[Component]]:
    """Label maximal 8-connected foreground sets 1..K (0 = background).

    Returns the labeled grid plus one :class:`Component` per label carrying
    area and pixel membership.
    """
    grid = rle_decode(mask)
    labels, count = ndimage.label(grid, structure=_EIGHT_CONNECTED)
    components: list[Component] = []
    if count:
        order = np.argsort(labels.ravel(), kind="stable")
        flat_sorted = labels.ravel()[order]
        first = np.searchsorted(flat_sorted, np.arange(1, count + 1), side="left")
        last = np.searchsorted(flat_sorted, np.arange(1, count + 1), side="right")
        for k in range(count):
            flat = order[first[k] : last[k]]
            components.append(
                Component(
                    label=k + 1,
                    area=int(flat.size),
                    rows=flat // mask.width,
                    cols=flat % mask.width,
                )
            )
    return labels, components
