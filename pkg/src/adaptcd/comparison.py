"""Feature-level change scoring and adaptive candidate selection.

Builds a normalized per-pixel feature difference map, derives a change
threshold by fusing a global Otsu cut with an Otsu cut restricted to an
edge neighborhood of the difference map, converts the fused statistic into
an angular decision boundary, and selects candidate masks whose pooled
feature similarity across phases falls below that boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError, EmptyRegionError
from .imaging import (
    BinaryMask,
    DenseFeatureMap,
    MaskSet,
    dilate_3x3,
    mask_pixel_indices,
    rle_encode,
    sobel_magnitude,
)

logger = logging.getLogger(__name__)

OTSU_BINS = 256


@dataclass(frozen=True)
class DifferenceMap:
    """Min-max normalized per-pixel feature distance, flat zero when constant."""

    values: np.ndarray
    degenerate: bool

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class ThresholdBundle:
    tau_global: float
    tau_edge: float | None
    tau_final: float
    edge_pixel_count: int


@dataclass(frozen=True)
class ActConfig:
    """Weights, angle interval, and edge-band controls for adaptive thresholding.

    ``n_min=None`` resolves to max(256, round(0.005 * H * W)) at run time.
    """

    w_g: float = 0.7
    w_e: float = 0.3
    theta_min: float = 90.0
    theta_max: float = 150.0
    n_min: int | None = None
    dilation_iterations: int = 1

    def __post_init__(self) -> None:
        if self.w_g < 0 or self.w_e < 0 or abs(self.w_g + self.w_e - 1.0) > 1e-9:
            raise ConfigError(f"weights must be >= 0 and sum to 1, got {self.w_g}, {self.w_e}")
        if not (0.0 < self.theta_min < self.theta_max <= 180.0):
            raise ConfigError(
                f"need 0 < theta_min < theta_max <= 180, got {self.theta_min}, {self.theta_max}"
            )
        if self.n_min is not None and self.n_min < 0:
            raise ConfigError("n_min must be >= 0")
        if self.dilation_iterations < 0:
            raise ConfigError("dilation_iterations must be >= 0")

    def resolve_n_min(self, height: int, width: int) -> int:
        if self.n_min is not None:
            return self.n_min
        return max(256, int(round(0.005 * height * width)))


@dataclass(frozen=True)
class RegionScore:
    """Pooled per-phase feature vectors and their cosine similarity for one mask."""

    mask_id: int
    pooled_a: np.ndarray
    pooled_b: np.ndarray
    similarity: float | None  # None when either pooled vector has zero norm

    @property
    def degenerate(self) -> bool:
        return self.similarity is None


@dataclass(frozen=True)
class CandidateSet:
    """Mask ids flagged as changed, in ascending id order, with their scores."""

    scores: tuple[RegionScore, ...]

    def ids(self) -> list[int]:
        return [s.mask_id for s in self.scores]

    def __len__(self) -> int:
        return len(self.scores)

    def __iter__(self):
        return iter(self.scores)


def difference_map(fa: DenseFeatureMap, fb: DenseFeatureMap) -> DifferenceMap:
    """Per-pixel L2 feature distance, min-max normalized to [0, 1]."""
    if fa.data.shape != fb.data.shape:
        raise DimensionMismatchError(f"{fa.data.shape} vs {fb.data.shape}")
    diff = fa.data - fb.data
    raw = np.sqrt(np.einsum("chw,chw->hw", diff, diff))
    lo = float(raw.min())
    hi = float(raw.max())
    if hi == lo:
        return DifferenceMap(np.zeros_like(raw), degenerate=True)
    return DifferenceMap((raw - lo) / (hi - lo), degenerate=False)


def otsu_threshold(values: np.ndarray) -> tuple[float, bool]:
    """Between-class-variance-maximizing cut over 256 uniform bins on [0, 1].

    Cut index t splits samples into bins < t versus bins >= t; the returned
    threshold is the center of bin t. Ties break toward the smaller cut.
    Returns (0.0, True) when every sample falls in one bin.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyRegionError("otsu needs at least one sample")
    bins = np.clip(np.floor(values * OTSU_BINS), 0, OTSU_BINS - 1).astype(np.int64)
    hist = np.bincount(bins, minlength=OTSU_BINS).astype(np.float64)
    total = hist.sum()
    centers = (np.arange(OTSU_BINS) + 0.5) / OTSU_BINS
    # cumulative mass/mean below each cut t (bins 0..t-1)
    n0 = np.concatenate(([0.0], np.cumsum(hist)))[:OTSU_BINS]
    s0 = np.concatenate(([0.0], np.cumsum(hist * centers)))[:OTSU_BINS]
    n1 = total - n0
    s1 = s0[-1] + hist[-1] * centers[-1] - s0
    variance = np.zeros(OTSU_BINS)
    valid = (n0 > 0) & (n1 > 0)
    mu0 = np.divide(s0, n0, out=np.zeros(OTSU_BINS), where=valid)
    mu1 = np.divide(s1, n1, out=np.zeros(OTSU_BINS), where=valid)
    w0 = n0 / total
    w1 = n1 / total
    variance[valid] = (w0 * w1 * (mu0 - mu1) ** 2)[valid]
    if variance.max() == 0.0:
        return 0.0, True
    t = int(np.argmax(variance))  # argmax takes the first maximum: smaller cut wins ties
    return float(centers[t]), False


def edge_local_threshold(
    dmap: DifferenceMap, config: ActConfig
) -> tuple[float | None, int]:
    """Otsu cut of the difference map restricted to its edge neighborhood.

    The edge band is the Otsu-binarized gradient magnitude of the map,
    dilated ``dilation_iterations`` times. Returns (None, count) when the map
    is degenerate or the band has fewer than ``n_min`` pixels.
    """
    if dmap.degenerate:
        return None, 0
    h, w = dmap.values.shape
    n_min = config.resolve_n_min(h, w)
    grad = sobel_magnitude(dmap.values)
    grad_max = float(grad.max())
    if grad_max == 0.0:
        return None, 0
    cut, degenerate = otsu_threshold(grad / grad_max)
    if degenerate:
        return None, 0
    band = rle_encode(grad / grad_max > cut)
    band = dilate_3x3(band, config.dilation_iterations)
    count = band.area()
    if count < n_min:
        return None, count
    grid = np.zeros((h, w), dtype=bool)
    rows, cols = mask_pixel_indices(band)
    grid[rows, cols] = True
    tau_edge, edge_degenerate = otsu_threshold(dmap.values[grid])
    if edge_degenerate:
        return None, count
    return tau_edge, count


def fuse_thresholds(
    tau_global: float, tau_edge: float | None, config: ActConfig
) -> float:
    """Weighted combination of the global and edge-local cuts; global alone
    when the edge cut is invalid."""
    if tau_edge is None:
        return tau_global
    return config.w_g * tau_global + config.w_e * tau_edge


def compute_thresholds(dmap: DifferenceMap, config: ActConfig) -> ThresholdBundle:
    """Global cut, edge-local cut, and their fusion for one difference map."""
    if dmap.degenerate:
        tau_global = 0.0
    else:
        tau_global, deg = otsu_threshold(dmap.values.ravel())
        if deg:
            tau_global = 0.0
    tau_edge, count = edge_local_threshold(dmap, config)
    tau_final = fuse_thresholds(tau_global, tau_edge, config)
    return ThresholdBundle(
        tau_global=tau_global,
        tau_edge=tau_edge,
        tau_final=tau_final,
        edge_pixel_count=count,
    )


def map_to_angle(tau_final: float, config: ActConfig) -> float:
    """Affine map of the fused statistic onto the configured angle interval."""
    return config.theta_min + tau_final * (config.theta_max - config.theta_min)


def similarity_cut(theta_threshold: float) -> float:
    """Similarity decision boundary for an angle: cos(180 deg - theta)."""
    return math.cos(math.radians(180.0 - theta_threshold))


def mask_pool(features: DenseFeatureMap, mask: BinaryMask) -> np.ndarray:
    """Per-channel mean of the features over the mask's set pixels."""
    if features.spatial_shape != mask.shape:
        raise DimensionMismatchError(
            f"features {features.spatial_shape} vs mask {mask.shape}"
        )
    rows, cols = mask_pixel_indices(mask)
    if rows.size == 0:
        raise EmptyRegionError("cannot pool features over an empty mask")
    flat = rows * mask.width + cols
    return pooled_from_indices(features, flat)


def pooled_from_indices(features: DenseFeatureMap, flat_indices: np.ndarray) -> np.ndarray:
    """Mean feature vector over precomputed row-major flat pixel indices."""
    if flat_indices.size == 0:
        raise EmptyRegionError("cannot pool features over an empty mask")
    plane = features.data.reshape(features.channels, -1)
    return plane[:, flat_indices].sum(axis=1) / flat_indices.size


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float | None:
    """Cosine of the angle between two vectors; None when either norm is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"{u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return None
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def score_masks(
    masks: MaskSet, fa: DenseFeatureMap, fb: DenseFeatureMap
) -> list[RegionScore]:
    """Pooled vectors and similarity for every mask, in id order."""
    if fa.spatial_shape != fb.spatial_shape:
        raise DimensionMismatchError(f"{fa.spatial_shape} vs {fb.spatial_shape}")
    scores = []
    for mask_id, mask in enumerate(masks):
        rows, cols = mask_pixel_indices(mask)
        if rows.size == 0:
            raise EmptyRegionError(f"mask {mask_id} is empty")
        flat = rows * mask.width + cols
        pooled_a = pooled_from_indices(fa, flat)
        pooled_b = pooled_from_indices(fb, flat)
        sim = cosine_similarity(pooled_a, pooled_b)
        if sim is None:
            logger.warning(
                "mask %d pooled to a zero-norm feature vector; treating as unchanged",
                mask_id,
            )
        scores.append(RegionScore(mask_id, pooled_a, pooled_b, sim))
    return scores


def select_candidates(
    masks: MaskSet,
    fa: DenseFeatureMap,
    fb: DenseFeatureMap,
    theta_threshold: float,
) -> CandidateSet:
    """Masks whose similarity falls below the angular decision boundary.

    Degenerate (zero-norm) similarities are never selected.
    """
    cut = similarity_cut(theta_threshold)
    scores = score_masks(masks, fa, fb)
    chosen = tuple(
        s for s in scores if s.similarity is not None and s.similarity < cut
    )
    return CandidateSet(scores=chosen)
