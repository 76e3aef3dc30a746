"""Decision-level semantic identification and confidence filtering.

Candidate regions are cropped from the post-temporal image, embedded, and
classified against a mutually exclusive target/background prototype pair via
temperature-scaled softmax over the two cosine similarities. The accepted
set is cut at an adaptive confidence threshold (a percentile of the positive
confidences, relaxed by a filtering-intensity factor, then clipped) and the
resulting mask is gated per 8-connected component on area, mean confidence,
and coefficient of variation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .comparison import CandidateSet, cosine_similarity
from .errors import ConfigError, DimensionMismatchError
from .imaging import (
    BinaryMask,
    Image,
    MaskSet,
    connected_components_8,
    mask_bbox,
    mask_pixel_indices,
    rle_encode,
)
from .providers import EmbeddingProviderSpec, embed_region, embed_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TextPrototypes:
    """Mutually exclusive keyword descriptions of target and background."""

    target: str
    background: str

    def __post_init__(self) -> None:
        if not self.target or not self.background:
            raise ConfigError("prototype strings must be nonempty")
        if self.target == self.background:
            raise ConfigError("target and background prototypes must differ")


@dataclass(frozen=True)
class AcfConfig:
    """Adaptive confidence filtering knobs.

    ``percentile``/``lambda_``/clip bounds shape the confidence cut;
    ``a_min``/``mu_min``/``gamma`` gate connected components;
    ``crop_pad_fraction`` controls classification crops and
    ``softmax_temperature`` scales the similarity logits.
    """

    percentile: float = 25.0
    lambda_: float = 1.2
    clip_lo: float = 0.5
    clip_hi: float = 0.95
    mu_min: float = 0.5
    gamma: float = 0.5
    a_min: int = 64
    crop_pad_fraction: float = 0.1
    softmax_temperature: float = 100.0

    def __post_init__(self) -> None:
        if not (0.0 < self.percentile <= 100.0):
            raise ConfigError(f"percentile must be in (0, 100], got {self.percentile}")
        if self.lambda_ <= 0.0:
            raise ConfigError(f"lambda must be > 0, got {self.lambda_}")
        if not (0.0 <= self.clip_lo <= self.clip_hi <= 1.0):
            raise ConfigError(
                f"need 0 <= clip_lo <= clip_hi <= 1, got {self.clip_lo}, {self.clip_hi}"
            )
        if not (0.0 <= self.mu_min <= 1.0):
            raise ConfigError(f"mu_min must be in [0, 1], got {self.mu_min}")
        if self.gamma <= 0.0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.a_min < 0:
            raise ConfigError("a_min must be >= 0")
        if self.crop_pad_fraction < 0.0:
            raise ConfigError("crop_pad_fraction must be >= 0")
        if self.softmax_temperature <= 0.0:
            raise ConfigError("softmax_temperature must be > 0")


@dataclass(frozen=True)
class RegionClassification:
    mask_id: int
    sim_target: float
    sim_background: float
    p_target: float


@dataclass(frozen=True)
class RegionStats:
    """Per 8-connected-component confidence statistics and the gate verdict."""

    label: int
    area: int
    mean_confidence: float
    std_confidence: float
    cv: float  # inf when the mean is zero
    reliable: bool


@dataclass(frozen=True)
class ChangeMask:
    """Final binary change mask plus the confidence grid its gates used."""

    mask: BinaryMask
    confidence: np.ndarray
    region_stats: tuple[RegionStats, ...]

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.confidence, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "confidence", arr)


def crop_region(image: Image, mask: BinaryMask, config: AcfConfig) -> Image:
    """Bounding-box crop expanded by max(4, round(pad_fraction * box side))
    pixels per side, clamped to the frame."""
    if image.shape != mask.shape:
        raise DimensionMismatchError(f"image {image.shape} vs mask {mask.shape}")
    box = mask_bbox(mask)
    side = max(box.height, box.width)
    pad = max(4, int(math.floor(config.crop_pad_fraction * side + 0.5)))
    r0 = max(0, box.row0 - pad)
    c0 = max(0, box.col0 - pad)
    r1 = min(image.height, box.row1 + pad)
    c1 = min(image.width, box.col1 + pad)
    return Image(image.data[r0:r1, c0:c1].copy())


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _classify_against(
    crop: Image,
    mask_id: int,
    target_vec,
    background_vec,
    provider: EmbeddingProviderSpec,
    config: AcfConfig,
) -> RegionClassification:
    region = embed_region(crop, provider, key=mask_id)
    if region.degenerate:
        logger.warning("mask %d embedded to the zero vector; scoring 0", mask_id)
        return RegionClassification(mask_id, 0.0, 0.0, 0.0)
    sim_t = cosine_similarity(region.components, target_vec.components)
    sim_b = cosine_similarity(region.components, background_vec.components)
    sim_t = 0.0 if sim_t is None else sim_t
    sim_b = 0.0 if sim_b is None else sim_b
    p = _sigmoid(config.softmax_temperature * (sim_t - sim_b))
    return RegionClassification(mask_id, sim_t, sim_b, p)


def classify_region(
    crop: Image,
    mask_id: int,
    prototypes: TextPrototypes,
    provider: EmbeddingProviderSpec,
    config: AcfConfig,
) -> RegionClassification:
    """Target probability of one crop: softmax over the two prototype
    similarities at the configured temperature. A degenerate region embedding
    cannot assert the target, so it scores zero."""
    target_vec = embed_text(prototypes.target, provider)
    background_vec = embed_text(prototypes.background, provider)
    return _classify_against(crop, mask_id, target_vec, background_vec, provider, config)


def adaptive_conf_threshold(positives: list[float], config: AcfConfig) -> float | None:
    """Percentile of the positive confidences (linear interpolation between
    closest ranks), divided by the filtering intensity, clipped. ``None``
    signals no positives: the caller emits an empty mask."""
    if not positives:
        return None
    base = float(np.percentile(np.asarray(positives, dtype=np.float64), config.percentile))
    return float(np.clip(base / config.lambda_, config.clip_lo, config.clip_hi))


def connected_filter(
    accepted: list[tuple[BinaryMask, float]],
    shape: tuple[int, int],
    config: AcfConfig,
) -> ChangeMask:
    """Instance-level spatial-semantic gating of the accepted masks.

    Per-pixel confidence is the max over covering masks. An 8-connected
    component survives only when its area, mean confidence, and coefficient
    of variation all pass; surviving components are kept whole.
    """
    h, w = shape
    confidence = np.zeros((h, w), dtype=np.float64)
    union = np.zeros((h, w), dtype=bool)
    for mask, p in accepted:
        if mask.shape != shape:
            raise DimensionMismatchError(f"mask {mask.shape} vs frame {shape}")
        rows, cols = mask_pixel_indices(mask)
        union[rows, cols] = True
        np.maximum.at(confidence, (rows, cols), p)
    labels, components = connected_components_8(rle_encode(union))
    final = np.zeros((h, w), dtype=bool)
    stats: list[RegionStats] = []
    for comp in components:
        values = confidence[comp.rows, comp.cols]
        if values.min() == values.max():  # uniform confidence: exactly zero spread
            mu = float(values[0])
            sigma = 0.0
        else:
            mu = float(values.mean())
            sigma = float(values.std())
        cv = math.inf if mu == 0.0 else sigma / mu
        reliable = comp.area >= config.a_min and mu >= config.mu_min and cv < config.gamma
        stats.append(
            RegionStats(
                label=comp.label,
                area=comp.area,
                mean_confidence=mu,
                std_confidence=sigma,
                cv=cv,
                reliable=reliable,
            )
        )
        if reliable:
            final[comp.rows, comp.cols] = True
    return ChangeMask(
        mask=rle_encode(final), confidence=confidence, region_stats=tuple(stats)
    )


def identify(
    candidates: CandidateSet,
    image_b: Image,
    masks: MaskSet,
    prototypes: TextPrototypes,
    provider: EmbeddingProviderSpec,
    config: AcfConfig,
) -> tuple[ChangeMask, list[RegionClassification], float | None]:
    """Classify candidates, derive the adaptive confidence cut, and filter.

    Returns the final change mask, all candidate classifications, and the
    confidence threshold (None when no candidate ranked target first).
    """
    h, w = image_b.shape
    classifications: list[RegionClassification] = []
    if len(candidates):
        target_vec = embed_text(prototypes.target, provider)
        background_vec = embed_text(prototypes.background, provider)
        for score in candidates:
            mask = masks.masks[score.mask_id]
            crop = crop_region(image_b, mask, config)
            classifications.append(
                _classify_against(
                    crop, score.mask_id, target_vec, background_vec, provider, config
                )
            )
    positives = [c.p_target for c in classifications if c.p_target > 0.5]
    tau_conf = adaptive_conf_threshold(positives, config)
    if tau_conf is None:
        empty = ChangeMask(
            mask=rle_encode(np.zeros((h, w), dtype=bool)),
            confidence=np.zeros((h, w), dtype=np.float64),
            region_stats=(),
        )
        return empty, classifications, None
    accepted = [
        (masks.masks[c.mask_id], c.p_target)
        for c in classifications
        if c.p_target > tau_conf
    ]
    return connected_filter(accepted, (h, w), config), classifications, tau_conf
