"""Data-level radiometric alignment.

Aligns the post-temporal image's per-channel intensity distribution to the
pre-temporal image via exact 256-bin CDF transfer, then blends the transferred
image back toward the original so the per-pixel correction magnitude never
exceeds a configured fraction of full scale. The transfer is a monotone pure
function of intensity, so grayscale ordering (and therefore local gradient
structure) is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .imaging import Image

LEVELS = 256


@dataclass(frozen=True)
class ChannelCdf:
    """Cumulative intensity distribution of one channel over 256 levels."""

    bins: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.bins, dtype=np.float64)
        if arr.shape != (LEVELS,):
            raise ConfigError(f"cdf must have {LEVELS} bins, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "bins", arr)


@dataclass(frozen=True)
class AraConfig:
    """Safety threshold for the blend: cap on max per-pixel change fraction."""

    tau_max: float = 0.25

    def __post_init__(self) -> None:
        if not (0.0 < self.tau_max <= 1.0):
            raise ConfigError(f"tau_max must be in (0, 1], got {self.tau_max}")


@dataclass(frozen=True)
class AraResult:
    aligned: Image
    transferred: Image
    delta_max: float
    alpha: float


def compute_cdf(image: Image) -> tuple[ChannelCdf, ChannelCdf, ChannelCdf]:
    """Exact per-channel CDF: cdf[c][v] = P(intensity <= v) over all pixels."""
    total = image.height * image.width
    cdfs = []
    for c in range(3):
        counts = np.bincount(image.data[:, :, c].ravel(), minlength=LEVELS)
        cdfs.append(ChannelCdf(np.cumsum(counts) / total))
    return tuple(cdfs)


def _transfer_lut(source_channel: np.ndarray, reference_channel: np.ndarray) -> np.ndarray:
    """256-entry LUT mapping source intensities onto the reference distribution.

    LUT[v] = min{ u : cum_ref(u) >= cum_src(v) }. Both images have the same
    pixel count, so cumulative counts compare exactly in integers.
    """
    cum_src = np.cumsum(np.bincount(source_channel.ravel(), minlength=LEVELS))
    cum_ref = np.cumsum(np.bincount(reference_channel.ravel(), minlength=LEVELS))
    return np.searchsorted(cum_ref, cum_src, side="left").astype(np.uint8)


def radiometric_transfer(source: Image, reference: Image) -> Image:
    """Match each channel histogram of ``source`` to ``reference``."""
    if source.shape != reference.shape:
        raise DimensionMismatchError(
            f"source {source.shape} vs reference {reference.shape}"
        )
    out = np.empty_like(source.data)
    for c in range(3):
        lut = _transfer_lut(source.data[:, :, c], reference.data[:, :, c])
        out[:, :, c] = lut[source.data[:, :, c]]
    return Image(out)


def adaptive_mix(transferred: Image, original: Image, config: AraConfig) -> AraResult:
    """Blend transferred toward original so the correction stays within bounds.

    delta_max is the largest per-pixel/channel change as a fraction of 255;
    the blend weight is alpha = min(1, tau_max / delta_max), with alpha = 1
    when the images already agree.
    """
    if transferred.shape != original.shape:
        raise DimensionMismatchError(
            f"transferred {transferred.shape} vs original {original.shape}"
        )
    t = transferred.data.astype(np.float64)
    o = original.data.astype(np.float64)
    delta_max = float(np.abs(t - o).max()) / 255.0
    alpha = 1.0 if delta_max == 0.0 else min(1.0, config.tau_max / delta_max)
    # round half away from zero (values are non-negative), then clamp
    blended = np.floor(alpha * t + (1.0 - alpha) * o + 0.5)
    aligned = Image(np.clip(blended, 0, 255).astype(np.uint8))
    return AraResult(aligned=aligned, transferred=transferred, delta_max=delta_max, alpha=alpha)


def align(image_a: Image, image_b: Image, config: AraConfig) -> AraResult:
    """Full alignment of phase b onto phase a: CDF transfer then adaptive blend."""
    transferred = radiometric_transfer(image_b, image_a)
    return adaptive_mix(transferred, image_b, config)
