"""Checkpoint-free stub model: deterministic toy outputs that honor every
file-format invariant, for CI of the exchange contract.

- segmentation: one full-frame instance
- features: a zero tensor (4 channels at image resolution)
- image embedding: normalized mean RGB of the crop (uniform unit vector for
  an all-black crop so the output is always L2-normalized)
- text embedding: unit vector derived from the prompt's digest
"""

from __future__ import annotations

import hashlib

import numpy as np

STUB_FEATURE_CHANNELS = 4


def segment(image: np.ndarray) -> list[list[int]]:
    h, w = image.shape[:2]
    return [[0, h * w]]


def features(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    return np.zeros((STUB_FEATURE_CHANNELS, h, w), dtype=np.float32)


def embed_image(crop: np.ndarray) -> np.ndarray:
    mean = crop.reshape(-1, 3).astype(np.float64).mean(axis=0) / 255.0
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        return np.full(3, 1.0 / np.sqrt(3.0))
    return mean / norm


def embed_text(prompt: str) -> np.ndarray:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    vec = (np.frombuffer(digest[:3], dtype=np.uint8).astype(np.float64) + 1.0) / 256.0
    return vec / np.linalg.norm(vec)
