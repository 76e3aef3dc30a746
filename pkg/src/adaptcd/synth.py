"""Deterministic synthetic bi-temporal fixtures with known ground truth.

Scenes are 256x256 rasters of seeded per-pixel noise over a dark-blue base,
with static colored decorations present in both phases (they anchor the
intensity distributions so the radiometric transfer stays near-identity on
unchanged content) and planted recolored blocks in phase b. Because the
color palettes are nearly orthogonal in RGB, the expected final mask is
known by construction.

Two fixture families:

- e2e:       clean scenes, one target-colored change (optionally plus one
             background-colored distractor change); expected F1 = 1.0.
- ablation:  noisy scenes (global per-channel jitter plus sensor noise on
             phase b) with planted pseudo-changes that specific disabled
             stages let through.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .comparison import ActConfig
from .imaging import Image, rle_encode
from .pipeline import PipelineConfig, config_to_doc
from .providers import (
    EmbeddingProviderSpec,
    FeatureProviderSpec,
    SegmentationProviderSpec,
)
from .radiometry import AraConfig
from .semantic import AcfConfig, TextPrototypes

SIZE = 256

TARGET_PROMPT = "red rooftop structures"
BACKGROUND_PROMPT = "blue water and terrain"
TARGET_ANCHOR = (0.9, 0.06, 0.06)
BACKGROUND_ANCHOR = (0.08, 0.08, 0.7)

# (low, high) per channel, high exclusive
PALETTES: dict[str, tuple[tuple[int, int], ...]] = {
    "base": ((12, 31), (12, 31), (120, 231)),
    "red": ((200, 241), (5, 26), (5, 26)),
    "green": ((5, 26), (200, 241), (5, 26)),
    "yellow": ((200, 241), (200, 241), (10, 31)),
    "orange": ((194, 207), (112, 125), (39, 52)),
    # phase-b variants of the decorations: same visual class, slightly
    # shifted intensity ranges (radiometric pseudo-changes)
    "yellow-shifted": ((190, 231), (210, 251), (10, 31)),
    "red-shifted": ((190, 231), (15, 36), (5, 26)),
}


@dataclass(frozen=True)
class Block:
    """A tile-aligned rectangle in pixels."""

    r0: int
    c0: int
    r1: int
    c1: int


def _fill(rng: np.random.Generator, h: int, w: int, palette: str) -> np.ndarray:
    out = np.empty((h, w, 3), dtype=np.uint8)
    for c, (lo, hi) in enumerate(PALETTES[palette]):
        out[:, :, c] = rng.integers(lo, hi, size=(h, w), dtype=np.int64)
    return out


def _paint(canvas: np.ndarray, rng: np.random.Generator, block: Block, palette: str) -> None:
    canvas[block.r0 : block.r1, block.c0 : block.c1] = _fill(
        rng, block.r1 - block.r0, block.c1 - block.c0, palette
    )


def _gt_mask(blocks: list[Block]) -> np.ndarray:
    grid = np.zeros((SIZE, SIZE), dtype=bool)
    for b in blocks:
        grid[b.r0 : b.r1, b.c0 : b.c1] = True
    return grid


def _fixture_config(tile_size: int, theta_min: float, overrides: dict | None = None) -> PipelineConfig:
    acf_kwargs = dict(overrides or {})
    # tight blend cap: planted recolors shift the global histograms, so an
    # unrestrained transfer would wash the changes back out
    return PipelineConfig(
        ara=AraConfig(tau_max=0.05),
        act=ActConfig(theta_min=theta_min, theta_max=150.0),
        acf=AcfConfig(**acf_kwargs),
        segmentation=SegmentationProviderSpec(kind="synthetic-grid", tile_size=tile_size),
        features=FeatureProviderSpec(kind="synthetic", blur_radius=2),
        embeddings=EmbeddingProviderSpec(
            kind="synthetic-color",
            anchors={TARGET_PROMPT: TARGET_ANCHOR, BACKGROUND_PROMPT: BACKGROUND_ANCHOR},
        ),
        prototypes=TextPrototypes(target=TARGET_PROMPT, background=BACKGROUND_PROMPT),
    )


def _write_fixture(
    out_dir: Path,
    pair_id: str,
    image_a: np.ndarray,
    image_b: np.ndarray,
    gt: np.ndarray,
    config: PipelineConfig,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    formats.write_image_png(out_dir / "a.png", Image(image_a))
    formats.write_image_png(out_dir / "b.png", Image(image_b))
    formats.write_mask_png(out_dir / "gt.png", rle_encode(gt))
    formats.write_prompts(out_dir / "prompts.json", TARGET_PROMPT, BACKGROUND_PROMPT)
    anchors = {TARGET_PROMPT: list(TARGET_ANCHOR), BACKGROUND_PROMPT: list(BACKGROUND_ANCHOR)}
    (out_dir / "anchors.json").write_text(json.dumps(anchors, sort_keys=True, indent=2) + "\n")
    (out_dir / "config.json").write_text(
        json.dumps(config_to_doc(config), sort_keys=True, indent=2) + "\n"
    )
    manifest = {
        "pairs": [
            {"id": pair_id, "image_a": "a.png", "image_b": "b.png", "ground_truth": "gt.png"}
        ],
        "prompts": "prompts.json",
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def generate_e2e_fixture(out_dir: str | Path, seed: int, distractor: bool) -> Path:
    """Clean 256x256 scene, grid tile 32, one 32x32 target-colored change.

    With ``distractor`` a second 32x32 block recolors to the background-like
    green palette; it must be rejected at identification, so the expected
    mask is the single red block either way.
    """
    rng = np.random.default_rng(seed)
    scene = _fill(rng, SIZE, SIZE, "base")
    # static decorations, identical in both phases, anchor the red/green
    # intensity ranges inside the phase-a distribution
    _paint(scene, rng, Block(32, 192, 64, 224), "red")
    _paint(scene, rng, Block(192, 32, 224, 64), "green")
    image_a = scene
    image_b = scene.copy()
    change = Block(96, 96, 128, 128)
    rng_b = np.random.default_rng(seed + 1)
    _paint(image_b, rng_b, change, "red")
    if distractor:
        _paint(image_b, rng_b, Block(160, 160, 192, 192), "green")
    gt = _gt_mask([change])
    config = _fixture_config(tile_size=32, theta_min=110.0)
    out = Path(out_dir)
    name = "e2e-distractor" if distractor else "e2e-single"
    _write_fixture(out, name, image_a, image_b, gt, config)
    return out


# ablation scene layout (tile size 8): two 3x3-tile real changes, a 3x3-tile
# static yellow decoration touching the first one, a 2x2-tile static red
# decoration, and a 2x2-tile muted-orange pseudo-change
_REAL_BLOCKS = [Block(48, 48, 72, 72), Block(160, 96, 184, 120)]
_YELLOW_DECOR = Block(48, 24, 72, 48)
_RED_DECOR = Block(16, 208, 32, 224)
_ORANGE_PSEUDO = Block(192, 192, 208, 208)


def generate_ablation_fixture(out_dir: str | Path, seed: int) -> Path:
    """Noisy scene whose planted pseudo-changes separate the ablation variants.

    - the muted-orange block is a genuine change of a non-target class whose
      confidence lands between the majority cut (0.5) and the adaptive cut,
      so only the disabled-filtering variant keeps it;
    - the yellow and red decorations shift slightly in intensity between
      phases: they stay far above the angular decision boundary but fall in
      the lower similarity tail, so the fixed-percentile fallback promotes
      them to candidates and they classify target-like;
    - phase-b global jitter is what the alignment stage corrects.
    """
    rng = np.random.default_rng(seed)
    scene = _fill(rng, SIZE, SIZE, "base")
    _paint(scene, rng, _RED_DECOR, "red")
    _paint(scene, rng, _YELLOW_DECOR, "yellow")
    image_a = scene
    changed = scene.copy()
    rng_b = np.random.default_rng(seed + 1)
    for block in _REAL_BLOCKS:
        _paint(changed, rng_b, block, "red")
    _paint(changed, rng_b, _ORANGE_PSEUDO, "orange")
    _paint(changed, rng_b, _RED_DECOR, "red-shifted")
    _paint(changed, rng_b, _YELLOW_DECOR, "yellow-shifted")
    # radiometric jitter: global nonzero per-channel offsets plus iid sensor noise
    offsets = rng_b.choice(np.array([-3, -2, -1, 1, 2, 3]), size=3)
    noise = rng_b.integers(-2, 3, size=(SIZE, SIZE, 3))
    image_b = np.clip(
        changed.astype(np.int64) + offsets[None, None, :] + noise, 0, 255
    ).astype(np.uint8)
    gt = _gt_mask(_REAL_BLOCKS)
    config = _fixture_config(
        tile_size=8,
        theta_min=135.0,
        overrides={"softmax_temperature": 10.0, "lambda_": 1.12},
    )
    out = Path(out_dir)
    _write_fixture(out, f"ablation-{seed}", image_a, image_b, gt, config)
    return out


def generate_fixture_tree(
    out_dir: str | Path, seed: int, ablation_count: int = 20
) -> dict[str, list[str]]:
    """Full fixture tree: both e2e scenes plus an ablation family.

    Identical seeds produce byte-identical trees.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index: dict[str, list[str]] = {"e2e": [], "ablation": []}
    generate_e2e_fixture(out / "e2e-single", seed, distractor=False)
    index["e2e"].append("e2e-single")
    generate_e2e_fixture(out / "e2e-distractor", seed, distractor=True)
    index["e2e"].append("e2e-distractor")
    for i in range(ablation_count):
        name = f"ablation/seed-{i:03d}"
        generate_ablation_fixture(out / name, seed * 1000 + i)
        index["ablation"].append(name)
    (out / "index.json").write_text(json.dumps(index, sort_keys=True, indent=2) + "\n")
    return index
