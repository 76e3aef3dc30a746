"""Export jobs: run one model role on one input and write its provider file."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import files, stub
from .files import AdapterError


@dataclass
class AdapterJob:
    task: str  # segment | features | embed
    image_path: str | None
    out_path: str
    text: str | None = None
    crop: tuple[int, int, int, int] | None = None
    masks_paths: tuple[str, ...] = ()
    prompts_path: str | None = None
    crop_pad_fraction: float = 0.1
    use_stub: bool = True
    checkpoint: str | None = None
    model_name: str = "sam-hq-vit_h"
    device: str | None = None
    params: dict[str, float] = field(default_factory=dict)

    def require_checkpoint(self) -> str:
        if self.checkpoint is None:
            raise AdapterError("a --checkpoint is required unless --stub is given")
        return self.checkpoint


def _load_image(job: AdapterJob) -> np.ndarray:
    if job.image_path is None:
        raise AdapterError("this task needs --image")
    image = files.read_image(job.image_path)
    if job.crop is not None:
        r0, c0, r1, c1 = job.crop
        h, w = image.shape[:2]
        if not (0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w):
            raise AdapterError(f"--crop {job.crop} out of bounds for {h}x{w}")
        image = image[r0:r1, c0:c1]
    return image


def export_masks(job: AdapterJob) -> None:
    """Class-agnostic instance masks -> .masks.json."""
    image = _load_image(job)
    h, w = image.shape[:2]
    if job.use_stub:
        rles = stub.segment(image)
    else:
        from . import models

        grids = models.generate_masks(
            image, job.require_checkpoint(), job.model_name, job.device, job.params
        )
        if not grids:
            raise AdapterError("the mask generator produced no instances")
        rles = [files.rle_encode(g) for g in grids]
    files.write_masks_manifest(job.out_path, h, w, rles)


def export_features(job: AdapterJob) -> None:
    """Dense feature tensor -> .dfm (f32 little-endian, channel-major)."""
    image = _load_image(job)
    if job.use_stub:
        tensor = stub.features(image)
    else:
        from . import models

        tensor = models.extract_features(image, job.require_checkpoint(), job.device)
    files.write_dfm(job.out_path, tensor)


def _region_embedder(job: AdapterJob):
    if job.use_stub:
        return stub.embed_image, stub.embed_text
    from . import models

    encoder = models.ClipEncoder(job.require_checkpoint(), job.device)
    return encoder.embed_image, encoder.embed_text


def export_embeddings(job: AdapterJob) -> None:
    """Embeddings -> .emb.json.

    Three shapes of job:
    - ``--text`` alone: one ``text:<prompt>`` entry;
    - ``--image`` (optionally ``--crop``): one ``mask:0`` entry for the crop;
    - ``--image --masks M1[,M2] --prompts P``: one ``mask:<id>`` entry per
      instance across the concatenated manifests (ids follow the merged-set
      order: first manifest then second), cropped from the image with the
      shared pad rule, plus one ``text:`` entry per prototype.
    """
    embed_image, embed_text = _region_embedder(job)
    entries: dict[str, np.ndarray] = {}
    if job.masks_paths:
        image = _load_image(job)
        frame = image.shape[:2]
        next_id = 0
        for masks_path in job.masks_paths:
            h, w, rles = files.read_masks_manifest(masks_path)
            if (h, w) != frame:
                raise AdapterError(
                    f"{masks_path}: manifest dims {(h, w)} != image dims {frame}"
                )
            for rle in rles:
                grid = files.rle_decode(rle, h, w)
                r0, c0, r1, c1 = files.padded_crop_box(grid, frame, job.crop_pad_fraction)
                entries[f"mask:{next_id}"] = embed_image(image[r0:r1, c0:c1])
                next_id += 1
        if job.prompts_path is None:
            raise AdapterError("batch embedding needs --prompts")
        target, background = files.read_prompts(job.prompts_path)
        entries[f"text:{target}"] = embed_text(target)
        entries[f"text:{background}"] = embed_text(background)
    elif job.text is not None:
        entries[f"text:{job.text}"] = embed_text(job.text)
    elif job.image_path is not None:
        entries["mask:0"] = embed_image(_load_image(job))
    else:
        raise AdapterError("embed needs --text, --image, or --image with --masks")
    dims = {len(v) for v in entries.values()}
    if len(dims) != 1:
        raise AdapterError(f"inconsistent embedding dims: {sorted(dims)}")
    files.write_embedding_manifest(job.out_path, dims.pop(), entries)


def run_job(job: AdapterJob) -> None:
    Path(job.out_path).parent.mkdir(parents=True, exist_ok=True)
    handler = {
        "segment": export_masks,
        "features": export_features,
        "embed": export_embeddings,
    }.get(job.task)
    if handler is None:
        raise AdapterError(f"unknown task '{job.task}'")
    handler(job)
