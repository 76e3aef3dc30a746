"""Real-checkpoint model loaders. All imports are lazy: none of torch or the
model packages are touched unless a checkpoint run is requested, so stub mode
works on a bare install.

Generation parameters arrive as opaque key=value pass-through and go to the
model constructors unchanged; the adapters apply no post-processing of their
own.
"""

from __future__ import annotations

import numpy as np

from .files import AdapterError


def _require_torch(device_hint: str | None):
    try:
        import torch
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise AdapterError("checkpoint inference requires torch") from exc
    device = device_hint or ("cuda" if torch.cuda.is_available() else "cpu")
    return torch, device


def generate_masks(
    image: np.ndarray,
    checkpoint: str,
    model_name: str,
    device_hint: str | None,
    params: dict[str, float],
) -> list[np.ndarray]:
    """Automatic mask generation with a segment-anything-family checkpoint.

    Returns boolean HxW arrays in the generator's own output order.
    """
    torch, device = _require_torch(device_hint)
    try:
        if "hq" in model_name:
            from segment_anything_hq import SamAutomaticMaskGenerator, sam_model_registry
        else:
            from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise AdapterError(
            f"model '{model_name}' needs the segment-anything package family installed"
        ) from exc
    arch = model_name.replace("sam-hq-", "").replace("sam-", "") or "vit_h"
    sam = sam_model_registry[arch](checkpoint=checkpoint).to(device)
    generator = SamAutomaticMaskGenerator(sam, **params)
    with torch.inference_mode():
        records = generator.generate(image)
    return [np.asarray(r["segmentation"], dtype=bool) for r in records]


def extract_features(
    image: np.ndarray,
    checkpoint: str,
    device_hint: str | None,
) -> np.ndarray:
    """Dense patch features from a vision-transformer checkpoint (DINO family
    via the transformers AutoModel API). Returns a C x h x w float array at
    the model's patch resolution; the consumer upsamples."""
    torch, device = _require_torch(device_hint)
    try:
        from transformers import AutoImageProcessor, AutoModel
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise AdapterError("feature extraction needs the transformers package") from exc
    processor = AutoImageProcessor.from_pretrained(checkpoint)
    model = AutoModel.from_pretrained(checkpoint).to(device).eval()
    inputs = processor(images=image, return_tensors="pt").to(device)
    with torch.inference_mode():
        hidden = model(**inputs).last_hidden_state[0]
    patch = getattr(model.config, "patch_size", 16)
    grid_h = inputs["pixel_values"].shape[2] // patch
    grid_w = inputs["pixel_values"].shape[3] // patch
    tokens = hidden[-grid_h * grid_w :]  # drop class/register tokens
    return (
        tokens.reshape(grid_h, grid_w, -1).permute(2, 0, 1).cpu().numpy().astype(np.float32)
    )


class ClipEncoder:
    """Image/text embeddings from a CLIP-family checkpoint, L2-normalized."""

    def __init__(self, checkpoint: str, device_hint: str | None):
        torch, device = _require_torch(device_hint)
        try:
            from transformers import AutoProcessor, CLIPModel
        except ImportError as exc:  # pragma: no cover - environment-dependent
            raise AdapterError("embedding extraction needs the transformers package") from exc
        self._torch = torch
        self._device = device
        self._processor = AutoProcessor.from_pretrained(checkpoint)
        self._model = CLIPModel.from_pretrained(checkpoint).to(device).eval()

    def embed_image(self, crop: np.ndarray) -> np.ndarray:
        inputs = self._processor(images=crop, return_tensors="pt").to(self._device)
        with self._torch.inference_mode():
            vec = self._model.get_image_features(**inputs)[0]
        vec = vec / vec.norm()
        return vec.cpu().numpy().astype(np.float32)

    def embed_text(self, prompt: str) -> np.ndarray:
        inputs = self._processor(
            text=[prompt], return_tensors="pt", padding=True, truncation=True
        ).to(self._device)
        with self._torch.inference_mode():
            vec = self._model.get_text_features(**inputs)[0]
        vec = vec / vec.norm()
        return vec.cpu().numpy().astype(np.float32)
