"""End-to-end orchestration of the change-detection stages.

Stage order is fixed: radiometric alignment, per-phase segmentation,
per-phase dense features plus adaptive thresholding, then semantic
identification with confidence filtering. Disabling a stage substitutes its
documented fallback (pass-through image, fixed-percentile similarity cut,
or plain majority acceptance) without reordering anything.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import formats
from .comparison import (
    ActConfig,
    CandidateSet,
    DifferenceMap,
    RegionScore,
    ThresholdBundle,
    compute_thresholds,
    difference_map,
    map_to_angle,
    score_masks,
    similarity_cut,
)
from .errors import ConfigError, DimensionMismatchError
from .imaging import DenseFeatureMap, Image, MaskSet, bilinear_upsample, rle_encode
from .providers import (
    EmbeddingProviderSpec,
    FeatureProviderSpec,
    SegmentationProviderSpec,
    extract_features,
    segment,
)
from .radiometry import AraConfig, AraResult, align
from .semantic import (
    AcfConfig,
    ChangeMask,
    RegionClassification,
    TextPrototypes,
    identify,
)

@dataclass(frozen=True)
class PipelineConfig:
    ara: AraConfig = AraConfig()
    ara_enabled: bool = True
    act: ActConfig = ActConfig()
    act_enabled: bool = True
    acf: AcfConfig = AcfConfig()
    acf_enabled: bool = True
    fixed_percentile: float = 30.0
    segmentation: SegmentationProviderSpec = SegmentationProviderSpec(kind="synthetic-grid")
    features: FeatureProviderSpec = FeatureProviderSpec(kind="synthetic")
    embeddings: EmbeddingProviderSpec = EmbeddingProviderSpec(kind="synthetic-color")
    prototypes: TextPrototypes = TextPrototypes(target="target", background="background")
    dump_intermediate: bool = False
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.fixed_percentile < 100.0):
            raise ConfigError(
                f"fixed_percentile must be in (0, 100), got {self.fixed_percentile}"
            )


@dataclass
class RunArtifacts:
    aligned: AraResult | None
    masks_a: MaskSet
    masks_b: MaskSet
    masks_all: MaskSet
    dmap: DifferenceMap | None
    thresholds: ThresholdBundle | None
    theta_threshold: float | None
    fixed_cut: float | None
    scores: list[RegionScore]
    candidates: CandidateSet
    classifications: list[RegionClassification]
    tau_conf: float | None
    change: ChangeMask
    stage_seconds: dict[str, float] = field(default_factory=dict)


def merge_mask_sets(sa: MaskSet, sb: MaskSet) -> MaskSet:
    """All of phase a's masks followed by all of phase b's, ids reassigned
    densely. Duplicates are kept."""
    if len(sa) and len(sb) and sa.masks[0].shape != sb.masks[0].shape:
        raise DimensionMismatchError(
            f"mask sets disagree: {sa.masks[0].shape} vs {sb.masks[0].shape}"
        )
    return MaskSet(
        masks=sa.masks + sb.masks,
        sources=("phase-a",) * len(sa) + ("phase-b",) * len(sb),
    )


def _empty_change(shape: tuple[int, int]) -> ChangeMask:
    h, w = shape
    return ChangeMask(
        mask=rle_encode(np.zeros((h, w), dtype=bool)),
        confidence=np.zeros((h, w), dtype=np.float64),
        region_stats=(),
    )


def run(image_a: Image, image_b: Image, config: PipelineConfig) -> RunArtifacts:
    """Execute the full pipeline on one bi-temporal pair."""
    if image_a.shape != image_b.shape:
        raise DimensionMismatchError(f"{image_a.shape} vs {image_b.shape}")
    shape = image_a.shape
    timings: dict[str, float] = {}

    t0 = time.monotonic()
    aligned_result: AraResult | None = None
    if config.ara_enabled:
        aligned_result = align(image_a, image_b, config.ara)
        image_b_aligned = aligned_result.aligned
    else:
        image_b_aligned = image_b
    timings["align"] = time.monotonic() - t0

    t0 = time.monotonic()
    masks_a = segment(image_a, config.segmentation)
    masks_b = segment(image_b_aligned, config.segmentation)
    masks_all = merge_mask_sets(masks_a, masks_b)
    timings["segment"] = time.monotonic() - t0

    t0 = time.monotonic()
    fa = _features_at(image_a, shape, config.features)
    fb = _features_at(image_b_aligned, shape, config.features)
    timings["features"] = time.monotonic() - t0

    t0 = time.monotonic()
    dmap: DifferenceMap | None = None
    thresholds: ThresholdBundle | None = None
    theta: float | None = None
    fixed_cut: float | None = None
    all_scores = score_masks(masks_all, fa, fb)
    if config.act_enabled:
        dmap = difference_map(fa, fb)
        thresholds = compute_thresholds(dmap, config.act)
        theta = map_to_angle(thresholds.tau_final, config.act)
        cut = similarity_cut(theta)
    else:
        values = [s.similarity for s in all_scores if s.similarity is not None]
        # lower tail of the similarity distribution counts as changed
        fixed_cut = (
            float(np.percentile(np.asarray(values), config.fixed_percentile))
            if values
            else -1.0
        )
        cut = fixed_cut
    candidates = CandidateSet(
        scores=tuple(
            s for s in all_scores if s.similarity is not None and s.similarity < cut
        )
    )
    timings["compare"] = time.monotonic() - t0

    t0 = time.monotonic()
    if config.acf_enabled:
        change, classifications, tau_conf = identify(
            candidates,
            image_b,
            masks_all,
            config.prototypes,
            config.embeddings,
            config.acf,
        )
    else:
        change, classifications, tau_conf = _identify_unfiltered(
            candidates, image_b, masks_all, config
        )
    timings["identify"] = time.monotonic() - t0

    return RunArtifacts(
        aligned=aligned_result,
        masks_a=masks_a,
        masks_b=masks_b,
        masks_all=masks_all,
        dmap=dmap,
        thresholds=thresholds,
        theta_threshold=theta,
        fixed_cut=fixed_cut,
        scores=all_scores,
        candidates=candidates,
        classifications=classifications,
        tau_conf=tau_conf,
        change=change,
        stage_seconds=timings,
    )


def _features_at(
    image: Image, shape: tuple[int, int], spec: FeatureProviderSpec
) -> DenseFeatureMap:
    fmap = extract_features(image, spec)
    return bilinear_upsample(fmap, shape)


def _identify_unfiltered(
    candidates: CandidateSet,
    image_b: Image,
    masks: MaskSet,
    config: PipelineConfig,
) -> tuple[ChangeMask, list[RegionClassification], float | None]:
    """Fallback when confidence filtering is off: keep every candidate the
    classifier ranks target-first, with no threshold or region gates."""
    from .imaging import mask_pixel_indices
    from .providers import embed_text
    from .semantic import _classify_against, crop_region

    h, w = image_b.shape
    classifications: list[RegionClassification] = []
    if len(candidates):
        target_vec = embed_text(config.prototypes.target, config.embeddings)
        background_vec = embed_text(config.prototypes.background, config.embeddings)
        for score in candidates:
            crop = crop_region(image_b, masks.masks[score.mask_id], config.acf)
            classifications.append(
                _classify_against(
                    crop,
                    score.mask_id,
                    target_vec,
                    background_vec,
                    config.embeddings,
                    config.acf,
                )
            )
    union = np.zeros((h, w), dtype=bool)
    confidence = np.zeros((h, w), dtype=np.float64)
    for cls in classifications:
        if cls.p_target > 0.5:
            rows, cols = mask_pixel_indices(masks.masks[cls.mask_id])
            union[rows, cols] = True
            np.maximum.at(confidence, (rows, cols), cls.p_target)
    change = ChangeMask(mask=rle_encode(union), confidence=confidence, region_stats=())
    return change, classifications, None


def dump_artifacts(artifacts: RunArtifacts, out_dir: str | Path) -> dict[str, str]:
    """Write every intermediate product and return {filename: sha256}.

    Files are byte-reproducible: no timestamps, sorted JSON keys.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, str] = {}

    def record(name: str) -> None:
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        written[name] = digest

    if artifacts.aligned is not None:
        formats.write_image_png(out / "aligned.png", artifacts.aligned.aligned)
        record("aligned.png")
    formats.write_masks_manifest(out / "masks_a.masks.json", artifacts.masks_a)
    record("masks_a.masks.json")
    formats.write_masks_manifest(out / "masks_b.masks.json", artifacts.masks_b)
    record("masks_b.masks.json")
    if artifacts.dmap is not None:
        formats.write_dfm(
            out / "difference.dfm", DenseFeatureMap(artifacts.dmap.values[None, :, :])
        )
        record("difference.dfm")
    candidates_doc = {
        "candidate_ids": artifacts.candidates.ids(),
        "similarities": {
            str(s.mask_id): s.similarity for s in artifacts.candidates
        },
    }
    (out / "candidates.json").write_text(
        json.dumps(candidates_doc, sort_keys=True, indent=2) + "\n"
    )
    record("candidates.json")
    table = [
        {
            "mask_id": c.mask_id,
            "sim_target": c.sim_target,
            "sim_background": c.sim_background,
            "p_target": c.p_target,
        }
        for c in artifacts.classifications
    ]
    (out / "classifications.json").write_text(
        json.dumps(table, sort_keys=True, indent=2) + "\n"
    )
    record("classifications.json")
    formats.write_mask_png(out / "change_mask.png", artifacts.change.mask)
    record("change_mask.png")
    manifest = {"files": written}
    (out / "dump_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    return written


# --- configuration document ------------------------------------------------

_PROVIDER_KEYS = {
    "segmentation": {"kind", "manifest_path", "tile_size", "command", "timeout"},
    "features": {"kind", "feature_path", "blur_radius", "command", "timeout"},
    "embeddings": {"kind", "manifest_path", "anchors", "dim", "command", "timeout"},
}


def _reject_unknown(doc: dict, allowed: set[str], context: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}")


def _provider_from_doc(role: str, doc: dict):
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"provider '{role}' needs an object with a 'kind'")
    _reject_unknown(doc, _PROVIDER_KEYS[role], f"providers.{role}")
    doc = dict(doc)
    if "command" in doc:
        doc["command"] = tuple(doc["command"])
    if "anchors" in doc:
        doc["anchors"] = {k: tuple(v) for k, v in doc["anchors"].items()}
    cls = {
        "segmentation": SegmentationProviderSpec,
        "features": FeatureProviderSpec,
        "embeddings": EmbeddingProviderSpec,
    }[role]
    return cls(**doc)


def config_from_doc(doc: dict) -> PipelineConfig:
    """Build a validated PipelineConfig from a parsed JSON document.

    Unknown keys are rejected at every level.
    """
    _reject_unknown(
        doc,
        {
            "ara",
            "act",
            "acf",
            "fixed_percentile",
            "providers",
            "prototypes",
            "dump_intermediate",
            "output_dir",
        },
        "config",
    )
    kwargs: dict = {}
    if "ara" in doc:
        ara = dict(doc["ara"])
        _reject_unknown(ara, {"enabled", "tau_max"}, "config.ara")
        kwargs["ara_enabled"] = bool(ara.pop("enabled", True))
        kwargs["ara"] = AraConfig(**ara)
    if "act" in doc:
        act = dict(doc["act"])
        _reject_unknown(
            act,
            {"enabled", "w_g", "w_e", "theta_min", "theta_max", "n_min", "dilation_iterations"},
            "config.act",
        )
        kwargs["act_enabled"] = bool(act.pop("enabled", True))
        kwargs["act"] = ActConfig(**act)
    if "acf" in doc:
        acf = dict(doc["acf"])
        _reject_unknown(
            acf,
            {
                "enabled",
                "percentile",
                "lambda",
                "clip_lo",
                "clip_hi",
                "mu_min",
                "gamma",
                "a_min",
                "crop_pad_fraction",
                "softmax_temperature",
            },
            "config.acf",
        )
        kwargs["acf_enabled"] = bool(acf.pop("enabled", True))
        if "lambda" in acf:
            acf["lambda_"] = acf.pop("lambda")
        kwargs["acf"] = AcfConfig(**acf)
    if "fixed_percentile" in doc:
        kwargs["fixed_percentile"] = float(doc["fixed_percentile"])
    if "providers" in doc:
        providers_doc = doc["providers"]
        _reject_unknown(providers_doc, set(_PROVIDER_KEYS), "config.providers")
        for role in _PROVIDER_KEYS:
            if role in providers_doc:
                kwargs[role] = _provider_from_doc(role, providers_doc[role])
    if "prototypes" in doc:
        proto = dict(doc["prototypes"])
        _reject_unknown(proto, {"target", "background"}, "config.prototypes")
        kwargs["prototypes"] = TextPrototypes(**proto)
    if "dump_intermediate" in doc:
        kwargs["dump_intermediate"] = bool(doc["dump_intermediate"])
    if "output_dir" in doc:
        kwargs["output_dir"] = doc["output_dir"]
    return PipelineConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_doc(doc)


def config_to_doc(config: PipelineConfig) -> dict:
    """Inverse of :func:`config_from_doc` (providers serialized field-for-field)."""
    doc: dict = {
        "ara": {"enabled": config.ara_enabled, "tau_max": config.ara.tau_max},
        "act": {
            "enabled": config.act_enabled,
            "w_g": config.act.w_g,
            "w_e": config.act.w_e,
            "theta_min": config.act.theta_min,
            "theta_max": config.act.theta_max,
            "n_min": config.act.n_min,
            "dilation_iterations": config.act.dilation_iterations,
        },
        "acf": {
            "enabled": config.acf_enabled,
            "percentile": config.acf.percentile,
            "lambda": config.acf.lambda_,
            "clip_lo": config.acf.clip_lo,
            "clip_hi": config.acf.clip_hi,
            "mu_min": config.acf.mu_min,
            "gamma": config.acf.gamma,
            "a_min": config.acf.a_min,
            "crop_pad_fraction": config.acf.crop_pad_fraction,
            "softmax_temperature": config.acf.softmax_temperature,
        },
        "fixed_percentile": config.fixed_percentile,
        "providers": {},
        "prototypes": {
            "target": config.prototypes.target,
            "background": config.prototypes.background,
        },
        "dump_intermediate": config.dump_intermediate,
    }
    seg = {"kind": config.segmentation.kind}
    if config.segmentation.kind == "file":
        seg["manifest_path"] = config.segmentation.manifest_path
    elif config.segmentation.kind == "synthetic-grid":
        seg["tile_size"] = config.segmentation.tile_size
    else:
        seg["command"] = list(config.segmentation.command)
        seg["timeout"] = config.segmentation.timeout
    doc["providers"]["segmentation"] = seg
    feat = {"kind": config.features.kind}
    if config.features.kind == "file":
        feat["feature_path"] = config.features.feature_path
    elif config.features.kind == "synthetic":
        feat["blur_radius"] = config.features.blur_radius
    else:
        feat["command"] = list(config.features.command)
        feat["timeout"] = config.features.timeout
    doc["providers"]["features"] = feat
    emb = {"kind": config.embeddings.kind, "dim": config.embeddings.dim}
    if config.embeddings.kind == "file":
        emb["manifest_path"] = config.embeddings.manifest_path
    elif config.embeddings.kind == "synthetic-color":
        emb["anchors"] = {k: list(v) for k, v in config.embeddings.anchors.items()}
    else:
        emb["command"] = list(config.embeddings.command)
        emb["timeout"] = config.embeddings.timeout
    doc["providers"]["embeddings"] = emb
    if config.output_dir is not None:
        doc["output_dir"] = config.output_dir
    return doc


def with_ablations(
    config: PipelineConfig,
    *,
    no_ara: bool = False,
    no_act: bool = False,
    no_acf: bool = False,
) -> PipelineConfig:
    """Copy of the config with the requested stages disabled."""
    out = config
    if no_ara:
        out = replace(out, ara_enabled=False)
    if no_act:
        out = replace(out, act_enabled=False)
    if no_acf:
        out = replace(out, acf_enabled=False)
    return out
