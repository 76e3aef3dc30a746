"""Training-free open-vocabulary change detection for bi-temporal image pairs.

The pipeline radiometrically aligns the pair, segments both phases into
class-agnostic instances, scores per-instance semantic change against an
adaptively fused threshold, classifies candidates against mutually exclusive
text prototypes, and emits a confidence-filtered binary change mask. The
three foundation-model roles (segmentation, dense features, embeddings) sit
behind pluggable providers, so the whole fusion core runs and tests without
any neural network.
"""

from .comparison import ActConfig, CandidateSet, ThresholdBundle
from .errors import AdaptcdError
from .evaluation import ConfusionCounts, Metrics, confusion, metrics, metrics_from_pr
from .imaging import BBox, BinaryMask, DenseFeatureMap, Image, MaskSet
from .pipeline import PipelineConfig, RunArtifacts, load_config, run
from .providers import (
    EmbeddingProviderSpec,
    FeatureProviderSpec,
    SegmentationProviderSpec,
)
from .radiometry import AraConfig, AraResult, align
from .semantic import AcfConfig, ChangeMask, RegionStats, TextPrototypes, identify

__version__ = "0.1.0"

__all__ = [
    "AcfConfig",
    "ActConfig",
    "AdaptcdError",
    "AraConfig",
    "AraResult",
    "BBox",
    "BinaryMask",
    "CandidateSet",
    "ChangeMask",
    "ConfusionCounts",
    "DenseFeatureMap",
    "EmbeddingProviderSpec",
    "FeatureProviderSpec",
    "Image",
    "MaskSet",
    "Metrics",
    "PipelineConfig",
    "RegionStats",
    "RunArtifacts",
    "SegmentationProviderSpec",
    "TextPrototypes",
    "ThresholdBundle",
    "align",
    "confusion",
    "identify",
    "load_config",
    "metrics",
    "metrics_from_pr",
    "run",
]
