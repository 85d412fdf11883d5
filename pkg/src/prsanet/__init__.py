"""Temporal action proposal generation with pyramid region-based slot attention."""

from .config import RunConfig, profile_config
from .data import (
    DatasetManifest,
    GroundTruthInstance,
    SnippetFeatureSequence,
    VideoRecord,
)
from .network import ModelConfig, PRSANet

__all__ = [
    "DatasetManifest",
    "GroundTruthInstance",
    "ModelConfig",
    "PRSANet",
    "RunConfig",
    "SnippetFeatureSequence",
    "VideoRecord",
    "profile_config",
]

__version__ = "0.1.0"
