from .model import (
    AutoencoderModel,
    ClusterCut,
    FeedBundle,
    HeadsignPolicy,
    Linkage,
    Metric,
    NormalizationMode,
    RegionSet,
)
from .readers import load_feed
from .tools.config import PipelineConfig, validate_config
from .tools.pipeline import Pipeline, run

__version__ = "0.1.0"
