"""Auditable high-risk-property classification over a versioned policy corpus."""

from .agents import Feedback, FeedbackAction, ItemFields
from .config import PipelineConfig, load_config
from .corpus import CorpusSnapshot, PolicyDocument, PolicySnippet, build_snapshot
from .labels import ControlList, RiskLevel
from .orchestrator import Pipeline

__all__ = [
    "ControlList",
    "CorpusSnapshot",
    "Feedback",
    "FeedbackAction",
    "ItemFields",
    "Pipeline",
    "PipelineConfig",
    "PolicyDocument",
    "PolicySnippet",
    "RiskLevel",
    "build_snapshot",
    "load_config",
]

__version__ = "0.1.0"
