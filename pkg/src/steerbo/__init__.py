"""Bayesian optimization steered by asynchronous, non-blocking expert feedback.

A BO loop maximizes a black-box objective while a second, independent loop
turns intermittent pairwise expert labels into a Bayesian preference model.
The two exchange versioned posterior snapshots through a single-writer,
many-reader store, and the preference posterior biases candidate selection
through a scalarized Thompson-sampling rule.
"""

from steerbo.config import CampaignConfig, parse_config, serialize_config
from steerbo.store import PosteriorSnapshot, SnapshotStore
from steerbo.types import Observation, PreferenceExample, TraceRecord

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig",
    "Observation",
    "PosteriorSnapshot",
    "PreferenceExample",
    "SnapshotStore",
    "TraceRecord",
    "parse_config",
    "serialize_config",
    "__version__",
]
