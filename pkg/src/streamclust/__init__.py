"""Single-pass clustering of multivariate streams with Mahalanobis metrics and double-shrinkage covariances."""

from .engine import EngineConfig, RunReport, StreamEngine, process_stream
from .summary import ClusterSummary, add_point, merge, summary_from_pair

__version__ = "0.1.0"

__all__ = [
    "ClusterSummary",
    "EngineConfig",
    "RunReport",
    "StreamEngine",
    "add_point",
    "merge",
    "process_stream",
    "summary_from_pair",
]
