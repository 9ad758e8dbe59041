"""No-reference trajectory quality metrics on aggregated point-cloud maps."""

from pathlib import Path

from .errors import DegenerateSceneError, DegenerateVicinityError, UndefinedCorrelationError
from .geometry import PointCloud, PoseSE3, Trajectory, aggregate_map, compose, inverse
from .metrics import MapEvaluator, MetricResult, mme, mom, mpv, omme
from .ortho import ExtractConfig, OrthoSubset, extract_orthogonal_subset
from .spatial import IndexConfig, SpatialIndex
from .stats import kendall, pearson, spearman
from .trajectory_metrics import rpe_1d, rpe_translation

__version__ = "0.1.0"


def data_path(name: str = "") -> Path:
    """Location of a bundled data file or directory."""
    return Path(__file__).parent / "data" / name


__all__ = [
    "DegenerateSceneError", "DegenerateVicinityError", "UndefinedCorrelationError",
    "PointCloud", "PoseSE3", "Trajectory", "aggregate_map", "compose", "inverse",
    "MapEvaluator", "MetricResult", "mme", "mom", "mpv", "omme",
    "ExtractConfig", "OrthoSubset", "extract_orthogonal_subset",
    "IndexConfig", "SpatialIndex", "kendall", "pearson", "spearman",
    "rpe_1d", "rpe_translation", "data_path",
]
