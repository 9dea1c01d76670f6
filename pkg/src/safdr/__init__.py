"""Feature selection by simulated annealing on the Fisher discriminant ratio."""
__version__ = "0.1.0"

from .annealer import AnnealConfig, AnnealResult, anneal  # noqa: E402
from .dataset import Dataset, load_csv  # noqa: E402
from .scatter import FeatureSubset, compute_scatter, fdr  # noqa: E402
from .selection import CvConfig, run_benchmark, run_cv  # noqa: E402

__all__ = [
    "AnnealConfig", "AnnealResult", "CvConfig", "Dataset", "FeatureSubset", "anneal",
    "compute_scatter", "fdr", "load_csv", "run_benchmark", "run_cv",
]
