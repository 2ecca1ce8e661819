"""mixclus - Mixed Deep Gaussian Mixture Model clustering for mixed-type data"""

__version__ = "1.0.0"
__author__ = "mixclus Team"

from mixclus.data import Schema, VariableSpec, load_dataset, parse_schema  # noqa: E402
from mixclus.gaussnet import Architecture  # noqa: E402
from mixclus.metrics import gower_matrix, precision_scores, silhouette  # noqa: E402
from mixclus.trainer import FitConfig, FitResult, fit  # noqa: E402

__all__ = [
    "Architecture", "FitConfig", "FitResult", "Schema", "VariableSpec",
    "fit", "gower_matrix", "load_dataset", "parse_schema", "precision_scores", "silhouette",
]
