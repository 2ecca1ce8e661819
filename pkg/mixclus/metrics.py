"""
Clustering evaluation for mixed data

- Gower distance between observations
- Silhouette coefficient averaged per cluster, then over clusters
- Micro / macro precision after optimal label alignment
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import silhouette_samples

from mixclus.data import BINARY, CATEGORICAL, MixedDataset
from mixclus.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric (n, n) dissimilarities in [0, 1] with a zero diagonal"""
    values: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def scaled(self, factor: float) -> "DistanceMatrix":
        return DistanceMatrix(self.values * factor)


def gower_matrix(dataset: MixedDataset) -> DistanceMatrix:
    """
    Gower distance of every pair of observations

    Continuous, count and ordinal features contribute their absolute
    difference divided by the feature range; binary and categorical
    features contribute a 0/1 mismatch. Features are equally weighted and
    zero-range features are skipped.
    """
    n = dataset.n
    if n < 2:
        raise DataError("Gower distance needs at least two observations")

    total = np.zeros((n, n))
    used = 0
    for j, spec in enumerate(dataset.continuous_specs):
        used += _add_numeric(total, dataset.y_C[:, j], spec.name)
    for j, spec in enumerate(dataset.discrete_specs):
        column = dataset.y_D[:, j].astype(float)
        if spec.kind in (BINARY, CATEGORICAL):
            total += column[:, None] != column[None, :]
            used += 1
        else:
            used += _add_numeric(total, column, spec.name)

    if used == 0:
        logger.warning("Gower: every feature has zero range; all distances are 0")
        return DistanceMatrix(np.zeros((n, n)))
    D = total / used
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return DistanceMatrix(D)


def _add_numeric(total: np.ndarray, column: np.ndarray, name: str) -> int:
    span = float(column.max() - column.min())
    if span <= 0:
        logger.warning(f"Gower: feature {name!r} has zero range and is skipped")
        return 0
    total += np.abs(column[:, None] - column[None, :]) / span
    return 1


def silhouette(labels: Sequence, D: DistanceMatrix) -> float:
    """
    Silhouette coefficient: per-point scores averaged within each cluster,
    then over clusters

    Points alone in their cluster score 0. Returns nan when fewer than two
    clusters are occupied.
    """
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    n_clusters = int(codes.max()) + 1 if codes.size else 0
    if n_clusters < 2:
        return float("nan")
    if n_clusters >= D.n:
        return 0.0
    scores = silhouette_samples(D.values, codes, metric="precomputed")
    per_cluster = [scores[codes == k].mean() for k in range(n_clusters)]
    return float(np.mean(per_cluster))


def precision_scores(pred: Sequence, truth: Sequence) -> Tuple[float, float]:
    """
    Micro and macro precision after aligning predicted clusters to classes

    Clusters are matched one-to-one to classes by maximizing the number of
    agreeing observations. Micro precision is the share of observations
    whose cluster maps to their class; macro precision is the mean over
    classes of the precision of the cluster mapped to each class (0 when
    no cluster maps to it).
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.size == 0:
        raise DataError("precision needs at least one observation")
    if pred.shape != truth.shape:
        raise DataError(f"label lengths differ: {pred.size} predicted, {truth.size} true")

    _, p_codes = np.unique(pred, return_inverse=True)
    classes, t_codes = np.unique(truth, return_inverse=True)
    table = np.zeros((p_codes.max() + 1, t_codes.max() + 1))
    np.add.at(table, (p_codes, t_codes), 1.0)

    rows, cols = linear_sum_assignment(table, maximize=True)
    matched = table[rows, cols].sum()
    micro = float(matched / pred.size)

    per_class = np.zeros(len(classes))
    for r, c in zip(rows, cols):
        size = table[r].sum()
        per_class[c] = table[r, c] / size if size > 0 else 0.0
    macro = float(per_class.mean())
    return micro, macro
