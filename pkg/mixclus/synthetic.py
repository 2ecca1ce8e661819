"""
Seeded synthetic datasets

Used by the tests, the benchmark scripts and the docs. Every generator
returns a SyntheticData holding the raw table, its schema and, when the
data has groups, the true group of each row.
"""

import json
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from mixclus.data import BINARY, CONTINUOUS, MixedDataset, Schema, VariableSpec, load_dataset


@dataclass(frozen=True)
class SyntheticData:
    frame: pd.DataFrame
    schema: Schema
    truth: Optional[np.ndarray] = None

    def to_csv(self) -> str:
        return self.frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")

    def schema_json(self) -> str:
        return json.dumps(self.schema.to_dict(), indent=2)

    def dataset(self) -> MixedDataset:
        return load_dataset(self.to_csv(), self.schema)


def two_group_mixed(n: int = 600, p_continuous: int = 4, p_binary: int = 4,
                    shift: float = 4.0, flip: float = 0.9, seed: int = 0) -> SyntheticData:
    """
    Two balanced groups: continuous blobs shifted by ``shift`` on every
    axis, and a binary block that is mostly 1 in group 1 and mostly 0 in
    group 0 (``flip`` is the agreeing probability)
    """
    rng = np.random.default_rng(seed)
    truth = np.repeat([0, 1], [n - n // 2, n // 2])
    rng.shuffle(truth)

    columns = {}
    specs = []
    for j in range(p_continuous):
        name = f"x{j + 1}"
        columns[name] = rng.standard_normal(n) + shift * truth
        specs.append(VariableSpec(name, CONTINUOUS))
    for j in range(p_binary):
        name = f"b{j + 1}"
        agree = rng.random(n) < flip
        columns[name] = np.where(agree, truth, 1 - truth).astype(int)
        specs.append(VariableSpec(name, BINARY))

    return SyntheticData(pd.DataFrame(columns), Schema(tuple(specs)), truth)


def factor_data(n: int = 2000, p: int = 6, r: int = 2, seed: int = 0) -> Tuple[SyntheticData, np.ndarray, np.ndarray]:
    """
    Gaussian factor-analysis data y = Lambda z + e, z ~ N(0, I), e ~ N(0, diag(psi))

    Returns:
        (data, loading (p, r), psi (p,)) on the scale of the raw columns
    """
    rng = np.random.default_rng(seed)
    loading = rng.uniform(0.5, 1.5, size=(p, r)) * rng.choice([-1.0, 1.0], size=(p, r))
    psi = rng.uniform(0.2, 0.6, size=p)
    z = rng.standard_normal((n, r))
    y = z @ loading.T + rng.standard_normal((n, p)) * np.sqrt(psi)
    names = [f"y{j + 1}" for j in range(p)]
    schema = Schema(tuple(VariableSpec(name, CONTINUOUS) for name in names))
    return SyntheticData(pd.DataFrame(y, columns=names), schema), loading, psi


def two_binary_toy(n: int = 400, intercepts: Tuple[float, float] = (0.3, -0.5),
                   loadings: Tuple[float, float] = (1.2, -0.8), seed: int = 0) -> SyntheticData:
    """Two binary variables driven by one standard-normal latent through logit links"""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    columns = {}
    for j, (a, b) in enumerate(zip(intercepts, loadings)):
        columns[f"b{j + 1}"] = (rng.random(n) < expit(a + b * z)).astype(int)
    schema = Schema(tuple(VariableSpec(name, BINARY) for name in columns))
    return SyntheticData(pd.DataFrame(columns), schema)
