"""
Typed ingestion of mixed datasets

Parses the JSON schema document, reads an RFC-4180 CSV table against it,
integer-codes the discrete columns and standardizes the continuous ones.
The resulting MixedDataset is immutable and safe to share across threads.
"""

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from mixclus.errors import DataError, SchemaError

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
COUNT = "count"
ORDINAL = "ordinal"
CATEGORICAL = "categorical"

KINDS = (CONTINUOUS, BINARY, COUNT, ORDINAL, CATEGORICAL)
DISCRETE_KINDS = (BINARY, COUNT, ORDINAL, CATEGORICAL)

# Cells treated as missing unless declared as a level of their column; rows holding one are dropped
MISSING_MARKERS = frozenset({"", "NA", "NaN", "nan", "?"})


@dataclass(frozen=True)
class VariableSpec:
    """One declared column"""
    name: str
    kind: str
    levels: Optional[Tuple[str, ...]] = None
    trials: Optional[int] = None

    @property
    def is_discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    @property
    def n_levels(self) -> int:
        """Size of the support of the coded variable (0 for continuous)"""
        if self.kind == BINARY:
            return 2
        if self.kind in (ORDINAL, CATEGORICAL):
            return len(self.levels or ())
        if self.kind == COUNT:
            return int(self.trials or 0) + 1
        return 0


@dataclass(frozen=True)
class Schema:
    """Ordered list of column declarations"""
    columns: Tuple[VariableSpec, ...]

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def continuous(self) -> List[VariableSpec]:
        return [c for c in self.columns if not c.is_discrete]

    @property
    def discrete(self) -> List[VariableSpec]:
        return [c for c in self.columns if c.is_discrete]

    def __len__(self) -> int:
        return len(self.columns)

    def to_dict(self) -> Dict[str, Any]:
        out = []
        for spec in self.columns:
            entry: Dict[str, Any] = {"name": spec.name, "kind": spec.kind}
            if spec.levels is not None:
                entry["levels"] = list(spec.levels)
            if spec.trials is not None:
                entry["trials"] = spec.trials
            out.append(entry)
        return {"columns": out}


@dataclass(frozen=True)
class MixedDataset:
    """
    Column-typed observation matrix

    y_C holds the standardized continuous block in schema order, y_D the
    integer codes of the discrete block in schema order. ``schema`` is the
    resolved schema (count trials filled in).
    """
    y_C: np.ndarray
    y_D: np.ndarray
    schema: Schema
    standardization: Tuple[Tuple[float, float], ...]
    dropped_rows: int = 0
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return int(self.y_C.shape[0])

    @property
    def p_C(self) -> int:
        return int(self.y_C.shape[1])

    @property
    def p_D(self) -> int:
        return int(self.y_D.shape[1])

    @property
    def continuous_specs(self) -> List[VariableSpec]:
        return self.schema.continuous

    @property
    def discrete_specs(self) -> List[VariableSpec]:
        return self.schema.discrete

    def decode(self, name: str) -> List[str]:
        """Map a discrete column's codes back to its level labels"""
        for j, spec in enumerate(self.discrete_specs):
            if spec.name == name:
                return [_decode_value(spec, int(v)) for v in self.y_D[:, j]]
        raise DataError(f"{name!r} is not a discrete column")

    def gllvm_view(self, include_continuous: bool) -> Tuple[List[VariableSpec], np.ndarray]:
        """
        Variables fed through the GLLVM layer and their values

        With ``include_continuous`` every column is returned in schema order
        (continuous values standardized); otherwise only the discrete block.
        """
        if not include_continuous:
            return list(self.discrete_specs), self.y_D.astype(float)
        specs: List[VariableSpec] = []
        cols: List[np.ndarray] = []
        ic = idd = 0
        for spec in self.schema.columns:
            specs.append(spec)
            if spec.is_discrete:
                cols.append(self.y_D[:, idd].astype(float))
                idd += 1
            else:
                cols.append(self.y_C[:, ic])
                ic += 1
        return specs, np.column_stack(cols) if cols else np.zeros((self.n, 0))


def _decode_value(spec: VariableSpec, code: int) -> str:
    if spec.levels is not None:
        return spec.levels[code]
    return str(code)


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


# ── Schema ─────────────────────────────────────────────────────────────────

def parse_schema(text: str) -> Schema:
    """
    Parse a schema document

    Args:
        text: JSON ``{"columns": [{"name", "kind", "levels", "trials"}]}``

    Raises:
        SchemaError: malformed document, duplicate column, missing levels
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed schema document: {e}")

    if not isinstance(document, dict) or not isinstance(document.get("columns"), list):
        raise SchemaError("malformed schema document: expected an object with a 'columns' list")
    if not document["columns"]:
        raise SchemaError("schema must declare at least one column")

    seen = set()
    specs: List[VariableSpec] = []
    for entry in document["columns"]:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise SchemaError(f"malformed column entry: {entry!r}")
        name = str(entry["name"])
        kind = str(entry["kind"]).lower()
        if name in seen:
            raise SchemaError(f"duplicate column {name!r}")
        seen.add(name)
        if kind not in KINDS:
            raise SchemaError(f"column {name!r}: unknown kind {kind!r}")

        levels = entry.get("levels")
        trials = entry.get("trials")
        if kind in (ORDINAL, CATEGORICAL):
            if not levels:
                raise SchemaError(f"column {name!r}: {kind} column requires levels")
        if levels is not None:
            if kind not in (ORDINAL, CATEGORICAL, BINARY):
                raise SchemaError(f"column {name!r}: levels not allowed for {kind}")
            levels = tuple(str(v) for v in levels)
            if len(set(levels)) != len(levels) or not levels:
                raise SchemaError(f"column {name!r}: levels must be non-empty and unique")
            if kind == BINARY and len(levels) != 2:
                raise SchemaError(f"column {name!r}: binary column needs exactly 2 levels")
        if trials is not None:
            if kind != COUNT:
                raise SchemaError(f"column {name!r}: trials only allowed for count columns")
            if not isinstance(trials, int) or trials < 1:
                raise SchemaError(f"column {name!r}: trials must be a positive integer")

        specs.append(VariableSpec(name=name, kind=kind, levels=levels, trials=trials))

    return Schema(columns=tuple(specs))


def load_schema_file(path: str) -> Schema:
    return parse_schema(Path(path).read_text(encoding="utf-8"))


# ── Dataset ────────────────────────────────────────────────────────────────

def standardize(values: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Center and scale to unit population variance; constant columns keep std 1"""
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std <= 0.0 or not np.isfinite(std):
        std = 1.0
    return (values - mean) / std, mean, std


def _code_column(spec: VariableSpec, cells: Sequence[str]) -> np.ndarray:
    if spec.levels is not None:
        index = {label: i for i, label in enumerate(spec.levels)}
        codes = np.empty(len(cells), dtype=np.int64)
        for i, cell in enumerate(cells):
            if cell not in index:
                raise DataError(f"column {spec.name!r}: unknown level {cell!r}")
            codes[i] = index[cell]
        return codes

    codes = np.empty(len(cells), dtype=np.int64)
    for i, cell in enumerate(cells):
        try:
            value = float(cell)
        except ValueError:
            raise DataError(f"column {spec.name!r}: non-integer value {cell!r}")
        if value != int(value):
            raise DataError(f"column {spec.name!r}: non-integer value {cell!r}")
        codes[i] = int(value)

    if spec.kind == BINARY and not np.isin(codes, (0, 1)).all():
        raise DataError(f"column {spec.name!r}: binary values must be 0/1 without levels")
    if spec.kind == COUNT and (codes < 0).any():
        raise DataError(f"column {spec.name!r}: negative count")
    return codes


def load_dataset(csv: str, schema: Schema) -> MixedDataset:
    """
    Read a CSV table against a schema

    Continuous columns are standardized, discrete columns coded against
    their levels. Rows holding a missing cell are dropped with a warning.

    Raises:
        DataError: missing column, unknown level, negative count,
            non-numeric continuous cell
    """
    frame = pd.read_csv(io.StringIO(csv), dtype=str, keep_default_na=False)
    frame.columns = [c.strip() for c in frame.columns]

    missing_cols = [name for name in schema.names if name not in frame.columns]
    if missing_cols:
        raise DataError(f"columns missing from data: {missing_cols}")
    extra = [c for c in frame.columns if c not in schema.names]
    if extra:
        logger.warning(f"Ignoring columns absent from schema: {extra}")

    frame = frame[schema.names].apply(lambda col: col.str.strip())
    missing_mask = np.zeros(len(frame), dtype=bool)
    for spec in schema.columns:
        # a declared level is data, even when it reads like a marker
        markers = MISSING_MARKERS - set(spec.levels or ())
        missing_mask |= frame[spec.name].isin(markers).to_numpy()
    dropped = int(missing_mask.sum())
    notes: List[str] = []
    if dropped:
        logger.warning(f"Dropped {dropped} rows with missing cells")
        notes.append(f"dropped {dropped} rows with missing cells")
        frame = frame.loc[~missing_mask]
    if len(frame) == 0:
        raise DataError("no complete rows in data")

    cont_cols: List[np.ndarray] = []
    disc_cols: List[np.ndarray] = []
    scaling: List[Tuple[float, float]] = []
    resolved: List[VariableSpec] = []

    for spec in schema.columns:
        cells = frame[spec.name].tolist()
        if spec.kind == CONTINUOUS:
            try:
                values = np.array([float(c) for c in cells], dtype=float)
            except ValueError as e:
                raise DataError(f"column {spec.name!r}: non-numeric value ({e})")
            if not np.isfinite(values).all():
                raise DataError(f"column {spec.name!r}: non-finite value")
            scaled, mean, std = standardize(values)
            if np.std(values) <= 0.0:
                logger.warning(f"Column {spec.name!r} is constant; std set to 1")
                notes.append(f"constant column {spec.name}")
            cont_cols.append(scaled)
            scaling.append((mean, std))
            resolved.append(spec)
            continue

        codes = _code_column(spec, cells)
        if spec.kind == COUNT:
            observed_max = int(codes.max())
            if spec.trials is None:
                spec = VariableSpec(spec.name, spec.kind, None, max(observed_max, 1))
            elif spec.trials < observed_max:
                raise DataError(
                    f"column {spec.name!r}: trials {spec.trials} below observed max {observed_max}"
                )
        disc_cols.append(codes)
        resolved.append(spec)

    n = len(frame)
    y_C = np.column_stack(cont_cols) if cont_cols else np.zeros((n, 0))
    y_D = np.column_stack(disc_cols).astype(np.int64) if disc_cols else np.zeros((n, 0), dtype=np.int64)

    logger.info(f"Loaded dataset: n={n}, p_C={y_C.shape[1]}, p_D={y_D.shape[1]}")
    return MixedDataset(
        y_C=_freeze(y_C),
        y_D=_freeze(y_D),
        schema=Schema(columns=tuple(resolved)),
        standardization=tuple(scaling),
        dropped_rows=dropped,
        notes=tuple(notes),
    )


def load_dataset_file(path: str, schema: Schema) -> MixedDataset:
    return load_dataset(Path(path).read_text(encoding="utf-8"), schema)


def read_label_file(path: str) -> np.ndarray:
    """Read a label CSV with a header row; the first column holds the labels"""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[1] == 0:
        raise DataError(f"{path}: no label column")
    return frame.iloc[:, 0].str.strip().to_numpy()
