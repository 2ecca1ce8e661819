"""
mixclus command line

    mixclus fit --data D.csv --schema S.json --config C.json [--mode m1] [--seed N]
                [--threads N] [--labels T.csv] --out DIR
    mixclus metrics --pred P.csv [--truth T.csv] --data D.csv --schema S.json
    mixclus gower --data D.csv --schema S.json --out M.csv

Exit codes: 0 success, 1 configuration / schema / data / architecture
error, 2 numerical failure.
"""

import hashlib
import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import typer
import yaml

import mixclus
from mixclus.data import load_dataset_file, load_schema_file, read_label_file
from mixclus.errors import (
    ArchitectureError, ConfigError, DataError, LinkError, NumericalError, SchemaError,
)
from mixclus.gaussnet import Architecture, ModelParams, params_from_dict, params_to_dict
from mixclus.log_setup import configure_logging
from mixclus.metrics import DistanceMatrix, gower_matrix, precision_scores, silhouette
from mixclus.settings import get_settings
from mixclus.trainer import FitConfig, FitResult, fit

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
DEFAULT_SELECTION_ITERS = (3,)
INPUT_ERRORS = (ConfigError, SchemaError, DataError, ArchitectureError, LinkError)

app = typer.Typer(
    name="mixclus",
    help="Cluster mixed-type tabular data with deep Gaussian mixture models",
    add_completion=False,
)


# ── Run configuration ──────────────────────────────────────────────────────

@dataclass
class RunConfig:
    """
    One ``mixclus fit`` run

    Values come from the config file, then from command-line flags (flags
    win). Unset fields take the FitConfig defaults.
    """
    data: Optional[str] = None
    schema: Optional[str] = None
    out: Optional[str] = None
    architecture: Dict[str, Any] = field(default_factory=dict)
    mode: Optional[str] = None
    seed: int = 0
    max_iter: int = 30
    patience: int = 1
    selection_iters: Optional[List[int]] = None
    autoclus: bool = False
    multi_clustering: bool = False
    clustering_layer: int = 1
    threads: Optional[int] = None
    mc_cap: Optional[int] = None
    labels: Optional[str] = None

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        return cls(**values)

    def merged(self, **overrides: Any) -> "RunConfig":
        """Copy with every non-None override applied"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def resolved(self) -> "RunConfig":
        """Fill threads / mc_cap from the environment settings"""
        settings = get_settings()
        return replace(
            self,
            threads=self.threads if self.threads is not None else settings.threads,
            mc_cap=self.mc_cap if self.mc_cap is not None else settings.mc_cap,
        )

    def build_architecture(self) -> Architecture:
        spec = dict(self.architecture)
        mode = self.mode or spec.get("mode")
        if not mode:
            raise ConfigError("no mode given (config 'mode' or --mode)")
        return Architecture.from_dict(spec, mode=mode).validate()

    def validate(self) -> "RunConfig":
        for name in ("data", "schema", "out"):
            if not getattr(self, name):
                raise ConfigError(f"missing required setting {name!r}")
        for name in ("data", "schema", "labels"):
            path = getattr(self, name)
            if path and not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        self.build_architecture()
        return self

    def to_fit_config(self) -> FitConfig:
        if self.selection_iters is None:
            selection = tuple(t for t in DEFAULT_SELECTION_ITERS if t < self.max_iter)
        else:
            selection = tuple(int(t) for t in self.selection_iters)
        return FitConfig(
            architecture=self.build_architecture(),
            seed=self.seed,
            max_iter=self.max_iter,
            patience=self.patience,
            selection_iters=selection,
            autoclus=self.autoclus,
            multi_clustering=self.multi_clustering,
            clustering_layer=self.clustering_layer,
            threads=int(self.threads or 1),
            mc_cap=int(self.mc_cap or get_settings().mc_cap),
        ).validate()

    def digest(self) -> str:
        """sha256 of the settings that determine the fitted model"""
        payload = asdict(self)
        for volatile in ("out", "threads", "labels"):
            payload.pop(volatile)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON or YAML (.yaml / .yml) configuration document"""
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        values = yaml.safe_load(text) if path.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: cannot parse configuration: {e}")
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    return values


# ── Artifacts ──────────────────────────────────────────────────────────────

def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: Path, payload: Dict[str, Any]) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, frame: pd.DataFrame, header: bool = True) -> None:
    frame.to_csv(path, index=False, header=header, float_format=CSV_FLOAT_FORMAT,
                 na_rep="nan", lineterminator="\n")


def load_model(path: str) -> ModelParams:
    """Read a model.json written by ``mixclus fit``"""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read model file {path}: {e}")
    return params_from_dict(document).validate()


def _versions() -> Dict[str, str]:
    import scipy
    import sklearn
    return {
        "mixclus": mixclus.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "pandas": pd.__version__,
    }


def write_artifacts(out: Path, result: FitResult, run: RunConfig, metrics: Dict[str, Any]) -> List[str]:
    """Write every fit artifact into ``out`` and return the file names"""
    out.mkdir(parents=True, exist_ok=True)
    written: List[str] = []

    def emit_csv(name: str, frame: pd.DataFrame) -> None:
        write_csv(out / name, frame)
        written.append(name)

    emit_csv("labels.csv", pd.DataFrame({"cluster": result.labels.astype(int)}))
    if run.multi_clustering:
        for t, labels in sorted(result.labels_by_layer.items()):
            emit_csv(f"labels_layer{t}.csv", pd.DataFrame({"cluster": labels.astype(int)}))
    for t, Z in sorted(result.embeddings.items()):
        emit_csv(f"embedding_layer{t}.csv",
                 pd.DataFrame(Z, columns=[f"z{k + 1}" for k in range(Z.shape[1])]))
    emit_csv("trace.csv", pd.DataFrame([row.to_dict() for row in result.trace]))

    write_json(out / "metrics.json", metrics)
    write_json(out / "model.json", params_to_dict(result.params))
    write_json(out / "run_meta.json", {
        "seed": run.seed,
        "config_hash": run.digest(),
        "config": asdict(run),
        "versions": _versions(),
        "initial_architecture": run.build_architecture().to_dict(),
        "final_architecture": result.architecture_final.to_dict(),
        "selected_iteration": result.selected_iteration,
        "clustering_layer": result.clustering_layer,
        "n_clusters": result.n_clusters,
        "iteration_seconds": [row.seconds for row in result.trace],
        "init": result.init_report.to_dict(),
    })
    written += ["metrics.json", "model.json", "run_meta.json"]
    return written


def metrics_payload(labels: Sequence, distances: DistanceMatrix, truth: Optional[np.ndarray] = None) -> Dict[str, Any]:
    labels = np.asarray(labels)
    payload: Dict[str, Any] = {
        "silhouette": silhouette(labels, distances),
        "n_clusters": int(np.unique(labels).size),
    }
    if truth is not None:
        if len(truth) != len(labels):
            raise DataError(f"{len(labels)} labels but {len(truth)} ground-truth rows")
        payload["micro"], payload["macro"] = precision_scores(labels, truth)
    return payload


# ── Commands ───────────────────────────────────────────────────────────────

def _guarded(action: Callable[[], None]) -> None:
    """Run a command body, mapping library errors to exit codes"""
    try:
        try:
            action()
        except np.linalg.LinAlgError as e:
            raise NumericalError(str(e), operation="linear algebra") from e
    except INPUT_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1)
    except NumericalError as e:
        logger.error(f"NumericalError: {e}")
        typer.echo(f"Numerical failure: {e}", err=True)
        raise typer.Exit(2)


@app.callback()
def _setup(verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable debug logging")) -> None:
    settings = get_settings()
    configure_logging("DEBUG" if verbose else settings.log_level, settings.log_file)


@app.command("fit")
def cmd_fit(
    data: Optional[Path] = typer.Option(None, "--data", "-d", help="Data CSV with a header row"),
    schema: Optional[Path] = typer.Option(None, "--schema", "-s", help="Schema JSON"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Run configuration (JSON or YAML)"),
    mode: Optional[str] = typer.Option(None, "--mode", "-m", help="m1, m2, ddgmm or dgmm"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    threads: Optional[int] = typer.Option(None, "--threads", "-t", help="Worker threads (default MIXCLUS_THREADS)"),
    max_iter: Optional[int] = typer.Option(None, "--max-iter", help="MCEM iterations"),
    patience: Optional[int] = typer.Option(None, "--patience", help="Non-improving iterations before stopping"),
    labels: Optional[Path] = typer.Option(None, "--labels", "-l", help="Ground-truth label CSV for precision metrics"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
) -> None:
    """
    Fit a model and write labels, embeddings, trace, metrics and the model
    """
    def run() -> None:
        base = RunConfig.from_mapping(load_config_file(config)) if config else RunConfig()
        rc = base.merged(
            data=str(data) if data else None, schema=str(schema) if schema else None,
            out=str(out) if out else None, labels=str(labels) if labels else None,
            mode=mode, seed=seed, threads=threads, max_iter=max_iter, patience=patience,
        ).resolved().validate()

        dataset = load_dataset_file(rc.data, load_schema_file(rc.schema))
        truth = read_label_file(rc.labels) if rc.labels else None
        typer.echo(f"Loaded {dataset.n} rows ({dataset.p_C} continuous, {dataset.p_D} discrete)")

        result = fit(dataset, rc.to_fit_config())
        metrics = metrics_payload(result.labels, gower_matrix(dataset), truth)
        metrics["selected_iteration"] = result.selected_iteration
        written = write_artifacts(Path(rc.out), result, rc, metrics)

        typer.echo(f"✅ {result.n_clusters} clusters, silhouette {metrics['silhouette']:.4f}")
        if "micro" in metrics:
            typer.echo(f"   micro precision {metrics['micro']:.4f}, macro {metrics['macro']:.4f}")
        typer.echo(f"   wrote {', '.join(written)} to {rc.out}")

    _guarded(run)


@app.command("metrics")
def cmd_metrics(
    pred: Path = typer.Option(..., "--pred", "-p", help="Predicted label CSV"),
    data: Path = typer.Option(..., "--data", "-d", help="Data CSV"),
    schema: Path = typer.Option(..., "--schema", "-s", help="Schema JSON"),
    truth: Optional[Path] = typer.Option(None, "--truth", help="Ground-truth label CSV"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write metrics.json here"),
) -> None:
    """
    Silhouette (Gower distances) of a labelling, plus precision against a truth file
    """
    def run() -> None:
        dataset = load_dataset_file(str(data), load_schema_file(str(schema)))
        labels = read_label_file(str(pred))
        if len(labels) != dataset.n:
            raise DataError(f"{len(labels)} labels but {dataset.n} data rows")
        payload = metrics_payload(labels, gower_matrix(dataset),
                                  read_label_file(str(truth)) if truth else None)
        if out:
            write_json(out, payload)
        typer.echo(json.dumps(_jsonable(payload), indent=2, sort_keys=True))

    _guarded(run)


@app.command("gower")
def cmd_gower(
    data: Path = typer.Option(..., "--data", "-d", help="Data CSV"),
    schema: Path = typer.Option(..., "--schema", "-s", help="Schema JSON"),
    out: Path = typer.Option(..., "--out", "-o", help="Distance matrix CSV"),
) -> None:
    """
    Write the n x n Gower distance matrix (no header, 17 significant digits)
    """
    def run() -> None:
        D = gower_matrix(load_dataset_file(str(data), load_schema_file(str(schema))))
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(out, pd.DataFrame(D.values), header=False)
        typer.echo(f"Wrote {D.n}x{D.n} Gower matrix to {out}")

    _guarded(run)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
