"""
MCEM training loop

Initializes with NSEP, then alternates Monte-Carlo E steps, closed-form
and numerical M steps and identifiability rescaling until the observed
log-likelihood stops improving. Selection passes may shrink the
architecture, after which the model is refit from a fresh initialization.
The returned state is the iteration with the best silhouette over the
whole trace, rows recorded before a refit included.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from mixclus.data import MixedDataset
from mixclus.errors import ConfigError, NumericalError
from mixclus.gaussnet import Architecture, ModelParams, diagonalize_loadings, rescale_layers
from mixclus.mcem import DEFAULT_MAX_INNER, DrawStream, EState, e_step, m_step, posterior_mean
from mixclus.metrics import DistanceMatrix, gower_matrix, silhouette
from mixclus.nsep import InitReport, nsep_init
from mixclus.selection import apply_architecture_update, run_selection
from mixclus.settings import DEFAULT_MC_CAP

logger = logging.getLogger(__name__)


@dataclass
class FitConfig:
    """
    Training options

    Attributes:
        architecture: initial architecture
        seed: seed of NSEP and of every Monte-Carlo stream
        max_iter: MCEM iterations (0 returns the NSEP initialization)
        patience: non-improving iterations tolerated before stopping
        selection_iters: iterations ending with a selection pass
        autoclus: let component pruning reach the clustering layer
        multi_clustering: freeze the tail during selection
        clustering_layer: 1-based tail layer whose components are the clusters
    """
    architecture: Architecture
    seed: int = 0
    max_iter: int = 30
    patience: int = 1
    selection_iters: Tuple[int, ...] = ()
    autoclus: bool = False
    multi_clustering: bool = False
    clustering_layer: int = 1
    threads: int = 1
    mc_cap: int = DEFAULT_MC_CAP
    max_inner: int = DEFAULT_MAX_INNER

    @property
    def policy(self) -> str:
        if self.multi_clustering:
            return "multi_clustering"
        return "autoclus" if self.autoclus else "default"

    def validate(self) -> "FitConfig":
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.max_iter < 0:
            raise ConfigError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.threads < 1 or self.mc_cap < 1:
            raise ConfigError("threads and mc_cap must be >= 1")
        if self.autoclus and self.multi_clustering:
            raise ConfigError("autoclus and multi_clustering are exclusive")
        if any(t < 1 or (self.max_iter and t >= self.max_iter) for t in self.selection_iters):
            raise ConfigError(f"selection_iters must lie in [1, max_iter): {list(self.selection_iters)}")
        if not 1 <= self.clustering_layer <= len(self.architecture.tail):
            raise ConfigError(f"clustering_layer {self.clustering_layer} outside the tail")
        return self


@dataclass
class TraceRow:
    iteration: int
    loglik: float
    silhouette: float
    schedule: Dict[str, List[int]]
    seconds: float
    n_clusters: int
    refit: bool = False

    def to_dict(self, with_timing: bool = False) -> Dict[str, Any]:
        """Row of trace.csv (wall-clock seconds only on request)"""
        row = {
            "iteration": self.iteration,
            "loglik": self.loglik,
            "silhouette": self.silhouette,
            "schedule": ";".join(f"{h}:{'/'.join(map(str, m))}" for h, m in sorted(self.schedule.items())),
            "n_clusters": self.n_clusters,
            "refit": int(self.refit),
        }
        if with_timing:
            row["seconds"] = self.seconds
        return row


@dataclass
class FitResult:
    """Fitted model, trace and per-observation outputs of the selected iteration"""
    params: ModelParams
    trace: List[TraceRow]
    labels: np.ndarray
    labels_by_layer: Dict[int, np.ndarray]
    embeddings: Dict[int, np.ndarray]
    selected_iteration: int
    architecture_final: Architecture
    clustering_layer: int
    estate: EState
    init_report: InitReport = field(default_factory=InitReport)

    @property
    def n_clusters(self) -> int:
        return int(self.architecture_final.tail[self.clustering_layer - 1][1])


# ── Schedule ───────────────────────────────────────────────────────────────

def mc_schedule(n: int, t: int, r: int) -> int:
    """Draws per parent at iteration t for a latent of width r: floor(40 / ln n * t * sqrt r), at least 1"""
    if n < 2:
        raise ConfigError(f"mc_schedule needs n >= 2, got {n}")
    return max(1, int(math.floor(40.0 / math.log(n) * t * math.sqrt(r))))


def head_schedules(arch: Architecture, n: int, t: int) -> Dict[str, List[int]]:
    """Per-level draw counts of every head chain (the data level of a continuous head is 1)"""
    out: Dict[str, List[int]] = {}
    for head in arch.heads:
        widths = [r for r, _ in arch.chain(head)]
        first = [1] if head == "C" else [mc_schedule(n, t, int(arch.embedding_dim))]
        out[head] = first + [mc_schedule(n, t, r) for r in widths]
    return out


# ── Outputs ────────────────────────────────────────────────────────────────

def assign_clusters(estate: EState, layer: int) -> np.ndarray:
    """Most probable component of tail layer ``layer`` (1-based) for each observation"""
    posts = estate.tail.layer_post
    if not 1 <= layer <= len(posts):
        raise ConfigError(f"tail layer {layer} outside 1..{len(posts)}")
    return np.argmax(posts[layer - 1], axis=1)


def latent_embedding(result: FitResult, layer: int) -> np.ndarray:
    """Posterior mean of the input latent of tail layer ``layer`` (1-based)"""
    if layer in result.embeddings:
        return result.embeddings[layer]
    n_tail = len(result.estate.tail.layer_post)
    if not 1 <= layer <= n_tail:
        raise ConfigError(f"tail layer {layer} outside 1..{n_tail}")
    return posterior_mean(result.estate, result.estate.tail.junction + layer)


def _embeddings(estate: EState) -> Dict[int, np.ndarray]:
    return {t: posterior_mean(estate, estate.tail.junction + t)
            for t in range(1, len(estate.tail.layer_post) + 1)}


# ── Loop ───────────────────────────────────────────────────────────────────

@dataclass
class _Best:
    silhouette: float
    iteration: int
    params: ModelParams
    estate: EState
    clustering_layer: int
    report: InitReport


def _better(sil: float, best: Optional[_Best]) -> bool:
    if best is None:
        return True
    if math.isnan(sil):
        return False
    return math.isnan(best.silhouette) or sil > best.silhouette


def fit(dataset: MixedDataset, config: FitConfig) -> FitResult:
    """
    Train a model on a dataset

    Args:
        dataset: loaded mixed dataset
        config: training options

    Returns:
        FitResult of the iteration with the best silhouette
    """
    config.validate()
    arch = config.architecture
    n = dataset.n
    logger.info("=" * 70)
    logger.info(f"mixclus fit: mode={arch.mode}, n={n}, seed={config.seed}")
    logger.info(f"Architecture: {arch.to_dict()}")
    logger.info("=" * 70)

    y_C = dataset.y_C if "C" in arch.heads else None
    y_G = dataset.gllvm_view(arch.mode == "m1")[1] if arch.uses_gllvm else None
    distances: DistanceMatrix = gower_matrix(dataset)

    params, report = nsep_init(dataset, arch, config.seed)
    clustering_layer = config.clustering_layer
    trace: List[TraceRow] = []
    best: Optional[_Best] = None
    best_loglik = -math.inf
    stale = 0
    t_local = 0

    iterations = range(1, config.max_iter + 1) if config.max_iter > 0 else [0]
    for it in iterations:
        started = time.perf_counter()
        t_local += 1
        schedule = head_schedules(arch, n, t_local)
        try:
            estate = e_step(params, y_C, y_G, DrawStream(config.seed, it), schedule,
                            cap=config.mc_cap, threads=config.threads)
        except NumericalError as e:
            raise e.at_iteration(it) from e
        except np.linalg.LinAlgError as e:
            raise NumericalError(str(e), operation="e_step", iteration=it) from e

        labels = assign_clusters(estate, clustering_layer)
        sil = silhouette(labels, distances)
        if _better(sil, best):
            best = _Best(sil, it, params, estate, clustering_layer, report)

        row = TraceRow(iteration=it, loglik=estate.loglik, silhouette=sil, schedule=schedule,
                       seconds=0.0, n_clusters=int(np.unique(labels).size))
        trace.append(row)
        logger.info(f"Iteration {it}: loglik={estate.loglik:.4f}, silhouette={sil:.4f}, "
                    f"clusters={row.n_clusters}")
        if config.max_iter == 0:
            row.seconds = time.perf_counter() - started
            break

        if it in config.selection_iters:
            decision = run_selection(params, estate, y_G, config.policy, clustering_layer)
            if decision.changes(arch):
                arch, _, restart = apply_architecture_update(arch, params, decision)
                logger.info(f"Selection at iteration {it} (restart={restart}): refitting {arch.to_dict()}")
                if clustering_layer > len(arch.tail):
                    logger.warning(f"Clustering layer {clustering_layer} deleted; using tail layer {len(arch.tail)}")
                    clustering_layer = len(arch.tail)
                params, report = nsep_init(dataset, arch, config.seed)
                best_loglik, stale, t_local = -math.inf, 0, 0
                row.refit = True
                row.seconds = time.perf_counter() - started
                continue

        try:
            params = rescale_layers(m_step(estate, params, y_G, config.max_inner, config.threads))
        except NumericalError as e:
            raise e.at_iteration(it) from e
        except np.linalg.LinAlgError as e:
            raise NumericalError(str(e), operation="m_step", iteration=it) from e
        row.seconds = time.perf_counter() - started

        if estate.loglik > best_loglik:
            best_loglik = estate.loglik
            stale = 0
        else:
            stale += 1
            if stale >= max(config.patience, 1):
                logger.info(f"No log-likelihood improvement for {stale} iterations; stopping")
                break

    final = diagonalize_loadings(best.params)
    labels_by_layer = {t: assign_clusters(best.estate, t) for t in range(1, len(final.arch.tail) + 1)}
    result = FitResult(
        params=final,
        trace=trace,
        labels=labels_by_layer[best.clustering_layer],
        labels_by_layer=labels_by_layer,
        embeddings=_embeddings(best.estate),
        selected_iteration=best.iteration,
        architecture_final=final.arch,
        clustering_layer=best.clustering_layer,
        estate=best.estate,
        init_report=best.report,
    )
    logger.info("=" * 70)
    logger.info(f"Selected iteration {best.iteration} (silhouette {best.silhouette:.4f}), "
                f"{result.n_clusters} clusters")
    logger.info("=" * 70)
    return result
