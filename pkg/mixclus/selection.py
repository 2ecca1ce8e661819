"""
On-the-fly architecture selection

A selection pass reads the current E-step state and decides, per layer,
which components and which latent dimensions survive, and which layers are
deleted. Policies:

- default           every component prunable except the clustering layer's
- autoclus          every component prunable (the cluster count is learned)
- multi_clustering  tail components and tail depth frozen
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from mixclus.data import BINARY, CATEGORICAL, CONTINUOUS, COUNT, ORDINAL
from mixclus.errors import ArchitectureError
from mixclus.gaussnet import Architecture, LayerParams, ModelParams, condition_gaussian
from mixclus.links import LinkParams
from mixclus.mcem import EState
from mixclus.nsep import irls_binomial

logger = logging.getLogger(__name__)

WALD_LEVEL = 0.10
PATH_VOTE = 0.25
PC_THRESHOLD = 0.2
TAIL_STOP_WIDTH = 1
HEAD_STOP_WIDTH = 2
SECTIONS = ("C", "D", "tail")


@dataclass
class SelectionDecision:
    """
    Outcome of one selection pass

    components / dims are keyed by section ("C", "D", "tail") with one entry
    per layer: kept component indices and kept dimensions of the layer's
    input latent. ``embedding`` holds the kept embedding dimensions.
    """
    components: Dict[str, List[List[int]]] = field(default_factory=dict)
    dims: Dict[str, List[List[int]]] = field(default_factory=dict)
    embedding: Optional[List[int]] = None
    deleted: Dict[str, List[bool]] = field(default_factory=dict)
    restart_required: bool = False

    @classmethod
    def identity(cls, arch: Architecture) -> "SelectionDecision":
        """Decision that keeps everything"""
        d = cls()
        for section in SECTIONS:
            specs = _section_specs(arch, section)
            d.components[section] = [list(range(k)) for _, k in specs]
            d.dims[section] = [list(range(r)) for r, _ in specs]
            d.deleted[section] = [False] * len(specs)
        if arch.uses_gllvm:
            d.embedding = list(range(int(arch.embedding_dim)))
        return d

    def changes(self, arch: Architecture) -> bool:
        return self != SelectionDecision.identity(arch)


def _section_specs(arch: Architecture, section: str) -> Tuple[Tuple[int, int], ...]:
    return arch.tail if section == "tail" else arch.head_layers(section)


def _section_layers(params: ModelParams, section: str) -> List[LayerParams]:
    return params.layers_tail if section == "tail" else params.head(section)


# ── Components ─────────────────────────────────────────────────────────────

def prune_components(params: ModelParams, section: str, index: int, frozen: bool = False) -> List[int]:
    """
    Components of a layer whose probability reaches 1 / (4 K)

    The most probable component always survives; a frozen layer keeps all.
    """
    layer = _section_layers(params, section)[index - 1]
    if frozen:
        return list(range(layer.K))
    threshold = 1.0 / (4.0 * layer.K)
    kept = [k for k in range(layer.K) if layer.pi[k] >= threshold]
    if not kept:
        kept = [int(np.argmax(layer.pi))]
    if len(kept) < layer.K:
        logger.info(f"Selection: {section} layer {index} drops components "
                    f"{sorted(set(range(layer.K)) - set(kept))} (threshold {threshold:.4f})")
    return kept


# ── Embedding dimensions ───────────────────────────────────────────────────

def _wald_pvalues(beta: np.ndarray, info: np.ndarray) -> np.ndarray:
    """Two-sided Wald p-values of the slope coefficients (intercept excluded)"""
    cov = linalg.pinvh(info)
    se = np.sqrt(np.maximum(np.diag(cov), 1e-300))
    return 2.0 * stats.norm.sf(np.abs(beta / se))[1:]


def _logit_pvalues(y: np.ndarray, X: np.ndarray, w: np.ndarray, trials: int = 1) -> np.ndarray:
    design = np.column_stack([np.ones(X.shape[0]), X])
    beta, info = irls_binomial(y, design, trials=trials, weights=w)
    return _wald_pvalues(beta, info)


def _linear_pvalues(y: np.ndarray, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    design = np.column_stack([np.ones(X.shape[0]), X])
    gram = design.T @ (design * w[:, None])
    beta = linalg.solve(gram + 1e-10 * np.eye(gram.shape[0]), design.T @ (w * y), assume_a="sym")
    resid = y - design @ beta
    dof = max(float(w.sum()) - design.shape[1], 1.0)
    sigma2 = float(w @ resid ** 2) / dof
    se = np.sqrt(np.maximum(np.diag(sigma2 * linalg.pinvh(gram)), 1e-300))
    return 2.0 * stats.t.sf(np.abs(beta / se), dof)[1:]


def variable_pvalues(link: LinkParams, y: np.ndarray, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Per-dimension p-values of one variable's dependence on the latent X

    Binary and count use a (binomial) logistic fit, ordinal a logistic fit
    of the split at the median code, categorical one logistic fit per
    non-reference level (the smallest p-value per dimension is kept), and
    continuous a weighted least squares t-test.
    """
    if link.kind == BINARY:
        return _logit_pvalues(y, X, w)
    if link.kind == COUNT:
        return _logit_pvalues(y, X, w, trials=link.trials)
    if link.kind == ORDINAL:
        order = np.argsort(y, kind="stable")
        cum = np.cumsum(w[order])
        med = y[order][min(int(np.searchsorted(cum, 0.5 * cum[-1])), y.size - 1)]
        above = (y > med).astype(float)
        if above.min() == above.max():
            above = (y >= med).astype(float)
        return _logit_pvalues(above, X, w)
    if link.kind == CATEGORICAL:
        best = np.ones(X.shape[1])
        for level in range(1, link.n_levels):
            rows = (y == 0) | (y == level)
            if w[rows & (y == level)].sum() <= 0 or w[rows & (y == 0)].sum() <= 0:
                continue
            best = np.minimum(best, _logit_pvalues((y[rows] == level).astype(float), X[rows], w[rows]))
        return best
    if link.kind == CONTINUOUS:
        return _linear_pvalues(y, X, w)
    raise ArchitectureError(f"unknown link kind {link.kind!r}")


def select_embedding_dims(y_G: np.ndarray, estate: EState, links: Sequence[LinkParams],
                          alpha: float = WALD_LEVEL, vote: float = PATH_VOTE,
                          min_keep: int = 1) -> List[int]:
    """
    Embedding dimensions that explain the GLLVM-linked variables

    For every path with enough posterior mass, each variable is regressed
    on the path's posterior-mean embedding. A dimension is dropped when it
    is insignificant at level ``alpha`` in at least ``vote`` of the pooled
    (variable, path) pairs. At least ``min_keep`` dimensions survive.
    """
    hd = estate.heads["D"]
    means = hd.path_means(0)
    post = hd.post
    n, S, d = means.shape
    if d <= 1:
        return list(range(d))

    insignificant = np.zeros(d)
    pairs = 0
    for s in range(S):
        w = post[:, s]
        if w.sum() < d + 2:
            continue
        X = means[:, s, :]
        for j, link in enumerate(links):
            p_values = variable_pvalues(link, y_G[:, j], X, w)
            insignificant += p_values > alpha
            pairs += 1
    if pairs == 0:
        logger.info("Selection: no path carries enough mass to test embedding dimensions")
        return list(range(d))

    share = insignificant / pairs
    kept = [k for k in range(d) if share[k] < vote]
    floor = min(max(min_keep, 1), d)
    if len(kept) < floor:
        kept = sorted(np.argsort(share, kind="stable")[:floor].tolist())
    logger.info(f"Selection: embedding insignificance shares {np.round(share, 3).tolist()}, kept {kept}")
    return kept


# ── DGMM dimensions ────────────────────────────────────────────────────────

def first_pc_contributions(groups: np.ndarray) -> np.ndarray:
    """
    Mean absolute first-principal-component loading per dimension

    groups: (G, m, d) draws, G groups of m >= 2 draws sharing a parent.
    """
    centered = groups - groups.mean(axis=1, keepdims=True)
    scatter = np.einsum("gma,gmb->gab", centered, centered)
    _, vecs = np.linalg.eigh(scatter)
    top = np.abs(vecs[:, :, -1])
    return top.mean(axis=0)


def select_dgmm_dims(estate: EState, params: ModelParams, section: str, index: int,
                     threshold: float = PC_THRESHOLD, min_keep: int = 1) -> List[int]:
    """
    Dimensions of a layer's input latent that carry its conditional spread

    Draws of the latent given each parent draw and path are summarized by
    their first principal component; dimensions whose mean absolute
    loading stays below ``threshold`` are dropped, keeping at least
    ``min_keep``. With one draw per
    parent the conditional covariance of the path is used instead.
    """
    if section in ("C", "D"):
        hd, level = estate.heads[section], index
    else:
        hd = estate.heads[estate.tail.source]
        level = estate.tail.junction + index
    draws = hd.draws[level]
    B, S, N, d = draws.shape
    if d <= 1:
        return list(range(d))

    m = hd.children[level]
    if m >= 2:
        contrib = first_pc_contributions(draws.reshape(B * S * (N // m), m, d))
    else:
        layer = params.chain(hd.head)[level - 1]
        k = hd.table.paths[:, level - 1]
        _, _, xi = condition_gaussian(layer.eta[k], layer.lam[k], layer.psi[k],
                                      hd.table.mu[level], hd.table.sigma[level])
        _, vecs = np.linalg.eigh(xi)
        contrib = np.abs(vecs[:, :, -1]).mean(axis=0)

    kept = [k for k in range(d) if contrib[k] >= threshold]
    floor = min(max(min_keep, 1), d)
    if len(kept) < floor:
        kept = sorted(np.argsort(-contrib, kind="stable")[:floor].tolist())
    logger.debug(f"Selection: {section} layer {index} PC contributions {np.round(contrib, 3).tolist()}")
    return kept


# ── Planning ───────────────────────────────────────────────────────────────

def plan_layer_deletions(arch: Architecture, decision: SelectionDecision, freeze_tail_depth: bool = False,
                         keep_tail: int = 1) -> SelectionDecision:
    """
    Apply the deletion rules and restore strictly decreasing widths

    Widths are truncated to decrease strictly along every chain. A head
    layer following one whose input narrowed to two dimensions or fewer is
    deleted with the rest of its head (restart required). A tail layer
    following one of width one is deleted with the rest of the tail, the
    first ``keep_tail`` tail layers excepted.
    """
    restart = False
    ends: List[int] = []
    for head in arch.heads:
        dims = decision.dims[head]
        bound = len(decision.embedding) if head == "D" and decision.embedding is not None else None
        for j in range(len(dims)):
            kept = dims[j] if bound is None else dims[j][:bound - 1]
            if not kept or (j > 0 and len(dims[j - 1]) <= HEAD_STOP_WIDTH):
                decision.deleted[head][j:] = [True] * (len(dims) - j)
                restart = True
                logger.info(f"Selection: head {head} ends at layer {j} (width {bound})")
                break
            dims[j] = kept
            bound = len(kept)
        if bound is not None:
            ends.append(bound)

    if arch.mode == "m2" and not restart:
        width = min(len(decision.dims["C"][-1]), len(decision.dims["D"][-1]))
        for head in ("C", "D"):
            decision.dims[head][-1] = decision.dims[head][-1][:width]
        ends = [width]

    dims = decision.dims["tail"]
    bound = min(ends) if ends else None
    for t in range(len(dims)):
        kept = dims[t] if bound is None else dims[t][:bound - 1]
        if not kept:
            if t == 0:
                raise ArchitectureError("selection leaves no room for a tail layer")
            decision.deleted["tail"][t:] = [True] * (len(dims) - t)
            break
        dims[t] = kept
        bound = len(kept)
        stop = len(kept) <= TAIL_STOP_WIDTH and t + 1 >= keep_tail and not freeze_tail_depth
        if stop and t + 1 < len(dims):
            decision.deleted["tail"][t + 1:] = [True] * (len(dims) - t - 1)
            logger.info(f"Selection: tail ends at layer {t + 1}")
            break

    decision.restart_required = restart
    return decision


def run_selection(params: ModelParams, estate: EState, y_G: Optional[np.ndarray] = None,
                  policy: str = "default", clustering_layer: int = 1) -> SelectionDecision:
    """
    One selection pass over every layer

    Args:
        policy: "default", "autoclus" or "multi_clustering"
        clustering_layer: 1-based tail layer holding the clusters
    """
    arch = params.arch
    decision = SelectionDecision.identity(arch)

    for section in arch.heads + ["tail"]:
        depth = len(_section_specs(arch, section))
        for j in range(1, depth + 1):
            frozen = section == "tail" and (
                policy == "multi_clustering" or (policy == "default" and j == clustering_layer)
            )
            # a latent with a narrower latent below it keeps two dimensions
            feeds_deeper = section != "tail" or (j < depth and (policy == "multi_clustering" or j < clustering_layer))
            decision.components[section][j - 1] = prune_components(params, section, j, frozen)
            decision.dims[section][j - 1] = select_dgmm_dims(estate, params, section, j,
                                                             min_keep=2 if feeds_deeper else 1)

    if arch.mode == "m2":
        union = sorted(set(decision.dims["C"][-1]) | set(decision.dims["D"][-1]))
        decision.dims["C"][-1] = union
        decision.dims["D"][-1] = list(union)

    if arch.uses_gllvm and y_G is not None:
        decision.embedding = select_embedding_dims(y_G, estate, params.gllvm, min_keep=len(arch.head_D) + 2)

    return plan_layer_deletions(arch, decision, freeze_tail_depth=policy == "multi_clustering",
                                keep_tail=clustering_layer)


# ── Applying a decision ────────────────────────────────────────────────────

def _slice_output(layer: LayerParams, dims: List[int]) -> LayerParams:
    idx = np.asarray(dims, dtype=int)
    return LayerParams(layer.eta[:, idx].copy(), layer.lam[:, idx, :].copy(),
                       layer.psi[:, idx][:, :, idx].copy(), layer.pi.copy())


def _slice_input(layer: LayerParams, dims: List[int]) -> LayerParams:
    idx = np.asarray(dims, dtype=int)
    return LayerParams(layer.eta.copy(), layer.lam[:, :, idx].copy(), layer.psi.copy(), layer.pi.copy())


def _slice_links(links: List[LinkParams], dims: List[int]) -> List[LinkParams]:
    idx = np.asarray(dims, dtype=int)
    out = []
    for p in links:
        loadings = p.loadings[..., idx].copy()
        free = None if p.free is None else p.free[..., idx].copy()
        out.append(replace(p, loadings=loadings, free=free).masked())
    return out


def _check_decision(arch: Architecture, decision: SelectionDecision) -> None:
    for section in SECTIONS:
        specs = _section_specs(arch, section)
        for key in ("components", "dims", "deleted"):
            if len(getattr(decision, key).get(section, [])) != len(specs):
                raise ArchitectureError(f"decision {key}[{section}] does not match the architecture")
        for j, ((r, k), comps, dims) in enumerate(zip(specs, decision.components[section], decision.dims[section])):
            if not comps or not dims:
                raise ArchitectureError(f"{section} layer {j + 1}: empty kept set")
            if max(comps) >= k or min(comps) < 0 or max(dims) >= r or min(dims) < 0:
                raise ArchitectureError(f"{section} layer {j + 1}: kept index out of range")
    if arch.mode == "m2" and decision.dims["C"][-1] != decision.dims["D"][-1] \
            and not any(decision.deleted["C"] + decision.deleted["D"]):
        raise ArchitectureError("both heads must keep the same junction dimensions")
    if decision.embedding is not None:
        if not arch.uses_gllvm or not decision.embedding or max(decision.embedding) >= arch.embedding_dim:
            raise ArchitectureError("decision embedding does not match the architecture")


def apply_architecture_update(arch: Architecture, params: ModelParams,
                              decision: SelectionDecision) -> Tuple[Architecture, Optional[ModelParams], bool]:
    """
    Slice the parameters to the kept components and dimensions

    Returns the new architecture, the sliced parameters (None when a head
    layer was deleted, since the model must then be refit) and the restart
    flag.
    """
    _check_decision(arch, decision)
    out = params.copy()

    for section in SECTIONS:
        layers = _section_layers(out, section)
        for j, comps in enumerate(decision.components[section]):
            if len(comps) < layers[j].K:
                layers[j] = layers[j].subset(comps)

    def generator(section: str, j: int) -> Optional[Tuple[str, int]]:
        # layer that generates the input latent of (section, j), 0-based j
        n = len(_section_layers(out, section))
        if j + 1 < n:
            return section, j + 1
        if section != "tail":
            return "tail", 0
        return None

    for section in SECTIONS:
        layers = _section_layers(out, section)
        for j, dims in enumerate(decision.dims[section]):
            if len(dims) == layers[j].d_in:
                continue
            layers[j] = _slice_input(layers[j], dims)
            gen = generator(section, j)
            if gen is None:
                continue
            if arch.mode == "m2" and section == "D" and j == len(layers) - 1:
                continue  # the junction is sliced once, from head C
            target = _section_layers(out, gen[0])
            target[gen[1]] = _slice_output(target[gen[1]], dims)

    embedding_dim = arch.embedding_dim
    if decision.embedding is not None and len(decision.embedding) < arch.embedding_dim:
        out.gllvm = _slice_links(out.gllvm, decision.embedding)
        first = out.layers_D if out.layers_D else out.layers_tail
        first[0] = _slice_output(first[0], decision.embedding)
        embedding_dim = len(decision.embedding)

    def surviving(section: str) -> Tuple[Tuple[int, int], ...]:
        layers = _section_layers(out, section)
        return tuple((layers[j].d_in, layers[j].K) for j, gone in enumerate(decision.deleted[section]) if not gone)

    new_arch = Architecture(mode=arch.mode, head_C=surviving("C"), head_D=surviving("D"),
                            tail=surviving("tail"), embedding_dim=embedding_dim)

    restart = any(decision.deleted["C"]) or any(decision.deleted["D"])
    if restart:
        if arch.mode == "m2" and new_arch.head_C[-1][0] != new_arch.head_D[-1][0]:
            width = min(new_arch.head_C[-1][0], new_arch.head_D[-1][0])
            new_arch = replace(
                new_arch,
                head_C=new_arch.head_C[:-1] + ((width, new_arch.head_C[-1][1]),),
                head_D=new_arch.head_D[:-1] + ((width, new_arch.head_D[-1][1]),),
            )
        tail = []
        bound = new_arch.head_C[-1][0] if new_arch.head_C else None
        if new_arch.head_D:
            bound = new_arch.head_D[-1][0] if bound is None else min(bound, new_arch.head_D[-1][0])
        for r, k in new_arch.tail:
            if bound is not None:
                r = min(r, bound - 1)
            if r < 1:
                break
            tail.append((r, k))
            bound = r
        if not tail:
            raise ArchitectureError("no tail layer survives the head deletion")
        new_arch = replace(new_arch, tail=tuple(tail))
        logger.info(f"Selection: head layers deleted, restarting with {new_arch.to_dict()}")
        return new_arch.validate(), None, True

    for section in SECTIONS:
        layers = _section_layers(out, section)
        kept = [layer for layer, gone in zip(layers, decision.deleted[section]) if not gone]
        layers[:] = kept
    out.arch = new_arch
    new_arch.validate()
    out.validate()
    return new_arch, out, False
