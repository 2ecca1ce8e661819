"""
Monte-Carlo EM machinery

One iteration's E step (latent draws, importance weights, path and tail
posteriors, observed log-likelihood estimate) and M step (closed-form MFA
layer updates, path probabilities, GLLVM links).

Draw trees
----------
Level j of a head chain holds draws of v_j with shape (B, S, N_j, d_j):
B is n when draws depend on the observation (continuous head, whose v_0
is the data) and 1 when they are shared by all observations (discrete
head, drawn from the prior). Each level-(j-1) draw has ``children[j]``
children at level j, stored contiguously, so N_j = N_{j-1} * children[j].
Noise comes from a generator keyed by (seed, iteration, head, level), which
makes every result independent of the number of worker threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from mixclus.data import CONTINUOUS, COUNT
from mixclus.errors import NumericalError
from mixclus.gaussnet import (
    LayerParams, ModelParams, PathTable, component_grid, condition_gaussian,
    enumerate_paths, fill_moments, floor_psd, head_affine_moments,
)
from mixclus.links import (
    VARIANCE_FLOOR, LinkParams, chain_to_packed, grad_log_density_batch,
    linear_predictor, log_density_batch, log_prob_table, pack, unpack,
)

logger = logging.getLogger(__name__)

HEAD_CODES = {"C": 0, "D": 1}
DEFAULT_MC_CAP = 256
DEFAULT_MAX_INNER = 30
RIDGE = 1e-8
_DRAW_FLOOR = 1e-12


# ── Randomness and parallelism ─────────────────────────────────────────────

@dataclass(frozen=True)
class DrawStream:
    """Seeded source of Monte-Carlo noise for one iteration"""
    seed: int
    iteration: int

    def generator(self, head: str, level: int) -> np.random.Generator:
        seq = np.random.SeedSequence([int(self.seed), int(self.iteration), HEAD_CODES[head], int(level)])
        return np.random.default_rng(seq)


def map_blocks(fn: Callable[[slice], np.ndarray], n: int, threads: int = 1) -> np.ndarray:
    """Evaluate ``fn`` on contiguous observation blocks and stack in order"""
    if threads <= 1 or n < 2 * threads:
        return fn(slice(0, n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    blocks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, blocks))
    return np.concatenate(parts, axis=0)


# ── E-step state ───────────────────────────────────────────────────────────

@dataclass
class HeadDraws:
    """Draw tree, weights and path posteriors of one head chain"""
    head: str
    table: PathTable
    children: List[int]
    draws: List[np.ndarray]
    log_lik: Optional[np.ndarray] = None
    post: Optional[np.ndarray] = None
    log_w0: Optional[np.ndarray] = None
    draw_log_lik: Optional[np.ndarray] = None

    @property
    def depth(self) -> int:
        """Deepest drawn level"""
        return len(self.draws) - 1

    def n_draws(self, level: int) -> int:
        return int(np.prod(self.children[:level + 1]))

    def fanout(self, start: int, level: int) -> int:
        """Descendants at ``level`` of one draw at ``start``"""
        return int(np.prod(self.children[start + 1:level + 1])) if level > start else 1

    def weights(self, level: int) -> np.ndarray:
        """(n, S, N_level) within-path weights, normalized over draws"""
        w0 = np.exp(self.log_w0)
        f = self.fanout(0, level)
        return np.repeat(w0, f, axis=2) / f if f > 1 else w0

    def parent_draws(self, level: int) -> np.ndarray:
        """Level-(level-1) draws aligned with the draws of ``level``"""
        return np.repeat(self.draws[level - 1], self.children[level], axis=2)

    def path_means(self, level: int) -> np.ndarray:
        """(n, S, d) posterior means of v_level given y_i and the path"""
        w = self.weights(level)
        return np.einsum("isn,bsnd->isd", w, self.draws[level]) if self.draws[level].shape[0] == 1 \
            else np.einsum("isn,isnd->isd", w, self.draws[level])


@dataclass
class TailState:
    """
    Posteriors of the tail given all observed blocks

    ``source`` names the head whose draw tree carries the tail levels;
    ``junction`` is the chain level of the first tail variable in it.
    """
    source: str
    junction: int
    path_post: np.ndarray
    draw_weights: np.ndarray
    layer_post: List[np.ndarray]
    log_marginal: np.ndarray


@dataclass
class EState:
    """Everything one E step produces; read-only once built"""
    heads: Dict[str, HeadDraws]
    tail: TailState
    schedule: Dict[str, List[int]]
    loglik: float = float("nan")

    @property
    def n(self) -> int:
        return int(self.tail.path_post.shape[0])


# ── Draws ──────────────────────────────────────────────────────────────────

def _chol_stack(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(floor_psd(cov, _DRAW_FLOOR))
    except np.linalg.LinAlgError:
        raise NumericalError("degenerate covariance", operation="draw_layer_latents")


def draw_layer_latents(stream: DrawStream, params: ModelParams, table: PathTable,
                       schedule: Sequence[int], y_C: Optional[np.ndarray] = None,
                       depth: Optional[int] = None, cap: int = DEFAULT_MC_CAP,
                       threads: int = 1) -> HeadDraws:
    """
    Draw the latent tree of a head chain

    Level 0 is the observed block for the continuous head and a draw from
    the path prior N(mu_s, Sigma_s) for the discrete head. Each deeper
    level is drawn from the Gaussian conditional on its parent draw.

    Args:
        schedule: draws per parent for levels 0..depth
        depth: deepest level to draw (defaults to the chain depth)
        cap: bound on the draws held at any level
    """
    head = table.head
    layers = params.chain(head)
    depth = len(layers) if depth is None else depth
    if len(schedule) < depth + 1 or any(int(m) < 1 for m in schedule[:depth + 1]):
        raise NumericalError("schedule entries must be >= 1 for every level", operation="draw_layer_latents")
    if not table.mu:
        fill_moments(table, params)
    S = table.S

    if head == "C":
        n, p = y_C.shape
        draws = [np.broadcast_to(y_C[:, None, None, :], (n, S, 1, p))]
        children = [1]
    else:
        N0 = max(1, min(int(schedule[0]), cap))
        eps = stream.generator(head, 0).standard_normal((S, N0, table.mu[0].shape[1]))
        chol = _chol_stack(table.sigma[0])
        level0 = table.mu[0][:, None, :] + np.einsum("sab,snb->sna", chol, eps)
        draws = [level0[None]]
        children = [N0]

    for j in range(1, depth + 1):
        layer = layers[j - 1]
        k = table.paths[:, j - 1]
        gain, offset, xi = condition_gaussian(layer.eta[k], layer.lam[k], layer.psi[k],
                                              table.mu[j], table.sigma[j])
        chol = _chol_stack(xi)
        parents = draws[j - 1]
        n_parents = parents.shape[2]
        m = max(1, min(int(schedule[j]), cap // n_parents))
        eps = stream.generator(head, j).standard_normal((S, n_parents, m, layer.d_in))
        noise = np.einsum("sab,snmb->snma", chol, eps)

        def block(rows: slice, parents=parents, gain=gain, offset=offset, noise=noise, m=m) -> np.ndarray:
            mean = np.einsum("sab,xsnb->xsna", gain, parents[rows]) + offset[None, :, None, :]
            child = mean[:, :, :, None, :] + noise[None]
            return child.reshape(child.shape[0], S, n_parents * m, child.shape[-1])

        draws.append(map_blocks(block, parents.shape[0], threads))
        children.append(m)

    return HeadDraws(head=head, table=table, children=children, draws=draws)


# ── Head posteriors ────────────────────────────────────────────────────────

def gllvm_log_lik(links: Sequence[LinkParams], Y: np.ndarray, V: np.ndarray, threads: int = 1) -> np.ndarray:
    """(n, Q) log f(y_i | v_q) summed over the linked variables"""
    tables = []
    for j, p in enumerate(links):
        if p.kind == CONTINUOUS:
            tables.append(("c", linear_predictor(p, V), max(p.variance, VARIANCE_FLOOR)))
        else:
            tables.append(("d", log_prob_table(p, V), None))

    def block(rows: slice) -> np.ndarray:
        out = np.zeros((Y[rows].shape[0], V.shape[0]))
        for j, (tag, tab, var) in enumerate(tables):
            y = Y[rows, j]
            if tag == "d":
                out += tab[:, y.astype(int)].T
            else:
                out += -0.5 * np.log(2.0 * np.pi * var) - 0.5 * (y[:, None] - tab[None, :]) ** 2 / var
        return out

    return map_blocks(block, Y.shape[0], threads)


def _gaussian_log_pdf(y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """(n, S) log N(y_i; mu_s, sigma_s)"""
    n, p = y.shape
    out = np.empty((n, mu.shape[0]))
    for s in range(mu.shape[0]):
        try:
            chol = linalg.cholesky(sigma[s], lower=True)
        except linalg.LinAlgError:
            raise NumericalError("path covariance is not SPD", operation="head_path_posteriors")
        white = linalg.solve_triangular(chol, (y - mu[s]).T, lower=True)
        out[:, s] = -0.5 * np.sum(white ** 2, axis=0) - np.sum(np.log(np.diag(chol))) - 0.5 * p * np.log(2 * np.pi)
    return out


def _softmax_rows(log_joint: np.ndarray, operation: str) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize the trailing axes of each row; returns (probabilities, log normalizer)"""
    axes = tuple(range(1, log_joint.ndim))
    top = np.max(log_joint, axis=axes, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NumericalError("all paths have zero likelihood", operation=operation)
    lse = logsumexp(log_joint, axis=axes, keepdims=True)
    return np.exp(log_joint - lse), lse.reshape(-1)


def head_path_posteriors(y_h: np.ndarray, params: ModelParams, hd: HeadDraws, threads: int = 1) -> np.ndarray:
    """
    f(s | y_i^h) for every observation and head path

    The continuous head uses the exact Gaussian f(y^C | s); the discrete
    head uses the Monte-Carlo average of f(y^D | z) over its prior draws.
    """
    table = hd.table
    if table.prior is None:
        raise NumericalError("path priors missing", operation="head_path_posteriors")
    if hd.head == "C":
        hd.log_lik = _gaussian_log_pdf(y_h, table.mu[0], table.sigma[0])
    else:
        level0 = hd.draws[0][0]
        S, N0, d = level0.shape
        flat = gllvm_log_lik(params.gllvm, y_h, level0.reshape(S * N0, d), threads)
        hd.draw_log_lik = flat.reshape(-1, S, N0)
        hd.log_lik = logsumexp(hd.draw_log_lik, axis=2) - np.log(N0)
    hd.post, _ = _softmax_rows(table.log_prior[None, :] + hd.log_lik, "head_path_posteriors")
    return hd.post


def latent_posterior_weights(y_h: np.ndarray, params: ModelParams, hd: HeadDraws) -> HeadDraws:
    """
    Self-normalized importance weights of the level-0 draws

    Deeper levels inherit their parent's weight split evenly over its
    children (see ``HeadDraws.weights``).
    """
    if hd.head == "C":
        hd.log_w0 = np.zeros((y_h.shape[0], hd.table.S, 1))
        return hd
    if hd.draw_log_lik is None:
        head_path_posteriors(y_h, params, hd)
    hd.log_w0 = hd.draw_log_lik - logsumexp(hd.draw_log_lik, axis=2, keepdims=True)
    return hd


# ── Tail ───────────────────────────────────────────────────────────────────

def _tail_layer_post(path_post: np.ndarray, paths: np.ndarray, junction: int, counts: Sequence[int]) -> List[np.ndarray]:
    out = []
    for t, k in enumerate(counts):
        onehot = (paths[:, junction + t][:, None] == np.arange(k)[None, :]).astype(float)
        out.append(path_post @ onehot)
    return out


def tail_posteriors(y_C: Optional[np.ndarray], y_D: Optional[np.ndarray], params: ModelParams,
                    heads: Dict[str, HeadDraws], threads: int = 1) -> TailState:
    """
    Posteriors of the tail components and weights of the tail draws

    Single-head modes read them off the head. With two heads the discrete
    head's draws at the junction are reweighted by the exact Gaussian law
    of y^C given the junction along each continuous-head prefix.
    """
    arch = params.arch
    tail_counts = [k for _, k in arch.tail]
    if arch.mode != "m2":
        source = arch.heads[0]
        hd = heads[source]
        junction = len(arch.head_layers(source))
        log_joint = hd.table.log_prior[None, :] + hd.log_lik
        _, log_marginal = _softmax_rows(log_joint, "tail_posteriors")
        return TailState(
            source=source, junction=junction, path_post=hd.post,
            draw_weights=hd.weights(junction),
            layer_post=_tail_layer_post(hd.post, hd.table.paths, junction, tail_counts),
            log_marginal=log_marginal,
        )

    hd = heads["D"]
    J = len(arch.head_D)
    S_D = hd.table.S
    junction_draws = hd.draws[J][0]
    N_J = junction_draws.shape[1]
    f = hd.fanout(0, J)
    log_wJ = np.repeat(hd.log_w0, f, axis=2) - np.log(f)

    prefixes = component_grid([k for _, k in arch.head_C])
    log_prefix = np.zeros(prefixes.shape[0])
    for j, layer in enumerate(params.layers_C):
        with np.errstate(divide="ignore"):
            log_prefix = log_prefix + np.log(layer.pi[prefixes[:, j]])
    gain, offset, cov = head_affine_moments(params, "C", prefixes)
    A = prefixes.shape[0]
    p_C = y_C.shape[1]

    whiteners = []
    for a in range(A):
        try:
            chol = linalg.cholesky(cov[a], lower=True)
        except linalg.LinAlgError:
            raise NumericalError("continuous head covariance is not SPD", operation="tail_posteriors")
        whiteners.append((linalg.solve_triangular(chol, np.eye(p_C), lower=True),
                          np.sum(np.log(np.diag(chol)))))
    means = np.einsum("apj,snj->asnp", gain, junction_draws) + offset[:, None, None, :]

    def block(rows: slice) -> np.ndarray:
        y = y_C[rows]
        out = np.empty((y.shape[0], A, S_D, N_J))
        for a, (winv, logdet) in enumerate(whiteners):
            resid = y[:, None, None, :] - means[a][None]
            white = resid @ winv.T
            out[:, a] = -0.5 * np.sum(white ** 2, axis=-1) - logdet - 0.5 * p_C * np.log(2 * np.pi)
        return out

    log_c = map_blocks(block, y_C.shape[0], threads)
    scored = log_wJ[:, None, :, :] + log_c
    inner = logsumexp(scored, axis=3)
    log_joint = (log_prefix[None, :, None] + hd.table.log_prior[None, None, :]
                 + hd.log_lik[:, None, :] + inner)
    post, log_marginal = _softmax_rows(log_joint, "tail_posteriors")
    within = np.exp(scored - inner[..., None])
    omega = np.einsum("ias,iasn->isn", post, within)
    path_post = post.sum(axis=1)
    safe = np.where(path_post > 0, path_post, 1.0)[:, :, None]
    draw_weights = np.where(path_post[:, :, None] > 0, omega / safe, 1.0 / N_J)

    return TailState(
        source="D", junction=J, path_post=path_post, draw_weights=draw_weights,
        layer_post=_tail_layer_post(path_post, hd.table.paths, J, tail_counts),
        log_marginal=log_marginal,
    )


def tail_level_weights(estate: EState, level: int) -> np.ndarray:
    """(n, S, N_level) joint weights (path posterior times draw weight) at a tail level"""
    tail = estate.tail
    hd = estate.heads[tail.source]
    f = hd.fanout(tail.junction, level)
    w = np.repeat(tail.draw_weights, f, axis=2) / f if f > 1 else tail.draw_weights
    return tail.path_post[:, :, None] * w


def posterior_mean(estate: EState, level: int) -> np.ndarray:
    """(n, d) posterior mean of a tail-chain variable given all observed blocks"""
    hd = estate.heads[estate.tail.source]
    w = tail_level_weights(estate, level)
    draws = hd.draws[level]
    if draws.shape[0] == 1:
        return np.einsum("isn,snd->id", w, draws[0])
    return np.einsum("isn,isnd->id", w, draws)


def observed_loglik_estimate(estate: EState) -> float:
    """Sum over observations of log sum_s pi_s f_hat(y_i | s)"""
    return float(np.sum(estate.tail.log_marginal))


# ── E step ─────────────────────────────────────────────────────────────────

def e_step(params: ModelParams, y_C: Optional[np.ndarray], y_G: Optional[np.ndarray],
           stream: DrawStream, schedule: Dict[str, List[int]], cap: int = DEFAULT_MC_CAP,
           threads: int = 1) -> EState:
    """
    Run the full E step

    Args:
        y_C: continuous block (heads using it: dgmm, m2)
        y_G: values of the GLLVM-linked variables (ddgmm, m1, m2)
        schedule: draws per parent for each level of each head chain
    """
    arch = params.arch
    heads: Dict[str, HeadDraws] = {}
    for head in arch.heads:
        table = fill_moments(enumerate_paths(arch, head, params), params)
        depth = len(arch.head_C) if (arch.mode == "m2" and head == "C") else None
        hd = draw_layer_latents(stream, params, table, schedule[head],
                                y_C=y_C if head == "C" else None,
                                depth=depth, cap=cap, threads=threads)
        y_h = y_C if head == "C" else y_G
        head_path_posteriors(y_h, params, hd, threads)
        latent_posterior_weights(y_h, params, hd)
        heads[head] = hd

    tail = tail_posteriors(y_C, y_G, params, heads, threads)
    estate = EState(heads=heads, tail=tail, schedule=schedule)
    estate.loglik = observed_loglik_estimate(estate)
    return estate


# ── M step: MFA layers ─────────────────────────────────────────────────────

def _section_source(estate: EState, params: ModelParams, section: str, index: int) -> Tuple[HeadDraws, int, np.ndarray]:
    """Draw tree, chain level and joint weights feeding one layer's update"""
    if section in ("C", "D"):
        hd = estate.heads[section]
        weights = hd.post[:, :, None] * hd.weights(index)
        return hd, index, weights
    hd = estate.heads[estate.tail.source]
    level = estate.tail.junction + index
    return hd, level, tail_level_weights(estate, level)


def weighted_layer_fit(parent: np.ndarray, child: np.ndarray, omega: np.ndarray,
                       comps: np.ndarray, current: LayerParams, where: str = "") -> LayerParams:
    """
    Weighted least squares of parent draws on child draws, per component

    parent (B, S, N, d_out), child (B, S, N, d_in), omega (n, S, N), comps
    (S,) the layer's component on each path. Components without weight keep
    their current parameters.
    """
    shared = parent.shape[0] == 1 and child.shape[0] == 1
    eta, lam, psi = current.eta.copy(), current.lam.copy(), current.psi.copy()
    d_in = child.shape[-1]

    for k in range(current.K):
        mask = comps == k
        if not mask.any():
            continue
        if shared:
            w = omega[:, mask].sum(axis=0)
            P, X = parent[0][mask], child[0][mask]
            sw = w.sum()
            if sw <= 1e-12:
                logger.warning(f"{where} component {k}: no posterior weight, parameters kept")
                continue
            mz = np.einsum("sn,sna->a", w, P) / sw
            mx = np.einsum("sn,sna->a", w, X) / sw
            Szz = np.einsum("sn,sna,snb->ab", w, P, P) / sw - np.outer(mz, mz)
            Sxx = np.einsum("sn,sna,snb->ab", w, X, X) / sw - np.outer(mx, mx)
            Szx = np.einsum("sn,sna,snb->ab", w, P, X) / sw - np.outer(mz, mx)
        else:
            w = omega[:, mask]
            P = parent[:, mask] if parent.shape[0] > 1 else np.broadcast_to(parent[:, mask], w.shape + parent.shape[-1:])
            X = child[:, mask] if child.shape[0] > 1 else np.broadcast_to(child[:, mask], w.shape + child.shape[-1:])
            sw = w.sum()
            if sw <= 1e-12:
                logger.warning(f"{where} component {k}: no posterior weight, parameters kept")
                continue
            mz = np.einsum("isn,isna->a", w, P) / sw
            mx = np.einsum("isn,isna->a", w, X) / sw
            Szz = np.einsum("isn,isna,isnb->ab", w, P, P) / sw - np.outer(mz, mz)
            Sxx = np.einsum("isn,isna,isnb->ab", w, X, X) / sw - np.outer(mx, mx)
            Szx = np.einsum("isn,isna,isnb->ab", w, P, X) / sw - np.outer(mz, mx)

        Sxx = 0.5 * (Sxx + Sxx.T)
        top = max(1.0, float(np.max(np.abs(Sxx))))
        if np.linalg.eigvalsh(Sxx)[0] < 1e-10 * top:
            logger.warning(f"{where} component {k}: rank-deficient second moment, ridge {RIDGE} added")
            Sxx = Sxx + RIDGE * np.eye(d_in)
        L_k = linalg.solve(Sxx, Szx.T, assume_a="sym").T
        eta[k] = mz - L_k @ mx
        lam[k] = L_k
        resid = Szz - Szx @ L_k.T - L_k @ Szx.T + L_k @ Sxx @ L_k.T
        psi[k] = floor_psd(resid)

    return LayerParams(eta, lam, psi, current.pi.copy())


def update_dgmm_layer(estate: EState, params: ModelParams, section: str, index: int) -> LayerParams:
    """
    Closed-form (eta, Lambda, Psi) of one layer

    Args:
        section: "C" or "D" for head layers, "tail" for tail layers
        index: 1-based position of the layer within its section
    """
    current = params.head(section)[index - 1] if section in ("C", "D") else params.layers_tail[index - 1]
    hd, level, omega = _section_source(estate, params, section, index)
    comps = hd.table.paths[:, level - 1]
    return weighted_layer_fit(hd.parent_draws(level), hd.draws[level], omega, comps, current,
                              where=f"{section} layer {index}")


def update_path_probs(estate: EState, params: ModelParams) -> Dict[str, List[np.ndarray]]:
    """pi_hat per layer: the mean posterior probability of each component"""
    out: Dict[str, List[np.ndarray]] = {}
    for head, hd in estate.heads.items():
        probs = []
        for j, layer in enumerate(params.head(head)):
            onehot = (hd.table.paths[:, j][:, None] == np.arange(layer.K)[None, :]).astype(float)
            pi = (hd.post @ onehot).mean(axis=0)
            probs.append(pi / pi.sum())
        out[head] = probs
    out["tail"] = [p.mean(axis=0) / p.mean(axis=0).sum() for p in estate.tail.layer_post]
    return out


# ── M step: GLLVM ──────────────────────────────────────────────────────────

def gllvm_weights(estate: EState) -> Tuple[np.ndarray, np.ndarray]:
    """(n, Q) joint weights of the shared embedding draws and the (Q, d) draws"""
    hd = estate.heads["D"]
    omega = hd.post[:, :, None] * np.exp(hd.log_w0)
    level0 = hd.draws[0][0]
    return omega.reshape(omega.shape[0], -1), level0.reshape(-1, level0.shape[-1])


def expected_loglik(p: LinkParams, y: np.ndarray, omega: np.ndarray, V: np.ndarray) -> float:
    """sum_i sum_q omega_iq log f(y_i | v_q)"""
    total = 0.0
    for q in range(V.shape[0]):
        total += float(omega[:, q] @ log_density_batch(p, y, np.broadcast_to(V[q], (y.size, V.shape[1]))))
    return total


def _pseudo_data(p: LinkParams, y: np.ndarray, omega: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate (value, draw) pairs: rows (code, draw, summed weight)"""
    support = p.trials + 1 if p.kind == COUNT else p.n_levels
    onehot = (y.astype(int)[:, None] == np.arange(support)[None, :]).astype(float)
    counts = omega.T @ onehot
    q_idx, c_idx = np.nonzero(counts > 0)
    return c_idx.astype(float), V[q_idx], counts[q_idx, c_idx]


def _fit_gaussian_link(p: LinkParams, y: np.ndarray, omega: np.ndarray, V: np.ndarray) -> LinkParams:
    """Closed-form weighted least squares for a continuous variable"""
    free = p.free_mask()
    design = np.column_stack([np.ones(V.shape[0]), V[:, free]])
    w_q = omega.sum(axis=0)
    gram = design.T @ (design * w_q[:, None])
    rhs = design.T @ (omega.T @ y)
    theta = linalg.solve(gram + RIDGE * np.eye(gram.shape[0]), rhs, assume_a="sym")
    rss = float(omega.sum(axis=1) @ y ** 2) - 2.0 * theta @ rhs + theta @ gram @ theta
    variance = max(rss / float(w_q.sum()), VARIANCE_FLOOR)
    loadings = np.zeros_like(p.loadings)
    loadings[free] = theta[1:]
    return replace(p, intercepts=theta[:1].copy(), loadings=loadings, variance=variance)


def _fit_link(p: LinkParams, y: np.ndarray, omega: np.ndarray, V: np.ndarray,
              max_inner: int, ridge: float = 0.0) -> LinkParams:
    codes, Z, w = _pseudo_data(p, y, omega, V)
    p = p.masked()
    theta0 = pack(p)

    def objective(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        cand = unpack(p, theta)
        value = -float(w @ log_density_batch(cand, codes, Z)) + 0.5 * ridge * float(theta @ theta)
        grad = -chain_to_packed(cand, w @ grad_log_density_batch(cand, codes, Z)) + ridge * theta
        return value, grad

    start, _ = objective(theta0)
    try:
        res = optimize.minimize(objective, theta0, jac=True, method="BFGS",
                                options={"maxiter": max_inner, "gtol": 1e-8})
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        logger.warning(f"Link {p.variable_index}: optimizer failed ({e}); keeping input")
        return p
    if not np.isfinite(res.fun) or res.fun > start:
        logger.warning(f"Link {p.variable_index}: no ascent ({res.message}); keeping input")
        return p
    return unpack(p, res.x).masked()


def optimize_gllvm(y_G: np.ndarray, estate: EState, current: Sequence[LinkParams],
                   max_inner: int = DEFAULT_MAX_INNER, threads: int = 1) -> List[LinkParams]:
    """
    Maximize the Monte-Carlo weighted expected log-likelihood of each link

    Discrete links run at most ``max_inner`` BFGS iterations and fall back
    to their input when the objective does not improve; continuous links
    are solved in closed form. Links are independent and evaluated in a
    thread pool.
    """
    if max_inner <= 0:
        return list(current)
    omega, V = gllvm_weights(estate)

    def fit(j: int) -> LinkParams:
        p = current[j]
        if p.kind == CONTINUOUS:
            return _fit_gaussian_link(p, y_G[:, j], omega, V)
        return _fit_link(p, y_G[:, j], omega, V, max_inner)

    if threads > 1 and len(current) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fit, range(len(current))))
    return [fit(j) for j in range(len(current))]


def m_step(estate: EState, params: ModelParams, y_G: Optional[np.ndarray] = None,
           max_inner: int = DEFAULT_MAX_INNER, threads: int = 1) -> ModelParams:
    """Update every layer, every path probability and the GLLVM links"""
    out = params.copy()
    for head in params.arch.heads:
        layers = out.head(head)
        for j in range(1, len(layers) + 1):
            layers[j - 1] = update_dgmm_layer(estate, params, head, j)
    for t in range(1, len(out.layers_tail) + 1):
        out.layers_tail[t - 1] = update_dgmm_layer(estate, params, "tail", t)

    probs = update_path_probs(estate, params)
    for head in params.arch.heads:
        for layer, pi in zip(out.head(head), probs[head]):
            layer.pi = pi
    for layer, pi in zip(out.layers_tail, probs["tail"]):
        layer.pi = pi

    if params.arch.uses_gllvm and y_G is not None:
        out.gllvm = optimize_gllvm(y_G, estate, params.gllvm, max_inner, threads)
    return out
