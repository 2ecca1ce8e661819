"""
GLLVM link functions

Per-variable log-densities of an observed value given a latent vector, and
their analytic gradients:

- binary       Bernoulli with logit link
- count        binomial with logit link and a fixed number of trials
- ordinal      cumulative logit, P(y <= c) = sigmoid(tau_c - b.z)
- categorical  multinomial logit, reference level 0 fixed at 0
- continuous   Gaussian with free variance (used when every column goes
               through the GLLVM layer)

Every function works on batches: ``y`` of shape (m,) and ``z`` of shape
(m, r). Scalar wrappers ``log_density`` / ``grad_log_density`` take one value.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from mixclus.data import BINARY, CATEGORICAL, CONTINUOUS, COUNT, ORDINAL
from mixclus.errors import LinkError

logger = logging.getLogger(__name__)

LINEAR_CLAMP = 35.0
VARIANCE_FLOOR = 1e-8
_TINY = 1e-300


@dataclass(frozen=True)
class LinkParams:
    """
    Parameters of one variable's link

    intercepts: (1,) for binary/count/continuous, increasing cut-points
        (levels-1,) for ordinal, per-level intercepts (levels-1,) for
        categorical (reference level excluded)
    loadings: (r,) row of the GLLVM loading matrix, (levels-1, r) for
        categorical
    free: boolean mask of the loading entries allowed to be non-zero
    """
    variable_index: int
    kind: str
    intercepts: np.ndarray
    loadings: np.ndarray
    n_levels: int = 2
    trials: int = 1
    variance: float = 1.0
    free: Optional[np.ndarray] = None

    @property
    def latent_dim(self) -> int:
        return int(self.loadings.shape[-1])

    @property
    def n_params(self) -> int:
        extra = 1 if self.kind == CONTINUOUS else 0
        return int(self.intercepts.size + self.loadings.size + extra)

    def free_mask(self) -> np.ndarray:
        if self.free is None:
            return np.ones(self.loadings.shape, dtype=bool)
        return self.free

    def masked(self) -> "LinkParams":
        """Copy with the constrained loading entries set to exactly zero"""
        if self.free is None:
            return self
        return replace(self, loadings=np.where(self.free, self.loadings, 0.0))


def triangular_mask(rank: int, r: int) -> np.ndarray:
    """Free entries of the rank-th binary/count row: columns 0..rank"""
    return np.arange(r) <= rank


def init_link_params(kind: str, variable_index: int, r: int, n_levels: int = 2,
                     trials: int = 1, mask_rank: Optional[int] = None) -> LinkParams:
    """Neutral starting parameters (zero loadings, evenly spread cut-points)"""
    if kind == ORDINAL:
        intercepts = np.linspace(-1.0, 1.0, n_levels - 1) if n_levels > 2 else np.zeros(1)
        loadings = np.zeros(r)
    elif kind == CATEGORICAL:
        intercepts = np.zeros(n_levels - 1)
        loadings = np.zeros((n_levels - 1, r))
    else:
        intercepts = np.zeros(1)
        loadings = np.zeros(r)
    free = triangular_mask(mask_rank, r) if mask_rank is not None else None
    return LinkParams(variable_index, kind, intercepts, loadings, n_levels, trials, 1.0, free)


# ── Cut-points ─────────────────────────────────────────────────────────────

def cutpoint_transform(cuts: np.ndarray, direction: str) -> np.ndarray:
    """
    Map ordered cut-points to an unconstrained vector and back

    encode: (c_1, log(c_2 - c_1), ..., log(c_k - c_{k-1}))
    decode: cumulative sums of (u_1, exp(u_2), ...), kept strictly increasing
    """
    cuts = np.asarray(cuts, dtype=float)
    if direction == "encode":
        steps = np.diff(cuts)
        if np.any(steps <= 0):
            raise LinkError(f"cut-points not strictly increasing: {cuts}")
        return np.concatenate([cuts[:1], np.log(steps)])
    if direction == "decode":
        out = np.empty_like(cuts)
        if cuts.size == 0:
            return out
        out[0] = cuts[0]
        for k in range(1, cuts.size):
            nxt = out[k - 1] + np.exp(cuts[k])
            out[k] = max(nxt, np.nextafter(out[k - 1], np.inf))
        return out
    raise ValueError(f"direction must be 'encode' or 'decode', got {direction!r}")


def _check_cuts(p: LinkParams) -> None:
    if p.kind == ORDINAL and np.any(np.diff(p.intercepts) <= 0):
        raise LinkError(f"variable {p.variable_index}: cut-points not strictly increasing")


def _check_codes(p: LinkParams, y: np.ndarray) -> None:
    if p.kind == CONTINUOUS:
        if not np.all(np.isfinite(y)):
            raise LinkError(f"variable {p.variable_index}: non-finite value")
        return
    upper = p.trials if p.kind == COUNT else p.n_levels - 1
    if np.any(y < 0) or np.any(y > upper) or np.any(y != np.round(y)):
        raise LinkError(f"variable {p.variable_index}: invalid code for {p.kind}")


# ── Linear predictors ──────────────────────────────────────────────────────

def _clamped(eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Clamped predictor and the indicator of entries left untouched"""
    inside = np.abs(eta) < LINEAR_CLAMP
    return np.clip(eta, -LINEAR_CLAMP, LINEAR_CLAMP), inside


def linear_predictor(p: LinkParams, z: np.ndarray) -> np.ndarray:
    """(m,) for single-row kinds, (m, levels-1) for categorical; unclamped"""
    z = np.atleast_2d(z)
    if p.kind == CATEGORICAL:
        return p.intercepts[None, :] + z @ p.loadings.T
    if p.kind == ORDINAL:
        return z @ p.loadings
    return p.intercepts[0] + z @ p.loadings


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _interval_prob(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """sigmoid(upper) - sigmoid(lower) without cancellation in the right tail"""
    right = lower > 0
    direct = expit(upper) - expit(lower)
    mirrored = expit(-lower) - expit(-upper)
    return np.where(right, mirrored, direct)


def _ordinal_bounds(p: LinkParams, y: np.ndarray, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    cuts = np.concatenate([[-np.inf], p.intercepts, [np.inf]])
    codes = y.astype(int)
    upper = cuts[codes + 1] - eta
    lower = cuts[codes] - eta
    return upper, lower


def _sigmoid_slope(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return np.where(np.isfinite(x), s * (1.0 - s), 0.0)


# ── Log-densities ──────────────────────────────────────────────────────────

def log_density_batch(p: LinkParams, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """log f(y_m | z_m) for every row m"""
    y = np.asarray(y, dtype=float).ravel()
    z = np.atleast_2d(z)
    eta = linear_predictor(p, z)

    if p.kind == BINARY:
        eta, _ = _clamped(eta)
        return y * eta - _softplus(eta)

    if p.kind == COUNT:
        eta, _ = _clamped(eta)
        n = float(p.trials)
        log_comb = gammaln(n + 1.0) - gammaln(y + 1.0) - gammaln(n - y + 1.0)
        return log_comb + y * eta - n * _softplus(eta)

    if p.kind == ORDINAL:
        eta, _ = _clamped(eta)
        upper, lower = _ordinal_bounds(p, y, eta)
        return np.log(np.maximum(_interval_prob(upper, lower), _TINY))

    if p.kind == CATEGORICAL:
        eta, _ = _clamped(eta)
        full = np.concatenate([np.zeros((eta.shape[0], 1)), eta], axis=1)
        picked = full[np.arange(full.shape[0]), y.astype(int)]
        return picked - logsumexp(full, axis=1)

    if p.kind == CONTINUOUS:
        var = max(p.variance, VARIANCE_FLOOR)
        resid = y - eta
        return -0.5 * np.log(2.0 * np.pi * var) - 0.5 * resid ** 2 / var

    raise LinkError(f"unknown link kind {p.kind!r}")


def log_prob_table(p: LinkParams, z: np.ndarray) -> np.ndarray:
    """(m, support) log-probabilities of every code of a discrete variable"""
    if p.kind == CONTINUOUS:
        raise LinkError("log_prob_table is defined for discrete kinds only")
    z = np.atleast_2d(z)
    support = p.trials + 1 if p.kind == COUNT else p.n_levels
    cols = [log_density_batch(p, np.full(z.shape[0], c, dtype=float), z) for c in range(support)]
    return np.column_stack(cols)


def log_density(p: LinkParams, y_j: float, z: np.ndarray, trials: Optional[int] = None) -> float:
    """log f(y_j | z) for one value"""
    if trials is not None and p.kind == COUNT:
        p = replace(p, trials=int(trials))
    _check_cuts(p)
    y = np.array([y_j], dtype=float)
    _check_codes(p, y)
    return float(log_density_batch(p, y, np.asarray(z, dtype=float)[None, :])[0])


# ── Gradients ──────────────────────────────────────────────────────────────

def grad_log_density_batch(p: LinkParams, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """
    Gradient of log f(y_m | z_m) for every row m

    Columns follow the parameter layout: intercepts, loadings (row-major),
    then the variance for continuous links. Returns shape (m, n_params).
    """
    y = np.asarray(y, dtype=float).ravel()
    z = np.atleast_2d(z)
    eta_raw = linear_predictor(p, z)

    if p.kind in (BINARY, COUNT):
        eta, inside = _clamped(eta_raw)
        n = float(p.trials) if p.kind == COUNT else 1.0
        d_eta = (y - n * expit(eta)) * inside
        return np.column_stack([d_eta, d_eta[:, None] * z])

    if p.kind == ORDINAL:
        eta, inside = _clamped(eta_raw)
        upper, lower = _ordinal_bounds(p, y, eta)
        prob = np.maximum(_interval_prob(upper, lower), _TINY)
        f_up = _sigmoid_slope(upper) / prob
        f_lo = _sigmoid_slope(lower) / prob
        codes = y.astype(int)
        n_cuts = p.intercepts.size
        d_cuts = np.zeros((y.size, n_cuts))
        rows = np.arange(y.size)
        has_up = codes < n_cuts
        has_lo = codes > 0
        d_cuts[rows[has_up], codes[has_up]] += f_up[has_up]
        d_cuts[rows[has_lo], codes[has_lo] - 1] -= f_lo[has_lo]
        d_eta = -(f_up - f_lo) * inside
        return np.column_stack([d_cuts, d_eta[:, None] * z])

    if p.kind == CATEGORICAL:
        eta, inside = _clamped(eta_raw)
        full = np.concatenate([np.zeros((eta.shape[0], 1)), eta], axis=1)
        probs = np.exp(full - logsumexp(full, axis=1, keepdims=True))[:, 1:]
        onehot = (y.astype(int)[:, None] == np.arange(1, p.n_levels)[None, :]).astype(float)
        d_eta = (onehot - probs) * inside
        d_load = d_eta[:, :, None] * z[:, None, :]
        return np.column_stack([d_eta, d_load.reshape(y.size, -1)])

    if p.kind == CONTINUOUS:
        var = max(p.variance, VARIANCE_FLOOR)
        resid = y - eta_raw
        d_mu = resid / var
        d_var = -0.5 / var + 0.5 * resid ** 2 / var ** 2
        return np.column_stack([d_mu, d_mu[:, None] * z, d_var])

    raise LinkError(f"unknown link kind {p.kind!r}")


def grad_log_density(p: LinkParams, y_j: float, z: np.ndarray, trials: Optional[int] = None) -> np.ndarray:
    """Gradient of log f(y_j | z) over (intercepts, loadings[, variance])"""
    if trials is not None and p.kind == COUNT:
        p = replace(p, trials=int(trials))
    _check_cuts(p)
    y = np.array([y_j], dtype=float)
    _check_codes(p, y)
    return grad_log_density_batch(p, y, np.asarray(z, dtype=float)[None, :])[0]


# ── Unconstrained parameter vector ─────────────────────────────────────────

def pack(p: LinkParams) -> np.ndarray:
    """Unconstrained vector of the free parameters"""
    parts = [
        cutpoint_transform(p.intercepts, "encode") if p.kind == ORDINAL else p.intercepts,
        p.loadings[p.free_mask()].ravel(),
    ]
    if p.kind == CONTINUOUS:
        parts.append(np.array([np.log(max(p.variance, VARIANCE_FLOOR))]))
    return np.concatenate(parts)


def unpack(p: LinkParams, theta: np.ndarray) -> LinkParams:
    """Inverse of ``pack`` around the template ``p``"""
    n_int = p.intercepts.size
    intercepts = theta[:n_int]
    if p.kind == ORDINAL:
        intercepts = cutpoint_transform(intercepts, "decode")
    mask = p.free_mask()
    n_free = int(mask.sum())
    loadings = np.zeros_like(p.loadings)
    loadings[mask] = theta[n_int:n_int + n_free]
    variance = p.variance
    if p.kind == CONTINUOUS:
        variance = max(float(np.exp(theta[n_int + n_free])), VARIANCE_FLOOR)
    return replace(p, intercepts=np.array(intercepts, dtype=float), loadings=loadings, variance=variance)


def chain_to_packed(p: LinkParams, grad: np.ndarray) -> np.ndarray:
    """Map a natural-layout gradient (summed over rows) to the packed layout"""
    n_int = p.intercepts.size
    g_int = grad[:n_int]
    if p.kind == ORDINAL:
        u = cutpoint_transform(p.intercepts, "encode")
        tail_sums = np.cumsum(g_int[::-1])[::-1]
        g_int = tail_sums.copy()
        g_int[1:] = tail_sums[1:] * np.exp(u[1:])
    g_load = grad[n_int:n_int + p.loadings.size].reshape(p.loadings.shape)[p.free_mask()]
    parts = [g_int, g_load.ravel()]
    if p.kind == CONTINUOUS:
        parts.append(np.array([grad[-1] * max(p.variance, VARIANCE_FLOOR)]))
    return np.concatenate(parts)
