"""
Nested spaces embedding: deterministic initialization of every parameter

Pipeline:
    1. Embedding of the discrete (or mixed) block by MCA or FAMD
    2. Per layer: GMM on the current variable, FA per component, hard
       assignment gives the next variable
    3. Two heads: PCA over the stacked last head latents gives the junction,
       PLS maps it back into each head
    4. GLLVM link seeds from per-variable regressions on the embedding
    5. Likelihood-preserving rescale of every latent layer
"""

import logging
import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize
from scipy.special import expit, logsumexp
from sklearn.cluster import kmeans_plusplus
from sklearn.utils.extmath import svd_flip

from mixclus.data import (
    BINARY, CATEGORICAL, CONTINUOUS, COUNT, ORDINAL, MixedDataset, VariableSpec,
)
from mixclus.errors import ArchitectureError, NumericalError
from mixclus.gaussnet import Architecture, LayerParams, ModelParams, floor_psd, rescale_layers
from mixclus.links import (
    VARIANCE_FLOOR, LinkParams, chain_to_packed, grad_log_density_batch, init_link_params,
    log_density_batch, pack, unpack,
)

logger = logging.getLogger(__name__)

FA_MAX_ITER = 200
FA_TOL = 1e-6
HEYWOOD_FLOOR = 1e-6
GMM_MAX_ITER = 200
GMM_TOL = 1e-8
IRLS_RIDGE = 1e-4
IRLS_MAX_ITER = 100


# ── Result containers ──────────────────────────────────────────────────────

@dataclass
class MCAResult:
    scores: np.ndarray
    column_coords: np.ndarray
    inertia: np.ndarray
    kept_columns: List[Tuple[int, int]]


@dataclass
class PCAResult:
    scores: np.ndarray
    loadings: np.ndarray
    explained: np.ndarray
    eigenvalues: np.ndarray
    mean: np.ndarray


@dataclass
class GMMResult:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    resp: np.ndarray
    loglik: List[float]
    converged: bool
    reseeded: bool = False

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.resp, axis=1)


@dataclass
class FAResult:
    mean: np.ndarray
    loading: np.ndarray
    psi: np.ndarray
    scores: np.ndarray
    loglik: List[float]
    converged: bool
    heywood: bool = False

    def project(self, Z: np.ndarray) -> np.ndarray:
        """Posterior means E[x | z] of the factors for new rows"""
        return (Z - self.mean) @ _fa_beta(self.loading, self.psi).T


@dataclass
class PLSResult:
    x_weights: np.ndarray
    x_loadings: np.ndarray
    y_loadings: np.ndarray
    x_scores: np.ndarray
    coef: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.y_mean + (X - self.x_mean) @ self.coef


@dataclass
class InitReport:
    """Diagnostics gathered while initializing"""
    explained: Dict[str, List[float]] = field(default_factory=dict)
    gmm: List[Dict[str, Any]] = field(default_factory=list)
    converged: Dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"explained": self.explained, "gmm": self.gmm, "converged": self.converged}


# ── Correspondence analysis ────────────────────────────────────────────────

def indicator_matrix(codes: np.ndarray, specs: Sequence[VariableSpec]) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """
    Complete disjunctive table of coded columns

    Levels that never occur are left out with a warning. Returns the
    indicator matrix and the (variable, level) pair of every column.
    """
    blocks = []
    kept: List[Tuple[int, int]] = []
    for j, spec in enumerate(specs):
        support = max(spec.n_levels, int(codes[:, j].max()) + 1 if codes.shape[0] else 0)
        onehot = (codes[:, j].astype(int)[:, None] == np.arange(support)[None, :]).astype(float)
        counts = onehot.sum(axis=0)
        for level in np.where(counts == 0)[0]:
            logger.warning(f"MCA: level {level} of {spec.name!r} never occurs; column dropped")
        present = counts > 0
        blocks.append(onehot[:, present])
        kept.extend((j, int(level)) for level in np.where(present)[0])
    if not blocks:
        return np.zeros((codes.shape[0], 0)), kept
    return np.hstack(blocks), kept


def mca(codes: np.ndarray, specs: Sequence[VariableSpec], r: int) -> MCAResult:
    """
    Multiple correspondence analysis of the indicator table

    Row principal coordinates of the first ``r`` dimensions from the SVD of
    the standardized residuals.
    """
    X, kept = indicator_matrix(codes, specs)
    n, J = X.shape
    p = len(specs)
    if r < 1 or r > J - p:
        raise ArchitectureError(f"MCA: {r} dimensions requested, at most {J - p} available")

    P = X / X.sum()
    row_mass = P.sum(axis=1)
    col_mass = P.sum(axis=0)
    expected = np.outer(row_mass, col_mass)
    S = (P - expected) / np.sqrt(expected)
    U, d, Vt = linalg.svd(S, full_matrices=False)
    U, Vt = svd_flip(U, Vt)

    scores = (U[:, :r] * d[:r]) / np.sqrt(row_mass)[:, None]
    coords = (Vt[:r].T * d[:r]) / np.sqrt(col_mass)[:, None]
    total = float(np.sum(d ** 2))
    inertia = d[:r] ** 2 / total if total > 0 else np.zeros(r)
    logger.debug(f"MCA: {J} indicator columns, inertia fractions {np.round(inertia, 4).tolist()}")
    return MCAResult(scores=scores - scores.mean(axis=0), column_coords=coords, inertia=inertia, kept_columns=kept)


def famd_matrix(specs: Sequence[VariableSpec], values: np.ndarray) -> np.ndarray:
    """
    Columns analysed by FAMD

    Continuous and count columns are standardized; binary, ordinal and
    categorical columns become indicator columns scaled as (x - p) / sqrt(p).
    """
    cols = []
    for j, spec in enumerate(specs):
        v = values[:, j].astype(float)
        if spec.kind in (CONTINUOUS, COUNT):
            sd = v.std()
            if sd <= 0:
                logger.warning(f"FAMD: {spec.name!r} is constant; column left out")
                continue
            cols.append(((v - v.mean()) / sd)[:, None])
            continue
        onehot = (v.astype(int)[:, None] == np.arange(spec.n_levels)[None, :]).astype(float)
        prop = onehot.mean(axis=0)
        present = prop > 0
        if not present.all():
            logger.warning(f"FAMD: {int((~present).sum())} levels of {spec.name!r} never occur")
        cols.append((onehot[:, present] - prop[present]) / np.sqrt(prop[present]))
    if not cols:
        raise ArchitectureError("FAMD: no usable column")
    return np.hstack(cols)


def famd(dataset: MixedDataset, r: int) -> PCAResult:
    """Factor analysis of mixed data: principal components of the FAMD matrix"""
    specs, values = dataset.gllvm_view(include_continuous=True)
    M = famd_matrix(specs, values)
    if r < 1 or r > min(M.shape):
        raise ArchitectureError(f"FAMD: {r} dimensions requested for a {M.shape} table")
    return pca(M, r)


# ── PCA / PLS ──────────────────────────────────────────────────────────────

def pca(Z: np.ndarray, r: int) -> PCAResult:
    """Principal components by SVD of the centered data (eigenvalues with 1/n)"""
    n, d = Z.shape
    if r < 1 or r > d:
        raise ArchitectureError(f"PCA: {r} components requested for {d} columns")
    mean = Z.mean(axis=0)
    Zc = Z - mean
    U, s, Vt = linalg.svd(Zc, full_matrices=False)
    U, Vt = svd_flip(U, Vt)
    eig = s ** 2 / n
    total = float(eig.sum())
    explained = eig[:r] / total if total > 0 else np.zeros(r)
    loadings = Vt[:r].T
    return PCAResult(scores=Zc @ loadings, loadings=loadings, explained=explained, eigenvalues=eig, mean=mean)


def pls_regression(X: np.ndarray, Y: np.ndarray, r: int, max_iter: int = 500, tol: float = 1e-12) -> PLSResult:
    """
    NIPALS PLS2 of Y on X with ``r`` components

    The regression map satisfies Y_hat = y_mean + (X - x_mean) @ coef.
    """
    if r < 1 or r > min(X.shape[1], Y.shape[1]):
        raise ArchitectureError(f"PLS: {r} components for blocks of width {X.shape[1]} and {Y.shape[1]}")
    x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
    E, F = X - x_mean, Y - y_mean
    if np.allclose(E, 0.0) or np.allclose(F, 0.0):
        raise NumericalError("zero-variance block", operation="pls_regression")

    W, P, Q, T = [], [], [], []
    for a in range(r):
        u = F[:, np.argmax(F.var(axis=0))].copy()
        t = np.zeros(E.shape[0])
        for _ in range(max_iter):
            w = E.T @ u
            norm = np.linalg.norm(w)
            if norm == 0:
                raise NumericalError(f"component {a + 1} has no covariance with Y", operation="pls_regression")
            w /= norm
            t_new = E @ w
            c = F.T @ t_new / (t_new @ t_new)
            u = F @ c / (c @ c)
            if np.sum((t_new - t) ** 2) <= tol * max(1.0, t_new @ t_new):
                t = t_new
                break
            t = t_new
        tt = t @ t
        p = E.T @ t / tt
        c = F.T @ t / tt
        E = E - np.outer(t, p)
        F = F - np.outer(t, c)
        W.append(w)
        P.append(p)
        Q.append(c)
        T.append(t)

    W_, P_, Q_ = np.column_stack(W), np.column_stack(P), np.column_stack(Q)
    coef = W_ @ linalg.solve(P_.T @ W_, Q_.T)
    return PLSResult(x_weights=W_, x_loadings=P_, y_loadings=Q_, x_scores=np.column_stack(T),
                     coef=coef, x_mean=x_mean, y_mean=y_mean)


# ── Gaussian mixture ───────────────────────────────────────────────────────

def _gauss_logpdf(Z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = linalg.cholesky(cov, lower=True)
    white = linalg.solve_triangular(chol, (Z - mean).T, lower=True)
    return -0.5 * np.sum(white ** 2, axis=0) - np.sum(np.log(np.diag(chol))) - 0.5 * Z.shape[1] * np.log(2 * np.pi)


def _gmm_mstep(Z: np.ndarray, resp: np.ndarray, floor: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    nk = resp.sum(axis=0)
    means = (resp.T @ Z) / nk[:, None]
    covs = np.empty((resp.shape[1], Z.shape[1], Z.shape[1]))
    for k in range(resp.shape[1]):
        diff = Z - means[k]
        covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k]
    return nk / Z.shape[0], means, floor_psd(covs, floor)


def gmm_em(Z: np.ndarray, K: int, seed: int, max_iter: int = GMM_MAX_ITER,
           tol: float = GMM_TOL, floor: float = 1e-8) -> GMMResult:
    """
    Full-covariance Gaussian mixture by EM

    Seeded with k-means++ centers and a hard nearest-center assignment. A
    component that collapses is re-seeded once on the worst-fitted point.
    """
    n, d = Z.shape
    if K < 1 or n <= K:
        raise NumericalError(f"GMM needs n > K (n={n}, K={K})", operation="gmm_em")
    if K == 1:
        resp = np.ones((n, 1))
    else:
        centers, _ = kmeans_plusplus(Z, n_clusters=K, random_state=int(seed) % (2 ** 32))
        nearest = np.argmin(((Z[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
        resp = np.full((n, K), 1e-6)
        resp[np.arange(n), nearest] = 1.0
        resp /= resp.sum(axis=1, keepdims=True)

    weights, means, covs = _gmm_mstep(Z, resp, floor)
    trace: List[float] = []
    converged = False
    reseeded = False
    for it in range(max_iter):
        try:
            log_r = np.column_stack([np.log(weights[k]) + _gauss_logpdf(Z, means[k], covs[k]) for k in range(K)])
        except linalg.LinAlgError:
            raise NumericalError("component covariance is not SPD", operation="gmm_em", iteration=it)
        log_norm = logsumexp(log_r, axis=1)
        trace.append(float(log_norm.sum()))
        resp = np.exp(log_r - log_norm[:, None])

        nk = resp.sum(axis=0)
        collapsed = np.where(nk < max(d, 1.0))[0]
        if collapsed.size and K > 1:
            if reseeded:
                logger.debug(f"GMM: components {collapsed.tolist()} stay small after re-seed")
            else:
                logger.warning(f"GMM: components {collapsed.tolist()} collapsed; re-seeding once")
                reseeded = True
                worst = np.argsort(log_norm)[:collapsed.size]
                for k, i in zip(collapsed, worst):
                    resp[i] = 0.0
                    resp[i, k] = 1.0
                resp = np.maximum(resp, 1e-12)
                resp /= resp.sum(axis=1, keepdims=True)
                weights, means, covs = _gmm_mstep(Z, resp, floor)
                global_cov = floor_psd(np.cov(Z.T, bias=True).reshape(d, d), floor)
                for k in collapsed:
                    covs[k] = global_cov
                continue

        weights, means, covs = _gmm_mstep(Z, resp, floor)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * max(1.0, abs(trace[-1])):
            converged = True
            break

    return GMMResult(weights=weights, means=means, covariances=covs, resp=resp,
                     loglik=trace, converged=converged, reseeded=reseeded)


# ── Factor analysis ────────────────────────────────────────────────────────

def _fa_beta(loading: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Lambda' (Lambda Lambda' + Psi)^{-1}"""
    C = loading @ loading.T + np.diag(psi)
    return linalg.solve(C, loading, assume_a="pos").T


def _fa_loglik(S: np.ndarray, loading: np.ndarray, psi: np.ndarray, n: int) -> float:
    C = loading @ loading.T + np.diag(psi)
    sign, logdet = np.linalg.slogdet(C)
    d = S.shape[0]
    return float(-0.5 * n * (d * np.log(2 * np.pi) + logdet + np.trace(linalg.solve(C, S, assume_a="pos"))))


def fa_em(Z: np.ndarray, r: int, max_iter: int = FA_MAX_ITER, tol: float = FA_TOL,
          psi_floor: float = HEYWOOD_FLOOR) -> FAResult:
    """
    Factor analysis z = mean + Lambda x + e, x ~ N(0, I), e ~ N(0, diag(psi)), by EM

    Started from principal axes. Unique variances below ``psi_floor`` are
    floored (Heywood case).
    """
    n, d = Z.shape
    if r < 1 or r >= d:
        raise ArchitectureError(f"FA: {r} factors requested for {d} columns")
    mean = Z.mean(axis=0)
    Zc = Z - mean
    S = Zc.T @ Zc / n

    w, v = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    noise = float(np.mean(w[r:])) if d > r else 0.0
    loading = v[:, :r] * np.sqrt(np.maximum(w[:r] - noise, 1e-6))
    psi = np.maximum(np.diag(S) - np.sum(loading ** 2, axis=1), psi_floor)

    trace = [_fa_loglik(S, loading, psi, n)]
    converged = False
    heywood = False
    for _ in range(max_iter):
        beta = _fa_beta(loading, psi)
        Ezz = np.eye(r) - beta @ loading + beta @ S @ beta.T
        loading = S @ beta.T @ linalg.inv(Ezz)
        raw = np.diag(S - loading @ beta @ S)
        if np.any(raw < psi_floor):
            heywood = True
        psi = np.maximum(raw, psi_floor)
        trace.append(_fa_loglik(S, loading, psi, n))
        if abs(trace[-1] - trace[-2]) <= tol * max(1.0, abs(trace[-2])):
            converged = True
            break

    if heywood:
        logger.warning(f"FA: Heywood case, unique variances floored at {psi_floor}")
    result = FAResult(mean=mean, loading=loading, psi=psi, scores=np.zeros((n, r)),
                      loglik=trace, converged=converged, heywood=heywood)
    result.scores = result.project(Z)
    return result


# ── Layer chains ───────────────────────────────────────────────────────────

def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def _fit_layer(Z: np.ndarray, r: int, K: int, seed: int, report: InitReport, where: str) -> Tuple[LayerParams, np.ndarray]:
    """One MFA layer on Z: GMM clusters, FA per cluster, factor scores as the next variable"""
    n, d = Z.shape
    gmm = gmm_em(Z, K, seed)
    labels = gmm.labels
    global_fa = fa_em(Z, r)

    eta = np.zeros((K, d))
    lam = np.zeros((K, d, r))
    psi = np.zeros((K, d, d))
    nxt = np.zeros((n, r))
    for k in range(K):
        members = labels == k
        fa = global_fa
        if members.sum() >= r + 2:
            fa = fa_em(Z[members], r)
        else:
            logger.warning(f"NSEP {where}: component {k} has {int(members.sum())} members; global FA used")
        eta[k], lam[k], psi[k] = fa.mean, fa.loading, np.diag(fa.psi)
        if members.any():
            nxt[members] = fa.project(Z[members])

    pi = np.maximum(gmm.weights, 1e-12)
    report.gmm.append({"layer": where, "weights": gmm.weights.tolist(), "converged": gmm.converged,
                       "reseeded": gmm.reseeded})
    report.converged[where] = bool(gmm.converged and global_fa.converged)
    logger.info(f"NSEP {where}: K={K}, r={r}, GMM weights {np.round(gmm.weights, 3).tolist()}")
    return LayerParams(eta, lam, psi, pi / pi.sum()), nxt


def fit_chain(Z: np.ndarray, specs: Sequence[Tuple[int, int]], seed: int, report: InitReport,
              label: str) -> Tuple[List[LayerParams], List[np.ndarray]]:
    """Fit consecutive layers; returns the layers and the variable fed to each"""
    layers: List[LayerParams] = []
    inputs: List[np.ndarray] = [Z]
    for j, (r, K) in enumerate(specs):
        layer, Z = _fit_layer(Z, r, K, _sub_seed(seed, zlib.crc32(label.encode()), j), report, f"{label} layer {j + 1}")
        layers.append(layer)
        inputs.append(Z)
    return layers, inputs


def _junction_layer(parent: np.ndarray, X: np.ndarray, layer: LayerParams, labels: np.ndarray,
                    where: str) -> LayerParams:
    """Refit the last head layer so that it maps the junction X to its parent variable"""
    r = X.shape[1]
    global_pls = pls_regression(X, parent, r)
    eta, lam, psi = layer.eta.copy(), np.zeros((layer.K, parent.shape[1], r)), layer.psi.copy()
    for k in range(layer.K):
        members = labels == k
        fit = global_pls
        if members.sum() >= r + 2:
            try:
                fit = pls_regression(X[members], parent[members], r)
            except NumericalError:
                logger.warning(f"NSEP {where}: PLS failed on component {k}; global fit used")
        lam[k] = fit.coef.T
        eta[k] = fit.y_mean - fit.coef.T @ fit.x_mean
        rows = members if members.any() else slice(None)
        resid = parent[rows] - fit.predict(X[rows])
        psi[k] = np.diag(np.maximum(resid.var(axis=0), HEYWOOD_FLOOR))
    return LayerParams(eta, lam, psi, layer.pi.copy())


# ── GLLVM seeds ────────────────────────────────────────────────────────────

def irls_binomial(y: np.ndarray, X: np.ndarray, trials: int = 1, ridge: float = IRLS_RIDGE,
                  max_iter: int = IRLS_MAX_ITER, weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ridge-stabilized logistic (binomial) regression by Newton steps

    Returns the coefficients and the penalized Fisher information at them.
    ``weights`` act as frequency weights of the rows.
    """
    w_row = np.ones(X.shape[0]) if weights is None else weights
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        mu = expit(np.clip(X @ beta, -35.0, 35.0))
        w = np.maximum(w_row * trials * mu * (1.0 - mu), 1e-10)
        grad = X.T @ (w_row * (y - trials * mu)) - ridge * beta
        hess = X.T @ (X * w[:, None]) + ridge * np.eye(X.shape[1])
        step = linalg.solve(hess, grad, assume_a="pos")
        beta = beta + step
        if np.max(np.abs(step)) < 1e-8:
            break
    mu = expit(np.clip(X @ beta, -35.0, 35.0))
    w = np.maximum(w_row * trials * mu * (1.0 - mu), 1e-10)
    return beta, X.T @ (X * w[:, None]) + ridge * np.eye(X.shape[1])


def _fit_link_direct(p: LinkParams, y: np.ndarray, Z: np.ndarray, ridge: float = IRLS_RIDGE) -> LinkParams:
    theta0 = pack(p)

    def objective(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        cand = unpack(p, theta)
        value = -float(np.sum(log_density_batch(cand, y, Z))) + 0.5 * ridge * float(theta @ theta)
        grad = -chain_to_packed(cand, grad_log_density_batch(cand, y, Z).sum(axis=0)) + ridge * theta
        return value, grad

    res = optimize.minimize(objective, theta0, jac=True, method="BFGS", options={"maxiter": IRLS_MAX_ITER})
    if not np.isfinite(res.fun):
        logger.warning(f"NSEP: link {p.variable_index} seed did not converge; neutral start kept")
        return p
    return unpack(p, res.x).masked()


def seed_links(specs: Sequence[VariableSpec], values: np.ndarray, Z: np.ndarray) -> List[LinkParams]:
    """Per-variable regressions of every GLLVM-linked column on the embedding"""
    n, r = Z.shape
    links: List[LinkParams] = []
    rank = 0
    for j, spec in enumerate(specs):
        y = values[:, j]
        if spec.kind in (BINARY, COUNT):
            p = init_link_params(spec.kind, j, r, spec.n_levels, int(spec.trials or 1), mask_rank=rank)
            rank += 1
            free = p.free_mask()
            design = np.column_stack([np.ones(n), Z[:, free]])
            beta, _ = irls_binomial(y, design, trials=p.trials)
            loadings = np.zeros(r)
            loadings[free] = beta[1:]
            p = LinkParams(j, spec.kind, beta[:1].copy(), loadings, p.n_levels, p.trials, 1.0, p.free)
        elif spec.kind in (ORDINAL, CATEGORICAL):
            p = _fit_link_direct(init_link_params(spec.kind, j, r, spec.n_levels), y, Z)
        else:
            design = np.column_stack([np.ones(n), Z])
            beta, *_ = linalg.lstsq(design, y)
            variance = max(float(np.mean((y - design @ beta) ** 2)), VARIANCE_FLOOR)
            p = LinkParams(j, CONTINUOUS, beta[:1].copy(), beta[1:].copy(), 0, 1, variance, None)
        links.append(p)
    return links


# ── Orchestration ──────────────────────────────────────────────────────────

def _standardize_scores(Z: np.ndarray) -> np.ndarray:
    sd = Z.std(axis=0)
    return (Z - Z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def embedding_scores(dataset: MixedDataset, arch: Architecture) -> Tuple[np.ndarray, List[float]]:
    """Standardized embedding that seeds the GLLVM head (FAMD for m1, MCA otherwise)"""
    r = int(arch.embedding_dim)
    if arch.mode == "m1":
        result = famd(dataset, r)
        return _standardize_scores(result.scores), result.explained.tolist()
    result = mca(dataset.y_D, dataset.discrete_specs, r)
    return _standardize_scores(result.scores), result.inertia.tolist()


def nsep_init(dataset: MixedDataset, arch: Architecture, seed: int) -> Tuple[ModelParams, InitReport]:
    """
    Build a complete, rescaled ModelParams for ``arch`` from the data

    Args:
        dataset: loaded mixed dataset
        arch: architecture to initialize
        seed: seed of every randomized sub-fit

    Returns:
        (params, report)
    """
    report = InitReport()
    specs, values = dataset.gllvm_view(include_continuous=arch.mode == "m1")
    arch.validate(dataset.p_C, len(specs) if arch.uses_gllvm else None)
    logger.info(f"NSEP: mode={arch.mode}, n={dataset.n}, seed={seed}")

    params = ModelParams(arch=arch)
    embedding: Optional[np.ndarray] = None
    if arch.uses_gllvm:
        embedding, explained = embedding_scores(dataset, arch)
        report.explained["embedding"] = explained

    if arch.mode == "dgmm":
        params.layers_C, inputs = fit_chain(dataset.y_C, arch.head_C, seed, report, "head C")
        params.layers_tail, _ = fit_chain(inputs[-1], arch.tail, seed, report, "tail")
    elif arch.mode in ("ddgmm", "m1"):
        params.layers_D, inputs = fit_chain(embedding, arch.head_D, seed, report, "head D")
        params.layers_tail, _ = fit_chain(inputs[-1], arch.tail, seed, report, "tail")
    else:
        params.layers_C, inputs_C = fit_chain(dataset.y_C, arch.head_C, seed, report, "head C")
        params.layers_D, inputs_D = fit_chain(embedding, arch.head_D, seed, report, "head D")
        r_J = arch.head_C[-1][0]
        stacked = np.hstack([inputs_C[-1], inputs_D[-1]])
        junction = pca(stacked, r_J)
        report.explained["junction"] = junction.explained.tolist()
        X = _standardize_scores(junction.scores)
        for head, inputs, layers in (("C", inputs_C, params.layers_C), ("D", inputs_D, params.layers_D)):
            parent = inputs[-2]
            labels = gmm_labels_from(layers[-1], parent)
            layers[-1] = _junction_layer(parent, X, layers[-1], labels, f"head {head} junction")
        params.layers_tail, _ = fit_chain(X, arch.tail, seed, report, "tail")

    if arch.uses_gllvm:
        params.gllvm = seed_links(specs, values, embedding)

    params.validate()
    params = rescale_layers(params)
    logger.info(f"NSEP done: {len(params.layers_C)} + {len(params.layers_D)} head layers, "
                f"{len(params.layers_tail)} tail layers")
    return params.validate(), report


def gmm_labels_from(layer: LayerParams, Z: np.ndarray) -> np.ndarray:
    """Hard assignment of rows of Z to a layer's components under their marginal laws"""
    log_r = np.empty((Z.shape[0], layer.K))
    for k in range(layer.K):
        cov = layer.lam[k] @ layer.lam[k].T + layer.psi[k]
        with np.errstate(divide="ignore"):
            log_r[:, k] = np.log(layer.pi[k]) + _gauss_logpdf(Z, layer.eta[k], floor_psd(cov))
    return np.argmax(log_r, axis=1)
