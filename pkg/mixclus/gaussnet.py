"""
Deep Gaussian network algebra

A head chain is the head's layers followed by the tail layers. Variables
along a chain are v_0, v_1, ..., v_L and chain layer j maps v_j to v_{j-1}:

    v_{j-1} = eta_k + Lambda_k v_j + u,   u ~ N(0, Psi_k),   k ~ pi

with v_L ~ N(0, I). For the continuous head v_0 is the observed block y^C;
for the discrete head v_0 is the embedding fed to the GLLVM links. A layer
pair (r, K) gives the width r of the layer's input latent and its number
of components K. A path picks one component per chain layer.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from mixclus.data import ORDINAL
from mixclus.errors import ArchitectureError, NumericalError
from mixclus.links import LinkParams

logger = logging.getLogger(__name__)

MODES = ("dgmm", "ddgmm", "m1", "m2")
PSI_FLOOR = 1e-8

LayerSpec = Tuple[int, int]


# ── Architecture ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Architecture:
    """Layer widths and component counts of every chain"""
    mode: str
    head_C: Tuple[LayerSpec, ...] = ()
    head_D: Tuple[LayerSpec, ...] = ()
    tail: Tuple[LayerSpec, ...] = ()
    embedding_dim: Optional[int] = None

    @property
    def heads(self) -> List[str]:
        if self.mode == "m2":
            return ["C", "D"]
        return ["C"] if self.mode == "dgmm" else ["D"]

    @property
    def uses_gllvm(self) -> bool:
        return self.mode != "dgmm"

    def head_layers(self, head: str) -> Tuple[LayerSpec, ...]:
        return self.head_C if head == "C" else self.head_D

    def chain(self, head: str) -> Tuple[LayerSpec, ...]:
        return self.head_layers(head) + self.tail

    @property
    def L0(self) -> int:
        return max(len(self.head_layers(h)) for h in self.heads)

    @property
    def L(self) -> int:
        return self.L0 + len(self.tail)

    def widths(self, head: str, v0_width: int) -> List[int]:
        """Widths of v_0 .. v_L along a head chain"""
        return [v0_width] + [r for r, _ in self.chain(head)]

    def v0_width(self, head: str, p_C: Optional[int] = None) -> Optional[int]:
        return p_C if head == "C" else self.embedding_dim

    def validate(self, p_C: Optional[int] = None, p_gllvm: Optional[int] = None) -> "Architecture":
        """
        Check the architecture invariants

        Args:
            p_C: width of the continuous block, when known
            p_gllvm: number of variables fed to the GLLVM links, when known
        """
        if self.mode not in MODES:
            raise ArchitectureError(f"unknown mode {self.mode!r}")
        if not self.tail:
            raise ArchitectureError("tail must hold at least one layer")
        for name in ("head_C", "head_D", "tail"):
            for r, k in getattr(self, name):
                if r < 1 or k < 1:
                    raise ArchitectureError(f"{name}: widths and component counts must be >= 1")

        if self.mode == "m2":
            if not self.head_C or not self.head_D:
                raise ArchitectureError("m2 requires both heads to be non-empty")
            if self.head_C[-1][0] != self.head_D[-1][0]:
                raise ArchitectureError("m2 heads must end in the same junction width")
        elif self.mode == "dgmm" and self.head_D:
            raise ArchitectureError("dgmm uses the continuous head only")
        elif self.mode in ("ddgmm", "m1") and self.head_C:
            raise ArchitectureError(f"{self.mode} uses the discrete head only")

        if self.uses_gllvm:
            if not self.embedding_dim or self.embedding_dim < 1:
                raise ArchitectureError(f"{self.mode} requires embedding_dim >= 1")
            if p_gllvm is not None and self.embedding_dim >= p_gllvm:
                raise ArchitectureError(
                    f"embedding_dim {self.embedding_dim} must be below the {p_gllvm} GLLVM variables"
                )
        elif self.embedding_dim is not None:
            raise ArchitectureError("dgmm has no embedding layer")

        for head in self.heads:
            v0 = self.v0_width(head, p_C)
            widths = [r for r, _ in self.chain(head)]
            if v0 is not None:
                widths = [v0] + widths
            if any(b >= a for a, b in zip(widths, widths[1:])):
                raise ArchitectureError(f"widths must strictly decrease along head {head}: {widths}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "head_C": [list(x) for x in self.head_C],
            "head_D": [list(x) for x in self.head_D],
            "tail": [list(x) for x in self.tail],
            "embedding_dim": self.embedding_dim,
        }

    @classmethod
    def from_dict(cls, spec: Dict[str, Any], mode: Optional[str] = None) -> "Architecture":
        def pairs(key: str) -> Tuple[LayerSpec, ...]:
            return tuple((int(r), int(k)) for r, k in spec.get(key, []) or [])
        try:
            return cls(
                mode=str(mode or spec["mode"]),
                head_C=pairs("head_C"),
                head_D=pairs("head_D"),
                tail=pairs("tail"),
                embedding_dim=spec.get("embedding_dim"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ArchitectureError(f"malformed architecture spec: {e}")


# ── Parameters ─────────────────────────────────────────────────────────────

@dataclass
class LayerParams:
    """
    One MFA layer

    eta (K, d_out), lam (K, d_out, d_in), psi (K, d_out, d_out), pi (K,)
    where d_out is the width of the generated variable and d_in the width
    of the layer's input latent.
    """
    eta: np.ndarray
    lam: np.ndarray
    psi: np.ndarray
    pi: np.ndarray

    @property
    def K(self) -> int:
        return int(self.pi.shape[0])

    @property
    def d_out(self) -> int:
        return int(self.eta.shape[1])

    @property
    def d_in(self) -> int:
        return int(self.lam.shape[2])

    def copy(self) -> "LayerParams":
        return LayerParams(self.eta.copy(), self.lam.copy(), self.psi.copy(), self.pi.copy())

    def subset(self, components: Sequence[int]) -> "LayerParams":
        idx = np.asarray(components, dtype=int)
        pi = self.pi[idx]
        return LayerParams(self.eta[idx].copy(), self.lam[idx].copy(), self.psi[idx].copy(), pi / pi.sum())


@dataclass
class ModelParams:
    """GLLVM links plus the layers of both heads and the tail"""
    arch: Architecture
    gllvm: List[LinkParams] = field(default_factory=list)
    layers_C: List[LayerParams] = field(default_factory=list)
    layers_D: List[LayerParams] = field(default_factory=list)
    layers_tail: List[LayerParams] = field(default_factory=list)

    def head(self, head: str) -> List[LayerParams]:
        return self.layers_C if head == "C" else self.layers_D

    def chain(self, head: str) -> List[LayerParams]:
        return self.head(head) + self.layers_tail

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            gllvm=[replace(p, intercepts=p.intercepts.copy(), loadings=p.loadings.copy()) for p in self.gllvm],
            layers_C=[l.copy() for l in self.layers_C],
            layers_D=[l.copy() for l in self.layers_D],
            layers_tail=[l.copy() for l in self.layers_tail],
        )

    def validate(self) -> "ModelParams":
        """Check shape chaining, simplexes and Psi floors"""
        for head in self.arch.heads:
            layers = self.chain(head)
            specs = self.arch.chain(head)
            if len(layers) != len(specs):
                raise ArchitectureError(f"head {head}: {len(layers)} layers for {len(specs)} declared")
            for j, (layer, (r, k)) in enumerate(zip(layers, specs)):
                if layer.K != k or layer.d_in != r:
                    raise ArchitectureError(f"head {head} layer {j + 1}: shape does not match ({r}, {k})")
                if j + 1 < len(layers) and layers[j + 1].d_out != layer.d_in:
                    raise ArchitectureError(f"head {head} layer {j + 2}: does not chain")
                if abs(layer.pi.sum() - 1.0) > 1e-10 or np.any(layer.pi < 0):
                    raise ArchitectureError(f"head {head} layer {j + 1}: pi not on the simplex")
        if self.arch.uses_gllvm:
            for p in self.gllvm:
                if p.latent_dim != self.arch.embedding_dim:
                    raise ArchitectureError(f"link {p.variable_index}: loading width mismatch")
        return self


def chain_layer(params: ModelParams, head: str, j: int) -> LayerParams:
    """Chain layer j (1-based) of a head"""
    layers = params.chain(head)
    if not 1 <= j <= len(layers):
        raise ArchitectureError(f"layer {j} outside head {head} chain of depth {len(layers)}")
    return layers[j - 1]


def floor_psd(psi: np.ndarray, floor: float = PSI_FLOOR) -> np.ndarray:
    """Symmetrize and floor the eigenvalues of a (stack of) symmetric matrices"""
    sym = 0.5 * (psi + np.swapaxes(psi, -1, -2))
    w, v = np.linalg.eigh(sym)
    if np.all(w >= floor):
        return sym
    w = np.maximum(w, floor)
    out = (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


# ── Paths ──────────────────────────────────────────────────────────────────

def component_grid(counts: Sequence[int]) -> np.ndarray:
    """Lexicographic table of component tuples, shape (prod(counts), len(counts))"""
    if not counts:
        return np.zeros((1, 0), dtype=int)
    return np.array(list(itertools.product(*[range(k) for k in counts])), dtype=int)


@dataclass
class PathTable:
    """
    Enumerated paths of a head chain

    paths (S, L) component indices; prior (S,); mu[j] (S, d_j) and
    sigma[j] (S, d_j, d_j) the path moments of v_j, filled by fill_moments.
    """
    head: str
    paths: np.ndarray
    prior: Optional[np.ndarray] = None
    mu: List[np.ndarray] = field(default_factory=list)
    sigma: List[np.ndarray] = field(default_factory=list)

    @property
    def S(self) -> int:
        return int(self.paths.shape[0])

    @property
    def log_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.prior)


def enumerate_paths(arch: Architecture, head: str, params: Optional[ModelParams] = None) -> PathTable:
    """
    All component tuples of a head chain, lexicographically ordered

    Priors are the products of the layer pi along each path when params
    are given.
    """
    counts = [k for _, k in arch.chain(head)]
    paths = component_grid(counts)
    prior = None
    if params is not None:
        layers = params.chain(head)
        prior = np.ones(paths.shape[0])
        for j, layer in enumerate(layers):
            prior = prior * layer.pi[paths[:, j]]
    return PathTable(head=head, paths=paths, prior=prior)


def fill_moments(table: PathTable, params: ModelParams) -> PathTable:
    """Path moments of every chain variable by backward recursion from N(0, I)"""
    layers = params.chain(table.head)
    L = len(layers)
    S = table.S
    r_L = layers[-1].d_in
    mu: List[np.ndarray] = [None] * (L + 1)
    sigma: List[np.ndarray] = [None] * (L + 1)
    mu[L] = np.zeros((S, r_L))
    sigma[L] = np.broadcast_to(np.eye(r_L), (S, r_L, r_L)).copy()
    for j in range(L, 0, -1):
        layer = layers[j - 1]
        k = table.paths[:, j - 1]
        lam = layer.lam[k]
        mu[j - 1] = layer.eta[k] + np.einsum("sab,sb->sa", lam, mu[j])
        cov = layer.psi[k] + lam @ sigma[j] @ np.swapaxes(lam, 1, 2)
        sigma[j - 1] = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    table.mu = mu
    table.sigma = sigma
    return table


def path_moments(params: ModelParams, head: str, path: Sequence[int], from_layer: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian moments of the variable generated by chain layer ``from_layer``
    along one path
    """
    layers = params.chain(head)
    if len(path) != len(layers):
        raise ArchitectureError(f"path of length {len(path)} for a chain of depth {len(layers)}")
    if not 1 <= from_layer <= len(layers):
        raise ArchitectureError(f"layer {from_layer} outside chain")
    r_L = layers[-1].d_in
    mu = np.zeros(r_L)
    sigma = np.eye(r_L)
    for j in range(len(layers), from_layer - 1, -1):
        layer = layers[j - 1]
        k = path[j - 1]
        lam = layer.lam[k]
        if lam.shape[1] != mu.shape[0]:
            raise ArchitectureError(f"layer {j}: shape mismatch")
        mu = layer.eta[k] + lam @ mu
        sigma = layer.psi[k] + lam @ sigma @ lam.T
        sigma = 0.5 * (sigma + sigma.T)
    return mu, sigma


def condition_gaussian(eta: np.ndarray, lam: np.ndarray, psi: np.ndarray,
                       mu: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Posterior of x ~ N(mu, sigma) given z = eta + lam x + N(0, psi)

    Works on stacks (leading axes broadcast). Returns (gain, offset, xi) so
    that rho = gain @ z + offset.
    """
    lam_t = np.swapaxes(lam, -1, -2)
    sl = sigma @ lam_t
    marg = psi + lam @ sl
    marg = 0.5 * (marg + np.swapaxes(marg, -1, -2))
    try:
        gain = np.swapaxes(np.linalg.solve(marg, np.swapaxes(sl, -1, -2)), -1, -2)
    except np.linalg.LinAlgError:
        raise NumericalError("singular marginal covariance", operation="condition_next_layer")
    xi = sigma - gain @ np.swapaxes(sl, -1, -2)
    xi = 0.5 * (xi + np.swapaxes(xi, -1, -2))
    offset = mu - np.einsum("...ab,...b->...a", gain, eta + np.einsum("...ab,...b->...a", lam, mu))
    return gain, offset, xi


def condition_next_layer(params: ModelParams, head: str, path: Sequence[int], layer: int,
                         z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    (rho, xi): posterior moments of the input latent of chain layer ``layer``
    given the value ``z`` of the variable it generates, along one path
    """
    lp = chain_layer(params, head, layer)
    k = path[layer - 1]
    layers = params.chain(head)
    if layer < len(layers):
        mu, sigma = path_moments(params, head, path, layer + 1)
    else:
        mu, sigma = np.zeros(lp.d_in), np.eye(lp.d_in)
    gain, offset, xi = condition_gaussian(lp.eta[k], lp.lam[k], lp.psi[k], mu, sigma)
    return gain @ np.asarray(z, dtype=float) + offset, xi


def head_affine_moments(params: ModelParams, head: str, prefixes: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Law of v_0 given the junction value x along head-layer prefixes

    v_0 | x ~ N(gain @ x + offset, cov); returns gain (P, d_0, d_J),
    offset (P, d_0), cov (P, d_0, d_0) for each prefix row.
    """
    layers = params.head(head)
    P = prefixes.shape[0]
    d_J = layers[-1].d_in
    gain = np.broadcast_to(np.eye(d_J), (P, d_J, d_J)).copy()
    offset = np.zeros((P, d_J))
    cov = np.zeros((P, d_J, d_J))
    for j in range(len(layers), 0, -1):
        layer = layers[j - 1]
        k = prefixes[:, j - 1]
        lam = layer.lam[k]
        gain = lam @ gain
        offset = layer.eta[k] + np.einsum("pab,pb->pa", lam, offset)
        cov = layer.psi[k] + lam @ cov @ np.swapaxes(lam, 1, 2)
    return gain, offset, 0.5 * (cov + np.swapaxes(cov, 1, 2))


# ── Identifiability ────────────────────────────────────────────────────────

def mixture_moments(layer: LayerParams) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and variance of a layer's output when its input is (0, I)"""
    pi = layer.pi
    mean = pi @ layer.eta
    second = layer.lam @ np.swapaxes(layer.lam, 1, 2) + layer.psi + np.einsum("ka,kb->kab", layer.eta, layer.eta)
    var = np.einsum("k,kab->ab", pi, second) - np.outer(mean, mean)
    return mean, 0.5 * (var + var.T)


def layer_moments(params: ModelParams, head: str, layer: int) -> Tuple[np.ndarray, np.ndarray]:
    """Moments of the variable generated by chain layer ``layer``"""
    return mixture_moments(chain_layer(params, head, layer))


def _standardize_layer(layer: LayerParams, where: str) -> Tuple[LayerParams, np.ndarray, np.ndarray]:
    mean, var = mixture_moments(layer)
    try:
        A = linalg.cholesky(var, lower=True)
    except linalg.LinAlgError:
        raise NumericalError(f"{where}: layer variance is not SPD", operation="rescale_layers")
    eta = linalg.solve_triangular(A, (layer.eta - mean).T, lower=True).T
    lam = np.stack([linalg.solve_triangular(A, l, lower=True) for l in layer.lam])
    psi = np.stack([linalg.solve_triangular(A, linalg.solve_triangular(A, p, lower=True).T, lower=True)
                    for p in layer.psi])
    psi = floor_psd(psi)
    return LayerParams(eta, lam, psi, layer.pi.copy()), A, mean


def _absorb_in_layer(layer: LayerParams, A: np.ndarray, mean: np.ndarray) -> LayerParams:
    """Re-express a layer whose input v became A^{-1}(v - mean)"""
    eta = layer.eta + np.einsum("kab,b->ka", layer.lam, mean)
    return LayerParams(eta, layer.lam @ A, layer.psi.copy(), layer.pi.copy())


def _absorb_in_links(links: List[LinkParams], A: np.ndarray, mean: np.ndarray) -> List[LinkParams]:
    out = []
    for p in links:
        shift = p.loadings @ mean
        loadings = p.loadings @ A
        # cut-points enter the ordinal predictor with the opposite sign
        intercepts = p.intercepts - shift if p.kind == ORDINAL else p.intercepts + shift
        out.append(replace(p, intercepts=intercepts, loadings=loadings).masked())
    return out


def rescale_layers(params: ModelParams) -> ModelParams:
    """
    Make every latent variable of the network zero-mean with unit variance

    Runs from the deepest tail layer up to the heads. Each standardized
    variable v becomes A^{-1}(v - mean) with A the Cholesky factor of its
    variance; the layer reading v absorbs the transform (or the GLLVM links
    when v is the embedding), so the model's likelihood is unchanged. The
    observed continuous block is never transformed.
    """
    out = params.copy()
    tail = out.layers_tail
    heads = out.arch.heads

    def absorb_upstream(head: str, j: int, A: np.ndarray, mean: np.ndarray) -> None:
        # j: chain index of the layer that generated the standardized variable
        if j > 1:
            layers = out.chain(head)
            target = layers[j - 2]
            new = _absorb_in_layer(target, A, mean)
            _store(out, head, j - 1, new)
        elif head == "D":
            out.gllvm = _absorb_in_links(out.gllvm, A, mean)

    for t in range(len(tail) - 1, -1, -1):
        is_v0 = all(len(out.head(h)) == 0 for h in heads) and t == 0
        if is_v0 and heads == ["C"]:
            continue
        new, A, mean = _standardize_layer(tail[t], f"tail layer {t + 1}")
        tail[t] = new
        if t > 0:
            tail[t - 1] = _absorb_in_layer(tail[t - 1], A, mean)
            continue
        for h in heads:
            L0 = len(out.head(h))
            absorb_upstream(h, L0 + 1, A, mean)

    for h in heads:
        layers = out.head(h)
        for j in range(len(layers), 0, -1):
            if j == 1 and h == "C":
                continue
            new, A, mean = _standardize_layer(layers[j - 1], f"head {h} layer {j}")
            layers[j - 1] = new
            absorb_upstream(h, j, A, mean)
    return out


def _store(params: ModelParams, head: str, j: int, layer: LayerParams) -> None:
    """Write chain layer j (1-based) of a head back into params"""
    own = params.head(head)
    if j <= len(own):
        own[j - 1] = layer
    else:
        params.layers_tail[j - 1 - len(own)] = layer


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive"""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def diagonalize_loadings(params: ModelParams) -> ModelParams:
    """
    Rotate every component's loadings so that Lambda' Psi^{-1} Lambda is
    diagonal with non-increasing entries
    """
    out = params.copy()
    for layers in (out.layers_C, out.layers_D, out.layers_tail):
        for layer in layers:
            for k in range(layer.K):
                try:
                    psi_inv_lam = linalg.solve(layer.psi[k], layer.lam[k], assume_a="pos")
                except linalg.LinAlgError:
                    raise NumericalError("singular Psi", operation="diagonalize_loadings")
                B = layer.lam[k].T @ psi_inv_lam
                w, P = np.linalg.eigh(0.5 * (B + B.T))
                P = _sign_fix(P[:, np.argsort(w)[::-1]])
                layer.lam[k] = layer.lam[k] @ P
    return out


# ── Sampling ───────────────────────────────────────────────────────────────

def sample_chain(params: ModelParams, head: str, n: int, rng: np.random.Generator) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Draw n samples from the generative chain of a head

    Returns the values of v_0..v_L and the (n, L) component indices.
    """
    layers = params.chain(head)
    L = len(layers)
    comps = np.column_stack([rng.choice(l.K, size=n, p=l.pi) for l in layers])
    values: List[np.ndarray] = [None] * (L + 1)
    values[L] = rng.standard_normal((n, layers[-1].d_in))
    for j in range(L, 0, -1):
        layer = layers[j - 1]
        k = comps[:, j - 1]
        chol = np.linalg.cholesky(floor_psd(layer.psi))
        noise = np.einsum("nab,nb->na", chol[k], rng.standard_normal((n, layer.d_out)))
        values[j - 1] = layer.eta[k] + np.einsum("nab,nb->na", layer.lam[k], values[j]) + noise
    return values, comps


# ── Serialization ──────────────────────────────────────────────────────────

def _layer_to_dict(layer: LayerParams) -> Dict[str, Any]:
    return {"eta": layer.eta.tolist(), "lambda": layer.lam.tolist(),
            "psi": layer.psi.tolist(), "pi": layer.pi.tolist()}


def _layer_from_dict(d: Dict[str, Any]) -> LayerParams:
    return LayerParams(np.array(d["eta"], dtype=float), np.array(d["lambda"], dtype=float),
                       np.array(d["psi"], dtype=float), np.array(d["pi"], dtype=float))


def params_to_dict(params: ModelParams) -> Dict[str, Any]:
    """JSON-ready dump of every parameter"""
    links = []
    for p in params.gllvm:
        links.append({
            "variable_index": p.variable_index, "kind": p.kind, "n_levels": p.n_levels,
            "trials": p.trials, "variance": p.variance,
            "intercepts": p.intercepts.tolist(), "loadings": p.loadings.tolist(),
            "free": None if p.free is None else p.free.tolist(),
        })
    return {
        "architecture": params.arch.to_dict(),
        "gllvm": links,
        "layers_C": [_layer_to_dict(l) for l in params.layers_C],
        "layers_D": [_layer_to_dict(l) for l in params.layers_D],
        "layers_tail": [_layer_to_dict(l) for l in params.layers_tail],
    }


def params_from_dict(d: Dict[str, Any]) -> ModelParams:
    """Inverse of params_to_dict"""
    links = [
        LinkParams(
            variable_index=int(e["variable_index"]), kind=e["kind"],
            intercepts=np.array(e["intercepts"], dtype=float),
            loadings=np.array(e["loadings"], dtype=float),
            n_levels=int(e["n_levels"]), trials=int(e["trials"]), variance=float(e["variance"]),
            free=None if e.get("free") is None else np.array(e["free"], dtype=bool),
        )
        for e in d.get("gllvm", [])
    ]
    return ModelParams(
        arch=Architecture.from_dict(d["architecture"]),
        gllvm=links,
        layers_C=[_layer_from_dict(l) for l in d.get("layers_C", [])],
        layers_D=[_layer_from_dict(l) for l in d.get("layers_D", [])],
        layers_tail=[_layer_from_dict(l) for l in d.get("layers_tail", [])],
    )
