"""
mixclus link function tests
Log-densities, normalization, analytic gradients and cut-point transforms
"""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logsumexp

from mixclus.errors import LinkError
from mixclus.links import (
    LinkParams, chain_to_packed, cutpoint_transform, grad_log_density, grad_log_density_batch,
    init_link_params, log_density, log_density_batch, log_prob_table, pack, triangular_mask, unpack,
)

KINDS = ("binary", "count", "ordinal", "categorical", "continuous")


def _random_link(kind: str, r: int, rng: np.random.Generator) -> LinkParams:
    if kind == "ordinal":
        levels = int(rng.integers(3, 6))
        cuts = np.cumsum(rng.uniform(0.4, 1.2, levels - 1)) - 1.0
        return LinkParams(0, kind, cuts, rng.uniform(-1, 1, r), n_levels=levels)
    if kind == "categorical":
        levels = int(rng.integers(3, 5))
        return LinkParams(0, kind, rng.uniform(-1, 1, levels - 1), rng.uniform(-1, 1, (levels - 1, r)),
                          n_levels=levels)
    if kind == "count":
        return LinkParams(0, kind, rng.uniform(-1, 1, 1), rng.uniform(-1, 1, r), trials=int(rng.integers(1, 6)))
    if kind == "continuous":
        return LinkParams(0, kind, rng.uniform(-1, 1, 1), rng.uniform(-1, 1, r), variance=float(rng.uniform(0.5, 2)))
    return LinkParams(0, kind, rng.uniform(-1, 1, 1), rng.uniform(-1, 1, r))


def _random_value(p: LinkParams, rng: np.random.Generator) -> float:
    if p.kind == "continuous":
        return float(rng.normal())
    upper = p.trials if p.kind == "count" else p.n_levels - 1
    return float(rng.integers(0, upper + 1))


def _natural_vector(p: LinkParams) -> np.ndarray:
    parts = [p.intercepts, p.loadings.ravel()]
    if p.kind == "continuous":
        parts.append(np.array([p.variance]))
    return np.concatenate(parts)


def _from_natural(p: LinkParams, theta: np.ndarray) -> LinkParams:
    n_int = p.intercepts.size
    loadings = theta[n_int:n_int + p.loadings.size].reshape(p.loadings.shape)
    variance = float(theta[-1]) if p.kind == "continuous" else p.variance
    return replace(p, intercepts=theta[:n_int].copy(), loadings=loadings.copy(), variance=variance)


def _numeric_gradient(p: LinkParams, y: float, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    theta = _natural_vector(p)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        grad[k] = (log_density(_from_natural(p, up), y, z) - log_density(_from_natural(p, down), y, z)) / (2 * h)
    return grad


class TestLogDensity:
    """Tests for log_density values"""

    def test_binary_at_zero(self):
        """Test binary with zero predictor gives ln 0.5"""
        p = init_link_params("binary", 0, 2)
        assert log_density(p, 1, np.array([0.3, -2.0])) == pytest.approx(-0.693147, abs=1e-6)

    def test_count_two_trials(self):
        """Test binomial(2, 0.5) at y=1"""
        p = init_link_params("count", 0, 1, trials=2)
        assert log_density(p, 1, np.zeros(1)) == pytest.approx(np.log(0.5), abs=1e-12)

    def test_ordinal_middle_category(self):
        """Test cut-points (-1, 1) with zero predictor"""
        p = LinkParams(0, "ordinal", np.array([-1.0, 1.0]), np.zeros(1), n_levels=3)
        assert log_density(p, 1, np.zeros(1)) == pytest.approx(-0.771875, abs=1e-6)
        assert log_density(p, 1, np.zeros(1)) == pytest.approx(np.log(expit(1.0) - expit(-1.0)), abs=1e-12)

    def test_continuous_gaussian(self):
        """Test Gaussian link evaluates the normal log-density"""
        p = LinkParams(0, "continuous", np.array([0.5]), np.array([2.0]), variance=0.25)
        expected = -0.5 * np.log(2 * np.pi * 0.25) - 0.5 * (1.0 - 0.5 - 2.0 * 0.1) ** 2 / 0.25
        assert log_density(p, 1.0, np.array([0.1])) == pytest.approx(expected, abs=1e-12)

    def test_invalid_code(self):
        """Test out-of-support codes raise"""
        p = init_link_params("binary", 0, 1)
        with pytest.raises(LinkError):
            log_density(p, 2, np.zeros(1))
        with pytest.raises(LinkError):
            log_density(init_link_params("count", 0, 1, trials=3), 4, np.zeros(1))

    def test_non_increasing_cuts(self):
        """Test unordered cut-points raise"""
        p = LinkParams(0, "ordinal", np.array([1.0, -1.0]), np.zeros(1), n_levels=3)
        with pytest.raises(LinkError):
            log_density(p, 0, np.zeros(1))

    def test_extreme_predictor_finite(self):
        """Test clamping keeps huge predictors finite"""
        p = LinkParams(0, "binary", np.array([500.0]), np.zeros(1))
        assert np.isfinite(log_density(p, 0, np.zeros(1)))

    @pytest.mark.parametrize("kind", ["binary", "count", "ordinal", "categorical"])
    def test_normalization(self, kind, rng):
        """Test probabilities sum to one over the support"""
        for _ in range(100):
            p = _random_link(kind, 3, rng)
            table = log_prob_table(p, rng.normal(size=(4, 3)))
            np.testing.assert_allclose(logsumexp(table, axis=1), 0.0, atol=1e-10)

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=5, unique=True), st.floats(-4, 4))
    @settings(deadline=None, max_examples=50)
    def test_ordinal_cumulative_monotone(self, raw_cuts, eta):
        """Test ordinal cumulative probabilities never decrease"""
        cuts = np.sort(np.asarray(raw_cuts))
        if np.any(np.diff(cuts) < 1e-6):
            return
        p = LinkParams(0, "ordinal", cuts, np.array([1.0]), n_levels=cuts.size + 1)
        probs = np.exp(log_prob_table(p, np.array([[eta]])))[0]
        assert np.all(np.diff(np.cumsum(probs)) >= -1e-12)


class TestGradients:
    """Tests for grad_log_density against finite differences"""

    @pytest.mark.parametrize("kind", KINDS)
    def test_matches_finite_differences(self, kind):
        """Test analytic and numeric gradients agree on random draws"""
        rng = np.random.default_rng(KINDS.index(kind))
        for _ in range(80):
            r = int(rng.integers(1, 4))
            p = _random_link(kind, r, rng)
            z = rng.uniform(-2, 2, r)
            y = _random_value(p, rng)
            analytic = grad_log_density(p, y, z)
            numeric = _numeric_gradient(p, y, z)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_layout_size(self, rng):
        """Test gradient length equals n_params for every kind"""
        for kind in KINDS:
            p = _random_link(kind, 2, rng)
            assert grad_log_density(p, _random_value(p, rng), np.zeros(2)).size == p.n_params

    def test_categorical_reference_level_absent(self):
        """Test categorical gradients exclude the reference level"""
        p = LinkParams(0, "categorical", np.zeros(2), np.zeros((2, 2)), n_levels=3)
        assert grad_log_density(p, 0, np.ones(2)).size == 2 + 4

    def test_stationary_at_binary_mle(self):
        """Test the summed gradient vanishes at the intercept-only MLE"""
        y = np.array([1.0, 1.0, 0.0, 1.0])
        p = LinkParams(0, "binary", np.array([np.log(3.0)]), np.zeros(1))
        grad = grad_log_density_batch(p, y, np.zeros((4, 1))).sum(axis=0)
        assert np.linalg.norm(grad) < 1e-8

    def test_batch_matches_scalar(self, rng):
        """Test the batch gradient stacks the scalar ones"""
        p = _random_link("ordinal", 2, rng)
        z = rng.normal(size=(5, 2))
        y = np.array([_random_value(p, rng) for _ in range(5)])
        batch = grad_log_density_batch(p, y, z)
        for m in range(5):
            np.testing.assert_allclose(batch[m], grad_log_density(p, y[m], z[m]), atol=1e-12)
        np.testing.assert_allclose(
            log_density_batch(p, y, z), [log_density(p, y[m], z[m]) for m in range(5)], atol=1e-12
        )


class TestCutpointTransform:
    """Tests for cutpoint_transform"""

    def test_encode_decode(self):
        """Test (-1, 1) encodes to (-1, ln 2) and decodes back"""
        u = cutpoint_transform(np.array([-1.0, 1.0]), "encode")
        np.testing.assert_allclose(u, [-1.0, np.log(2.0)], atol=1e-15)
        np.testing.assert_allclose(cutpoint_transform(u, "decode"), [-1.0, 1.0], atol=1e-12)

    def test_single_cutpoint_identity(self):
        """Test a single cut-point passes through"""
        assert cutpoint_transform(np.array([0.7]), "encode").tolist() == [0.7]

    def test_decode_stays_increasing(self):
        """Test decode of a very negative increment stays strictly increasing"""
        out = cutpoint_transform(np.array([0.0, -50.0]), "decode")
        assert out[1] > out[0]

    def test_encode_rejects_unordered(self):
        """Test encode on non-increasing input raises"""
        with pytest.raises(LinkError):
            cutpoint_transform(np.array([0.0, 0.0]), "encode")

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
    @settings(deadline=None, max_examples=50)
    def test_decode_increasing_for_any_input(self, raw):
        """Test decode output is strictly increasing"""
        out = cutpoint_transform(np.asarray(raw), "decode")
        assert np.all(np.diff(out) > 0)


class TestPacking:
    """Tests for pack / unpack / chain_to_packed"""

    def test_roundtrip_respects_mask(self, rng):
        """Test unpack(pack(p)) restores p and masked entries stay zero"""
        p = replace(_random_link("binary", 3, rng), free=triangular_mask(1, 3)).masked()
        q = unpack(p, pack(p))
        np.testing.assert_allclose(q.loadings, p.loadings, atol=1e-12)
        assert q.loadings[2] == 0.0
        assert pack(p).size == 1 + 2

    @pytest.mark.parametrize("kind", ["ordinal", "continuous"])
    def test_packed_gradient_chain_rule(self, kind, rng):
        """Test chain_to_packed matches differences in the packed coordinates"""
        p = _random_link(kind, 2, rng)
        z = rng.normal(size=(6, 2))
        y = np.array([_random_value(p, rng) for _ in range(6)])
        theta = pack(p)
        analytic = chain_to_packed(p, grad_log_density_batch(p, y, z).sum(axis=0))
        h = 1e-6
        numeric = np.zeros_like(theta)
        for k in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[k] += h
            down[k] -= h
            numeric[k] = (log_density_batch(unpack(p, up), y, z).sum()
                          - log_density_batch(unpack(p, down), y, z).sum()) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)
