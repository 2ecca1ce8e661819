"""
mixclus initialization tests
PCA, PLS, factor analysis, Gaussian mixtures, MCA, FAMD and the full NSEP pass
"""

import json

import numpy as np
import pandas as pd
import pytest

from mixclus.data import BINARY, CATEGORICAL, CONTINUOUS, VariableSpec, load_dataset, parse_schema
from mixclus.errors import ArchitectureError, NumericalError
from mixclus.gaussnet import Architecture, layer_moments
from mixclus.metrics import precision_scores
from mixclus.nsep import (
    fa_em, famd, famd_matrix, gmm_em, indicator_matrix, irls_binomial, mca, nsep_init, pca, pls_regression,
)
from mixclus.synthetic import factor_data

ARCHITECTURES = {
    "dgmm": Architecture("dgmm", head_C=((3, 2),), tail=((2, 2), (1, 1))),
    "ddgmm": Architecture("ddgmm", head_D=((2, 2),), tail=((1, 2),), embedding_dim=3),
    "m1": Architecture("m1", head_D=((4, 2),), tail=((2, 2),), embedding_dim=5),
    "m2": Architecture("m2", head_C=((2, 2),), head_D=((2, 2),), tail=((1, 2),), embedding_dim=3),
}


def _blobs(rng, n=200, shift=6.0):
    truth = np.repeat([0, 1], n // 2)
    Z = rng.normal(size=(n, 2)) + shift * truth[:, None]
    return Z, truth


class TestPCA:
    """Tests for pca"""

    def test_eigenvalues_match_covariance(self, rng):
        """Test eigenvalues equal those of the 1/n covariance"""
        Z = rng.normal(size=(100, 4)) @ rng.normal(size=(4, 4))
        result = pca(Z, 2)
        expected = np.sort(np.linalg.eigvalsh(np.cov(Z.T, bias=True)))[::-1]
        np.testing.assert_allclose(result.eigenvalues, expected, rtol=1e-10)
        assert result.scores.shape == (100, 2)
        assert 0.0 < result.explained.sum() <= 1.0 + 1e-12

    def test_scores_uncorrelated(self, rng):
        """Test principal scores are orthogonal"""
        Z = rng.normal(size=(80, 3)) @ rng.normal(size=(3, 3))
        scores = pca(Z, 3).scores
        gram = scores.T @ scores
        np.testing.assert_allclose(gram - np.diag(np.diag(gram)), 0.0, atol=1e-8)

    def test_too_many_components(self, rng):
        """Test r above the width raises"""
        with pytest.raises(ArchitectureError):
            pca(rng.normal(size=(10, 2)), 3)


class TestPLS:
    """Tests for pls_regression"""

    def test_full_rank_recovers_linear_map(self, rng):
        """Test full-rank PLS reproduces an exact linear relation"""
        X = rng.normal(size=(200, 2))
        B = np.array([[1.0, -0.5, 2.0], [0.3, 1.5, -1.0]])
        Y = 0.7 + X @ B
        fit = pls_regression(X, Y, 2)
        np.testing.assert_allclose(fit.predict(X), Y, atol=1e-8)
        np.testing.assert_allclose(fit.coef, B, atol=1e-8)

    def test_constant_block(self, rng):
        """Test a zero-variance block raises"""
        with pytest.raises(NumericalError):
            pls_regression(rng.normal(size=(20, 2)), np.ones((20, 2)), 1)

    def test_component_bound(self, rng):
        """Test r above either block width raises"""
        with pytest.raises(ArchitectureError):
            pls_regression(rng.normal(size=(20, 2)), rng.normal(size=(20, 3)), 3)


class TestFactorAnalysis:
    """Tests for fa_em"""

    def test_recovers_generating_covariance(self):
        """Test Lambda Lambda' + Psi within 10% of the generating covariance"""
        data, loading, psi = factor_data(n=2000, p=6, r=2, seed=4)
        fit = fa_em(data.frame.to_numpy(), 2)
        truth = loading @ loading.T + np.diag(psi)
        fitted = fit.loading @ fit.loading.T + np.diag(fit.psi)
        assert np.linalg.norm(fitted - truth) / np.linalg.norm(truth) < 0.10

    def test_loglik_monotone(self, rng):
        """Test EM never lowers the log-likelihood"""
        Z = rng.normal(size=(300, 5)) @ rng.normal(size=(5, 5))
        trace = fa_em(Z, 2).loglik
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))

    def test_psi_floor(self, rng):
        """Test unique variances stay above the floor"""
        Z = rng.normal(size=(50, 4))
        Z[:, 1] = Z[:, 0] * 2.0
        fit = fa_em(Z, 2)
        assert np.all(fit.psi >= 1e-6)

    def test_factor_bound(self, rng):
        """Test r must be below the width"""
        with pytest.raises(ArchitectureError):
            fa_em(rng.normal(size=(30, 3)), 3)


class TestGMM:
    """Tests for gmm_em"""

    def test_separated_blobs(self, rng):
        """Test two distant blobs are recovered"""
        Z, truth = _blobs(rng)
        result = gmm_em(Z, 2, seed=0)
        micro, _ = precision_scores(result.labels, truth)
        assert micro == 1.0
        np.testing.assert_allclose(np.sort(result.weights), [0.5, 0.5], atol=0.01)
        assert np.all(np.diff(result.loglik) >= -1e-6)

    def test_loglik_monotone(self, rng):
        """Test EM never lowers the log-likelihood on overlapping components"""
        Z, _ = _blobs(rng, n=300, shift=1.0)
        Z = np.vstack([Z, rng.normal(loc=(0.5, -1.5), scale=0.5, size=(100, 2))])
        steady = 0
        for seed in range(6):
            result = gmm_em(Z, 3, seed=seed, max_iter=150)
            if result.reseeded:
                continue
            steady += 1
            trace = np.asarray(result.loglik)
            assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[1:]))
            assert len(trace) >= 2
        assert steady >= 4

    def test_seeded(self, rng):
        """Test the same seed gives the same fit"""
        Z, _ = _blobs(rng, shift=1.5)
        a, b = gmm_em(Z, 3, seed=11), gmm_em(Z, 3, seed=11)
        assert np.array_equal(a.means, b.means)

    def test_single_component(self, rng):
        """Test K=1 returns the sample moments"""
        Z = rng.normal(size=(60, 2))
        result = gmm_em(Z, 1, seed=0)
        np.testing.assert_allclose(result.means[0], Z.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(result.covariances[0], np.cov(Z.T, bias=True), atol=1e-10)

    def test_too_few_rows(self, rng):
        """Test n <= K raises"""
        with pytest.raises(NumericalError):
            gmm_em(rng.normal(size=(3, 2)), 3, seed=0)


class TestMCA:
    """Tests for indicator_matrix and mca"""

    def test_unseen_level_dropped(self):
        """Test levels that never occur get no column"""
        codes = np.array([[0], [2], [0]])
        X, kept = indicator_matrix(codes, [VariableSpec("c", CATEGORICAL, ("a", "b", "c"))])
        assert X.shape == (3, 2)
        assert kept == [(0, 0), (0, 2)]

    def test_scores(self, rng):
        """Test centered scores and non-increasing inertia"""
        codes = np.column_stack([rng.integers(0, 2, 100), rng.integers(0, 3, 100), rng.integers(0, 2, 100)])
        specs = [VariableSpec("a", BINARY), VariableSpec("b", CATEGORICAL, ("x", "y", "z")),
                 VariableSpec("c", BINARY)]
        result = mca(codes, specs, 3)
        assert result.scores.shape == (100, 3)
        np.testing.assert_allclose(result.scores.mean(axis=0), 0.0, atol=1e-10)
        assert np.all(np.diff(result.inertia) <= 1e-12)

    def test_dimension_bound(self, rng):
        """Test r above J - p raises"""
        codes = rng.integers(0, 2, size=(30, 2))
        with pytest.raises(ArchitectureError, match="at most 2"):
            mca(codes, [VariableSpec("a", BINARY), VariableSpec("b", BINARY)], 3)


def _table(columns, rows):
    schema = parse_schema(json.dumps({"columns": columns}))
    return load_dataset(pd.DataFrame(rows).to_csv(index=False), schema)


def _align(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flip the columns of ``a`` onto the signs of ``b``"""
    return a * np.sign(np.sum(a * b, axis=0))


class TestFAMD:
    """Tests for famd_matrix and famd"""

    def test_continuous_only_is_pca(self, rng):
        """Test an all-continuous table reduces to PCA of the standardized columns"""
        X = rng.normal(size=(80, 4)) @ rng.normal(size=(4, 4))
        columns = [{"name": f"x{j}", "kind": "continuous"} for j in range(4)]
        dataset = _table(columns, {f"x{j}": X[:, j] for j in range(4)})

        result = famd(dataset, 2)
        oracle = pca((X - X.mean(axis=0)) / X.std(axis=0), 2)
        np.testing.assert_allclose(_align(result.scores, oracle.scores), oracle.scores, atol=1e-8)
        np.testing.assert_allclose(result.eigenvalues, oracle.eigenvalues, atol=1e-8)
        assert result.eigenvalues.sum() == pytest.approx(4.0)

    def test_discrete_only_scales_mca(self, rng):
        """Test an all-discrete table gives the MCA row coordinates times sqrt(p)"""
        n = 150
        columns = [{"name": "a", "kind": "binary"},
                   {"name": "c", "kind": "categorical", "levels": ["x", "y", "z"]},
                   {"name": "b", "kind": "binary"}]
        rows = {"a": rng.integers(0, 2, n), "c": rng.choice(["x", "y", "z"], n), "b": rng.integers(0, 2, n)}
        dataset = _table(columns, rows)

        result = famd(dataset, 2)
        oracle = np.sqrt(3.0) * mca(dataset.y_D, dataset.discrete_specs, 2).scores
        np.testing.assert_allclose(_align(result.scores, oracle), oracle, atol=1e-8)

    def test_weighted_pca_oracle(self, small_two_group):
        """Test eigenvalues match the indicator covariance weighted by 1 / p_k"""
        dataset = small_two_group.dataset()
        indicators = [np.column_stack([dataset.y_D[:, j] == 0, dataset.y_D[:, j] == 1]).astype(float)
                      for j in range(dataset.p_D)]
        X = np.hstack([dataset.y_C] + indicators)
        weights = np.concatenate([np.ones(dataset.p_C)] + [1.0 / block.mean(axis=0) for block in indicators])
        cov = np.cov(X.T, bias=True) * np.sqrt(np.outer(weights, weights))
        expected = np.sort(np.linalg.eigvalsh(cov))[::-1]

        result = famd(dataset, 3)
        np.testing.assert_allclose(result.eigenvalues, expected[:result.eigenvalues.size], atol=1e-8)
        assert result.scores.shape == (120, 3)
        np.testing.assert_allclose(result.scores.var(axis=0), expected[:3], atol=1e-8)

    def test_constant_column_left_out(self):
        """Test a constant continuous column adds no FAMD column"""
        specs = [VariableSpec("x", CONTINUOUS), VariableSpec("k", CONTINUOUS), VariableSpec("b", BINARY)]
        values = np.array([[1.0, 2.0, 0.0], [2.0, 2.0, 1.0], [4.0, 2.0, 1.0]])
        M = famd_matrix(specs, values)
        assert M.shape == (3, 3)
        np.testing.assert_allclose(M.mean(axis=0), 0.0, atol=1e-12)

    def test_too_many_dimensions(self, small_two_group):
        """Test r beyond the table raises"""
        with pytest.raises(ArchitectureError):
            famd(small_two_group.dataset(), 200)


class TestIRLS:
    """Tests for irls_binomial"""

    def test_recovers_coefficients(self):
        """Test logistic coefficients on simulated data"""
        rng = np.random.default_rng(8)
        X = np.column_stack([np.ones(5000), rng.normal(size=5000)])
        y = (rng.random(5000) < 1.0 / (1.0 + np.exp(-(0.5 - 1.2 * X[:, 1])))).astype(float)
        beta, info = irls_binomial(y, X)
        np.testing.assert_allclose(beta, [0.5, -1.2], atol=0.15)
        assert np.all(np.linalg.eigvalsh(info) > 0)


class TestNsepInit:
    """Tests for nsep_init"""

    @pytest.mark.parametrize("mode", sorted(ARCHITECTURES))
    def test_valid_params(self, mode, small_two_group):
        """Test every mode yields parameters matching the architecture"""
        dataset = small_two_group.dataset()
        arch = ARCHITECTURES[mode]
        params, report = nsep_init(dataset, arch, seed=0)
        params.validate()
        assert params.arch == arch
        if arch.uses_gllvm:
            specs, _ = dataset.gllvm_view(include_continuous=mode == "m1")
            assert len(params.gllvm) == len(specs)
            assert "embedding" in report.explained
        for layer in params.layers_C + params.layers_D + params.layers_tail:
            assert layer.pi.sum() == pytest.approx(1.0)
            assert np.all(np.linalg.eigvalsh(layer.psi) >= 1e-8 - 1e-12)

    def test_deterministic(self, small_two_group):
        """Test the same seed reproduces the initialization"""
        dataset = small_two_group.dataset()
        a, _ = nsep_init(dataset, ARCHITECTURES["m2"], seed=5)
        b, _ = nsep_init(dataset, ARCHITECTURES["m2"], seed=5)
        for la, lb in zip(a.layers_C + a.layers_D + a.layers_tail, b.layers_C + b.layers_D + b.layers_tail):
            assert np.array_equal(la.lam, lb.lam)
            assert np.array_equal(la.pi, lb.pi)

    def test_latent_layers_standardized(self, small_two_group):
        """Test the initialization leaves every latent layer at (0, I)"""
        params, _ = nsep_init(small_two_group.dataset(), ARCHITECTURES["ddgmm"], seed=0)
        for j in (1, 2):
            mean, cov = layer_moments(params, "D", j)
            np.testing.assert_allclose(mean, 0.0, atol=1e-8)
            np.testing.assert_allclose(cov, np.eye(cov.shape[0]), atol=1e-8)

    def test_rejects_oversized_embedding(self, small_two_group):
        """Test an embedding as wide as the linked variables raises"""
        arch = Architecture("ddgmm", tail=((2, 2),), embedding_dim=4)
        with pytest.raises(ArchitectureError):
            nsep_init(small_two_group.dataset(), arch, seed=0)
