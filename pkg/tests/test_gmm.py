import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from breathid.gmm import DiagonalGmm, em_train_gmm, map_adapt, responsibilities

from oracles import log_gauss_diag


def _two_clusters(seed=0, n=500):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.standard_normal((n, 2)), rng.standard_normal((n, 2)) + 10.0])


class TestEm:
    def test_single_component_closed_form(self):
        x = np.random.default_rng(1).normal(3.0, 2.0, (200, 3))
        g = em_train_gmm(x, 1, n_iters=1)
        np.testing.assert_allclose(g.weights, [1.0])
        np.testing.assert_allclose(g.means[0], x.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(g.variances[0], x.var(axis=0), rtol=1e-12)

    def test_recovers_separated_clusters(self):
        g = em_train_gmm(_two_clusters(), 2, n_iters=20, seed=3)
        order = np.argsort(g.means[:, 0])
        np.testing.assert_allclose(g.means[order], [[0, 0], [10, 10]], atol=0.3)
        np.testing.assert_allclose(g.weights, 0.5, atol=0.01)

    @pytest.mark.parametrize("seed", range(3))
    def test_loglik_non_decreasing_50_iterations(self, seed):
        rng = np.random.default_rng(seed)
        x = np.vstack([rng.normal([0, 0], [1, 2], (150, 2)), rng.normal([3, -1], [0.5, 1], (100, 2)),
                       rng.normal([-2, 4], [1.5, 0.3], (120, 2))])
        g = em_train_gmm(x, 4, n_iters=50, seed=seed)
        trace = np.array(g.log_likelihood_trace)
        assert trace.size == 51
        assert np.all(np.diff(trace) >= -1e-9)

    def test_weights_simplex_and_floor(self):
        x = _two_clusters(2)
        g = em_train_gmm(x, 5, n_iters=10, seed=0)
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(g.weights >= 0)
        assert np.all(g.variances >= 1e-3 * x.var(axis=0) - 1e-15)

    def test_deterministic(self):
        x = _two_clusters(4)
        a, b = em_train_gmm(x, 3, seed=9), em_train_gmm(x, 3, seed=9)
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.variances, b.variances)

    def test_duplicate_frames_trigger_reinit(self):
        # more components than distinct points: k-means leaves some empty
        x = np.repeat(np.array([[0.0, 0.0], [5.0, 5.0]]), 10, axis=0)
        g = em_train_gmm(x, 4, n_iters=5, seed=0)
        assert np.all(np.isfinite(g.means))
        assert g.weights.sum() == pytest.approx(1.0)

    def test_too_few_frames(self):
        with pytest.raises(ValueError):
            em_train_gmm(np.zeros((3, 2)), 4)
        with pytest.raises(ValueError):
            em_train_gmm(np.zeros((10, 2)), 2, n_iters=0)

    def test_loglik_matches_direct_density(self):
        g = DiagonalGmm(np.array([0.3, 0.7]), np.array([[0.0, 1.0], [2.0, -1.0]]),
                        np.array([[1.0, 0.5], [2.0, 1.5]]))
        x = np.random.default_rng(0).standard_normal((7, 2))
        direct = np.log(0.3 * np.exp(log_gauss_diag(x, g.means[0], g.variances[0]))
                        + 0.7 * np.exp(log_gauss_diag(x, g.means[1], g.variances[1])))
        assert g.log_likelihood(x) == pytest.approx(direct.sum(), rel=1e-12)


class TestResponsibilities:
    def test_single_component(self):
        g = DiagonalGmm(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        np.testing.assert_array_equal(responsibilities(g, np.array([3.0, -1.0])), [1.0])

    def test_identical_components(self):
        g = DiagonalGmm(np.array([0.5, 0.5]), np.ones((2, 2)), np.ones((2, 2)))
        np.testing.assert_allclose(responsibilities(g, np.array([0.3, 7.0])), [0.5, 0.5])

    def test_far_apart(self):
        g = DiagonalGmm(np.array([0.5, 0.5]), np.array([[0.0], [10.0]]), np.ones((2, 1)))
        assert responsibilities(g, np.array([0.0]))[0] > 0.999

    def test_extreme_distance_is_stable(self):
        g = DiagonalGmm(np.array([0.5, 0.5]), np.array([[0.0], [1.0]]), np.full((2, 1), 1e-4))
        r = responsibilities(g, np.array([1e4]))
        assert np.all(np.isfinite(r))
        assert r.sum() == pytest.approx(1.0)

    @given(st.floats(1e-3, 1e3), st.integers(0, 1000))
    @settings(max_examples=50, deadline=None)
    def test_weight_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.1, 1.0, 3)
        mu, var = rng.standard_normal((3, 2)), rng.uniform(0.5, 2.0, (3, 2))
        x = rng.standard_normal(2)
        a = responsibilities(DiagonalGmm(w / w.sum(), mu, var), x)
        b = responsibilities(DiagonalGmm(scale * w, mu, var), x)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_dimension_mismatch(self):
        g = DiagonalGmm(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(ValueError):
            responsibilities(g, np.zeros(3))


class TestMapAdapt:
    def _ubm(self):
        return DiagonalGmm(np.array([0.4, 0.6]), np.array([[0.0, 0.0], [4.0, 4.0]]),
                           np.ones((2, 2)))

    def test_huge_relevance_keeps_ubm(self):
        x = np.random.default_rng(0).standard_normal((50, 2)) + 1.0
        sv = map_adapt(self._ubm(), x, relevance=1e12)
        np.testing.assert_allclose(sv.values, self._ubm().means.reshape(-1), atol=1e-6)

    def test_zero_relevance_gives_posterior_means(self):
        ubm = self._ubm()
        x = np.random.default_rng(1).standard_normal((50, 2)) * 2.0 + 2.0
        gamma = responsibilities(ubm, x)
        expect = (gamma.T @ x) / gamma.sum(axis=0)[:, None]
        np.testing.assert_allclose(map_adapt(ubm, x, relevance=0.0).as_matrix(), expect,
                                   rtol=1e-12)

    def test_supervector_length(self):
        ubm = DiagonalGmm(np.full(512, 1 / 512), np.zeros((512, 39)), np.ones((512, 39)))
        sv = map_adapt(ubm, np.zeros((3, 39)))
        assert sv.values.shape == (19968,)

    def test_layout_is_component_major(self):
        ubm = self._ubm()
        sv = map_adapt(ubm, np.array([[0.5, -0.5]]), relevance=16)
        np.testing.assert_array_equal(sv.values[:2], sv.as_matrix()[0])

    def test_samples_from_ubm_stay_near_means(self):
        ubm = self._ubm()
        x = ubm.sample(10_000, np.random.default_rng(5))
        sv = map_adapt(ubm, x)
        assert np.max(np.abs(sv.values - ubm.means.reshape(-1))) < 0.2

    def test_errors(self):
        with pytest.raises(ValueError):
            map_adapt(self._ubm(), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            map_adapt(self._ubm(), np.zeros((2, 2)), relevance=-1)
