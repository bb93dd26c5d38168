import math

import numpy as np
import pytest

from mfld.datasets import finite_sum_quadratic
from mfld.ensemble import NoiseSource, ParticleEnsemble
from mfld.estimators import (
    Estimator,
    EstimatorConfig,
    SvrgState,
    draw_batch,
    refresh_anchor,
    sgd_drift,
    svrg_drift,
    variance_probe,
    xi_factor,
)
from mfld.functionals import Regularizer, full_drift
from mfld.models import LinearModel, MmdModel, TwoLayerNetModel
from mfld.models.network import xor_dataset
from mfld.oracle import enumerate_batches

REG = Regularizer(0.1)


def finite_sum(n=4, d=2, seed=3):
    c, a = finite_sum_quadratic(n, d, seed)
    return LinearModel.finite_sum(c, a)


def net(n=5, seed=0):
    r = np.random.default_rng(seed)
    return TwoLayerNetModel(r.standard_normal((n, 2)), r.standard_normal(n))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EstimatorConfig("adam")
        with pytest.raises(ValueError):
            EstimatorConfig("sgd", batch_size=0)
        with pytest.raises(ValueError):
            EstimatorConfig("svrg", refresh_period=0)

    def test_svrg_batch_larger_than_data(self):
        with pytest.raises(ValueError, match="without duplication"):
            EstimatorConfig("svrg", batch_size=5).validate_for(finite_sum(4))

    def test_sgd_batch_may_exceed_data(self):
        EstimatorConfig("sgd", batch_size=10).validate_for(finite_sum(4))

    def test_xi(self):
        assert xi_factor(10, 10) == 0.0
        assert xi_factor(10, 1) == 1.0
        assert xi_factor(1024, 32) == pytest.approx(992 / (32 * 1023))


class TestDrawBatch:
    def test_full_subset(self):
        b = draw_batch(NoiseSource(1), 0, 7, 7, "without_replacement")
        assert sorted(b.tolist()) == list(range(7))

    @pytest.mark.parametrize("mode", ["with_replacement", "without_replacement"])
    def test_single_datum(self, mode):
        assert draw_batch(NoiseSource(5), 3, 1, 1, mode).tolist() == [0]

    def test_too_large_without_replacement(self):
        with pytest.raises(ValueError):
            draw_batch(NoiseSource(0), 0, 5, 4, "without_replacement")

    def test_deterministic_per_step(self):
        s = NoiseSource(8)
        assert np.array_equal(draw_batch(s, 4, 3, 10), draw_batch(s, 4, 3, 10))
        assert not np.array_equal(draw_batch(s, 4, 5, 100), draw_batch(s, 5, 5, 100))

    def test_subset_frequencies(self):
        s = NoiseSource(2024)
        draws = 60_000
        counts = {}
        for k in range(draws):
            key = tuple(sorted(draw_batch(s, k, 2, 4, "without_replacement").tolist()))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        p = 1 / 6
        sigma = math.sqrt(draws * p * (1 - p))
        for c in counts.values():
            assert abs(c - draws * p) < 3 * sigma

    def test_with_replacement_uniform(self):
        s = NoiseSource(4)
        idx = np.concatenate([draw_batch(s, k, 8, 5) for k in range(5000)])
        freq = np.bincount(idx, minlength=5) / idx.size
        assert np.all(np.abs(freq - 0.2) < 4 * math.sqrt(0.2 * 0.8 / idx.size))

    def test_distinct_entries(self):
        s = NoiseSource(6)
        for k in range(200):
            b = draw_batch(s, k, 5, 9, "without_replacement")
            assert len(set(b.tolist())) == 5


class TestSgd:
    def test_full_batch_equals_full_drift(self, rng):
        m = net(5)
        X = rng.standard_normal((6, 2))
        np.testing.assert_allclose(sgd_drift(m, REG, X, None, np.arange(5)), full_drift(m, REG, X), rtol=1e-13)

    def test_two_point_enumeration(self, rng):
        m = finite_sum(2)
        X = rng.standard_normal((3, 2))
        g0 = m.per_datum_grad(X, X[1], 0)
        g1 = m.per_datum_grad(X, X[1], 1)
        mean = 0.5 * (sgd_drift(m, REG, X, 1, [0]) + sgd_drift(m, REG, X, 1, [1]))
        np.testing.assert_allclose(mean, (g0 + g1) / 2 + REG.grad(X[1]), rtol=1e-14)

    def test_identical_terms(self, rng):
        m = LinearModel.finite_sum(np.ones((4, 2)), np.full(4, 0.7))
        X = rng.standard_normal((3, 2))
        for b in ([0], [3, 3], [1, 2, 0]):
            np.testing.assert_allclose(sgd_drift(m, REG, X, None, b), full_drift(m, REG, X), rtol=1e-14)

    def test_index_range_checked(self, rng):
        with pytest.raises(IndexError):
            sgd_drift(finite_sum(4), REG, rng.standard_normal((2, 2)), 0, [4])

    @pytest.mark.parametrize("B", [1, 2, 3])
    def test_unbiased_by_enumeration(self, B, rng):
        for m in (finite_sum(5), net(6), MmdModel(rng.standard_normal((4, 1)), 0.9)):
            X = rng.standard_normal((3, m.dim))
            mean = sum(p * sgd_drift(m, REG, X, None, b) for b, p in enumerate_batches(m.n_data(), B, "with_replacement"))
            exact = full_drift(m, REG, X)
            assert np.linalg.norm(mean - exact) <= 1e-12 * np.linalg.norm(exact)


class TestSvrg:
    def test_at_anchor_every_batch_is_exact(self, rng):
        m = net(4)
        X = rng.standard_normal((5, 2))
        state = refresh_anchor(m, X)
        exact = full_drift(m, REG, X)
        for b, _ in enumerate_batches(4, 2, "without_replacement"):
            np.testing.assert_allclose(svrg_drift(m, REG, X, None, b, state), exact, rtol=1e-13, atol=1e-15)

    def test_full_batch_is_exact_anywhere(self, rng):
        m = finite_sum(6)
        X = rng.standard_normal((4, 2))
        state = refresh_anchor(m, X + rng.standard_normal(X.shape))
        np.testing.assert_allclose(
            svrg_drift(m, REG, X, None, np.arange(6), state), full_drift(m, REG, X), rtol=1e-13
        )

    @pytest.mark.parametrize("B", [1, 2, 3])
    def test_unbiased_by_enumeration(self, B, rng):
        for m in (finite_sum(4), net(6), MmdModel(rng.standard_normal((5, 1)), 1.1)):
            X = rng.standard_normal((3, m.dim))
            state = refresh_anchor(m, X + 0.5 * rng.standard_normal(X.shape))
            mean = sum(
                p * svrg_drift(m, REG, X, None, b, state)
                for b, p in enumerate_batches(m.n_data(), B, "without_replacement")
            )
            exact = full_drift(m, REG, X)
            assert np.linalg.norm(mean - exact) <= 1e-12 * np.linalg.norm(exact)

    def test_missing_state(self, rng):
        with pytest.raises(ValueError, match="anchor"):
            svrg_drift(finite_sum(), REG, rng.standard_normal((2, 2)), 0, [0], None)

    def test_anchor_from_the_future(self, rng):
        X = rng.standard_normal((2, 2))
        m = finite_sum()
        state = SvrgState(X.copy(), m.grad_first_variation(X, X), anchor_step=5)
        with pytest.raises(ValueError, match="ahead"):
            svrg_drift(m, REG, ParticleEnsemble(X, 3), 0, [0], state)

    def test_shape_mismatch(self, rng):
        m = finite_sum()
        state = refresh_anchor(m, rng.standard_normal((3, 2)))
        with pytest.raises(ValueError):
            svrg_drift(m, REG, rng.standard_normal((2, 2)), 0, [0], state)


class TestEstimator:
    def test_refresh_schedule(self, rng):
        m = finite_sum(8)
        est = Estimator(EstimatorConfig("svrg", 2, 3), m, REG, NoiseSource(0))
        X = rng.standard_normal((4, 2))
        refreshed = []
        for k in range(7):
            est.prepare(X, k)
            refreshed.append(est.batch is None)
            assert est.state.anchor_step == 3 * (k // 3)
        assert refreshed == [True, False, False, True, False, False, True]

    def test_refresh_step_uses_exact_drift(self, rng):
        m = finite_sum(8)
        est = Estimator(EstimatorConfig("svrg", 2, 4), m, REG, NoiseSource(0))
        X = rng.standard_normal((4, 2))
        est.prepare(X, 0)
        np.testing.assert_allclose(est.drift(X), full_drift(m, REG, X), rtol=1e-14)

    def test_rows_subset_matches_full(self, rng):
        m = net(6)
        est = Estimator(EstimatorConfig("sgd", 3), m, REG, NoiseSource(1))
        X = rng.standard_normal((8, 2))
        est.prepare(X, 5)
        full = est.drift(X)
        np.testing.assert_array_equal(est.drift(X, np.arange(2, 5)), full[2:5])

    def test_matches_functional_form(self, rng):
        m = finite_sum(8)
        est = Estimator(EstimatorConfig("svrg", 3, 4), m, REG, NoiseSource(2))
        X0 = rng.standard_normal((4, 2))
        est.prepare(X0, 0)
        X1 = X0 + 0.1
        est.prepare(X1, 1)
        np.testing.assert_allclose(
            est.drift(X1), svrg_drift(m, REG, ParticleEnsemble(X1, 1), None, est.batch, est.state), rtol=1e-14
        )


class TestVarianceProbe:
    def test_full_is_zero(self, rng):
        cfg = EstimatorConfig("full")
        assert variance_probe(net(), REG, rng.standard_normal((3, 2)), 0, cfg, 4) == 0.0

    def test_svrg_at_anchor_is_zero(self, rng):
        m = finite_sum(10)
        X = rng.standard_normal((5, 2))
        cfg = EstimatorConfig("svrg", 3)
        assert variance_probe(m, REG, X, None, cfg, 10, state=refresh_anchor(m, X)) == pytest.approx(0.0, abs=1e-28)

    def test_two_point_sgd(self, rng):
        m = finite_sum(2)
        X = rng.standard_normal((3, 2))
        g0 = m.per_datum_grad(X, X[0], 0)
        g1 = m.per_datum_grad(X, X[0], 1)
        probe = variance_probe(m, REG, X, 0, EstimatorConfig("sgd", 1), 16)
        assert probe == pytest.approx(float(np.sum(((g0 - g1) / 2) ** 2)), rel=1e-12)

    def test_too_few_trials(self, rng):
        with pytest.raises(ValueError):
            variance_probe(net(), REG, rng.standard_normal((3, 2)), 0, EstimatorConfig("sgd"), 1)

    def test_sgd_variance_below_r_squared_over_b(self, rng):
        Z, y = xor_dataset(1.0)
        m = TwoLayerNetModel(Z, y)
        R = m.constants().R
        for B in (1, 2, 4):
            X = 2 * rng.standard_normal((20, 3))
            probe = variance_probe(m, REG, X, None, EstimatorConfig("sgd", B), 200, source=NoiseSource(B))
            assert probe <= R**2 / B

    def test_svrg_variance_quadratic_in_distance(self, rng):
        m = net(12, seed=4)
        A = rng.standard_normal((30, 2))
        direction = rng.standard_normal(A.shape)
        state = refresh_anchor(m, A)
        cfg = EstimatorConfig("svrg", 3)
        probes = []
        for delta in (1e-3, 2e-3):
            X = A + delta * direction
            probes.append(variance_probe(m, REG, X, None, cfg, 64, state=state, source=NoiseSource(0)))
        assert probes[1] / probes[0] == pytest.approx(4.0, rel=0.2)
