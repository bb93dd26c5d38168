import math
import warnings

import numpy as np
import pytest

from mfld.datasets import finite_sum_quadratic
from mfld.dynamics import (
    TRACE_COLUMNS,
    DiagnosticsSet,
    DynamicsParams,
    StepSizeWarning,
    resolve_threads,
    run,
    schedule_eta,
    step,
)
from mfld.ensemble import GaussianInit, NoiseSource, NonFiniteError, ParticleEnsemble, init_ensemble
from mfld.estimators import Estimator, EstimatorConfig
from mfld.functionals import Regularizer
from mfld.models import LinearModel, MmdModel, TwoLayerNetModel
from mfld.models.network import xor_dataset

ZERO = Regularizer(0.0)


def zero_model(d):
    return LinearModel.quadratic(np.zeros((d, d)))


def full(model, reg=ZERO, seed=0):
    return Estimator(EstimatorConfig("full"), model, reg, NoiseSource(seed))


class TestStep:
    def test_deterministic_zero_drift(self):
        e = ParticleEnsemble(np.array([[0.3, -2.0]]))
        m = zero_model(2)
        p = DynamicsParams(0.0, 0.1, deterministic=True)
        assert np.array_equal(step(e, m, ZERO, full(m), p).positions, e.positions)

    def test_euler_contraction(self):
        m = LinearModel.isotropic(1)
        p = DynamicsParams(0.0, 0.1, deterministic=True)
        out = step(ParticleEnsemble(np.array([[1.0]])), m, ZERO, full(m), p)
        assert out.positions[0, 0] == pytest.approx(0.9, abs=1e-15)
        assert out.step == 1

    def test_noise_scale(self):
        m = zero_model(1)
        p = DynamicsParams(1.0, 0.01)
        out = step(ParticleEnsemble(np.array([[0.5]])), m, ZERO, full(m), p, noise=np.array([[1.0]]))
        assert out.positions[0, 0] - 0.5 == pytest.approx(0.1414214, abs=1e-7)

    def test_input_unchanged(self, rng):
        X = rng.standard_normal((5, 2))
        e = ParticleEnsemble(X)
        m = LinearModel.isotropic(2)
        step(e, m, ZERO, full(m), DynamicsParams(1.0, 0.1))
        assert np.array_equal(e.positions, X)

    def test_step_mismatch(self):
        m = zero_model(1)
        with pytest.raises(ValueError):
            step(ParticleEnsemble(np.zeros((1, 1)), 2), m, ZERO, full(m), DynamicsParams(1.0), k=3)

    def test_lambda_zero_needs_deterministic_mode(self):
        with pytest.raises(ValueError):
            DynamicsParams(0.0)
        with pytest.raises(ValueError):
            DynamicsParams(1.0, eta=[0.1, -0.1])

    def test_divergence_aborts_with_step(self):
        m = LinearModel.isotropic(1, curvature=-1e200)
        p = DynamicsParams(0.0, 1e200, deterministic=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(NonFiniteError, match="step"):
                step(ParticleEnsemble(np.array([[0.0], [1e200]]), 4), m, ZERO, full(m), p)

    def test_synchronous_update_is_permutation_equivariant(self, rng):
        Z, y = xor_dataset()
        m = TwoLayerNetModel(Z, y)
        reg = Regularizer(0.01)
        X = rng.standard_normal((12, 3))
        xi = rng.standard_normal((12, 3))
        perm = rng.permutation(12)
        p = DynamicsParams(0.1, 0.05)
        a = step(ParticleEnsemble(X), m, reg, Estimator(EstimatorConfig("sgd", 2), m, reg, NoiseSource(3)), p, noise=xi)
        b = step(
            ParticleEnsemble(X[perm]), m, reg, Estimator(EstimatorConfig("sgd", 2), m, reg, NoiseSource(3)), p,
            noise=xi[perm],
        )
        np.testing.assert_allclose(b.positions, a.positions[perm], rtol=1e-13, atol=1e-15)


class TestSchedule:
    def test_constant(self):
        p = DynamicsParams(1.0, 0.01)
        assert schedule_eta(p, 0) == schedule_eta(p, 777) == 0.01

    def test_sequence(self):
        p = DynamicsParams(1.0, [0.1, 0.05], max_steps=2)
        assert schedule_eta(p, 1) == 0.05
        with pytest.raises(IndexError):
            schedule_eta(p, 2)

    def test_warns_once(self):
        p = DynamicsParams(1.0, 1.0, lam1=1.0, lam2=1.0)
        with pytest.warns(StepSizeWarning, match="lam1/"):
            assert schedule_eta(p, 0) == 1.0
        assert p.warned
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            schedule_eta(p, 1)

    def test_lsi_product_warning(self):
        p = DynamicsParams(1.0, 0.2, lam1=1.0, lam2=1.0, alpha=2.0)
        with pytest.warns(StepSizeWarning, match="lambda\\*alpha\\*eta"):
            schedule_eta(p, 0)


class TestThreads:
    def test_resolve(self, monkeypatch):
        assert resolve_threads(3) == 3
        monkeypatch.setenv("MFLD_THREADS", "5")
        assert resolve_threads("auto") == 5
        monkeypatch.delenv("MFLD_THREADS")
        assert resolve_threads("auto") >= 1

    @pytest.mark.parametrize("kind", ["full", "sgd", "svrg"])
    def test_thread_count_does_not_change_results(self, kind):
        c, a = finite_sum_quadratic(64, 2, 1)
        models = [LinearModel.finite_sum(c, a), MmdModel(c[:, :1], 1.0)]
        for m in models:
            e0 = init_ensemble(37, m.dim, GaussianInit(), 3)
            cfg = EstimatorConfig(kind, 8, 3)
            outs = []
            for t in (1, 4, 7):
                _, final = run(e0, m, Regularizer(0.01), cfg, DynamicsParams(0.1, 0.05, 9, seed=2), threads=t)
                outs.append(final.positions)
            assert np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], outs[2])


class TestRun:
    def test_zero_steps(self):
        m = LinearModel.isotropic(2)
        e0 = init_ensemble(10, 2, GaussianInit(), 0)
        trace, final = run(e0, m, ZERO, EstimatorConfig(), DynamicsParams(1.0, 0.1, 0))
        assert [r.step for r in trace] == [0]
        assert final is e0

    def test_logging_schedule(self):
        m = LinearModel.isotropic(2)
        e0 = init_ensemble(10, 2, GaussianInit(), 0)
        trace, final = run(e0, m, ZERO, EstimatorConfig(), DynamicsParams(1.0, 0.1, 25), log_every=10)
        assert [r.step for r in trace] == [0, 10, 20, 25]
        assert final.step == 25

    def test_bad_log_interval(self):
        m = LinearModel.isotropic(1)
        with pytest.raises(ValueError):
            run(init_ensemble(3, 1, GaussianInit(), 0), m, ZERO, EstimatorConfig(), DynamicsParams(1.0), log_every=0)

    def test_gradient_descent_energy_decreases(self):
        m = LinearModel.isotropic(2, curvature=2.0)
        e0 = init_ensemble(20, 2, GaussianInit(1.0, 1.0), 0)
        p = DynamicsParams(0.0, 0.9, 30, deterministic=True)  # below 2 / curvature
        with pytest.warns(StepSizeWarning):
            trace, _ = run(e0, m, ZERO, EstimatorConfig(), p, log_every=1, diagnostics=DiagnosticsSet(entropy=False))
        energies = [r.energy for r in trace]
        assert all(b < a for a, b in zip(energies, energies[1:]))

    def test_same_seed_same_trace(self):
        Z, y = xor_dataset()
        m = TwoLayerNetModel(Z, y)
        e0 = init_ensemble(30, 3, GaussianInit(), 4)
        runs = [
            run(e0, m, Regularizer(1e-3), EstimatorConfig("sgd", 2), DynamicsParams(0.01, 0.1, 20, seed=9), log_every=5)[0]
            for _ in range(2)
        ]
        assert [r.as_row() for r in runs[0]] == [r.as_row() for r in runs[1]]

    def test_estimator_choice_leaves_noise_alone(self):
        # identical per-datum terms make sgd drift equal full drift, so any
        # difference could only come from the noise sequence
        m = LinearModel.finite_sum(np.zeros((6, 2)), np.ones(6))
        e0 = init_ensemble(15, 2, GaussianInit(), 1)
        p = lambda: DynamicsParams(0.5, 0.1, 12, seed=5)
        _, a = run(e0, m, ZERO, EstimatorConfig("full"), p())
        _, b = run(e0, m, ZERO, EstimatorConfig("sgd", 2), p())
        _, c = run(e0, m, ZERO, EstimatorConfig("svrg", 2, 4), p())
        assert np.array_equal(a.positions, b.positions) and np.array_equal(a.positions, c.positions)

    def test_trace_columns(self):
        m = LinearModel.finite_sum(*finite_sum_quadratic(16, 2, 0))
        e0 = init_ensemble(40, 2, GaussianInit(), 0)
        lam = 0.3
        trace, _ = run(
            e0, m, ZERO, EstimatorConfig("sgd", 4), DynamicsParams(lam, 0.05, 4), log_every=2,
            diagnostics=DiagnosticsSet(entropy=True, sigma_v_probe=True, probe_trials=4),
        )
        assert tuple(f for f in trace[0].__dataclass_fields__) == TRACE_COLUMNS
        for r in trace:
            assert r.objective_estimate == pytest.approx(r.energy - lam * r.entropy_estimate, rel=1e-14)
            assert r.sigma_v_probe > 0
            assert r.wall_time is None

    def test_optional_columns_off(self):
        m = LinearModel.isotropic(1)
        trace, _ = run(
            init_ensemble(10, 1, GaussianInit(), 0), m, ZERO, EstimatorConfig(), DynamicsParams(1.0, 0.1, 2),
            diagnostics=DiagnosticsSet(entropy=False, wall_time=True),
        )
        assert trace[-1].entropy_estimate is None and trace[-1].objective_estimate is None
        assert trace[-1].sigma_v_probe is None
        assert trace[-1].wall_time >= 0

    def test_stationary_variance(self):
        # V = ||x||^2 / (2 tau^2): stationary variance lambda tau^2 up to O(eta)
        tau2, lam, eta = 0.5, 0.8, 0.02
        m = LinearModel.isotropic(2, curvature=1 / tau2)
        e = init_ensemble(4000, 2, GaussianInit(0.0, math.sqrt(lam * tau2)), 0)
        p = DynamicsParams(lam, eta, seed=1)
        est = full(m)
        pooled = []
        K = 2000
        for k in range(K):
            e = step(e, m, ZERO, est, p)
            if e.step > K // 2 and e.step % 5 == 0:
                pooled.append(e.positions)
        var = np.var(np.vstack(pooled), axis=0)
        target = lam * tau2
        slack = 3 * eta / tau2  # step size in units of the curvature
        assert np.all(var > target * (1 - slack)) and np.all(var < target * (1 + slack))

    def test_transient_decays_at_least_at_a_third_of_the_bound_rate(self):
        from mfld.diagnostics import lsi_bounds

        m = LinearModel.isotropic(2)
        lam, eta = 1.0, 0.01
        alpha = lsi_bounds(m, ZERO, lam).alpha
        e0 = init_ensemble(4000, 2, GaussianInit(3.0, 0.5), 0)
        trace, _ = run(e0, m, ZERO, EstimatorConfig(), DynamicsParams(lam, eta, 150, seed=0), log_every=10,
                       diagnostics=DiagnosticsSet(entropy=False))
        gap = np.array([r.energy for r in trace]) - 1.0  # stationary energy d lambda / 2
        slope = np.polyfit([r.step for r in trace], np.log(gap), 1)[0]
        assert slope < -(lam * alpha * eta / 2) / 3
