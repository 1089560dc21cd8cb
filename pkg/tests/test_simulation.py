"""Tests for the Monte Carlo closed-loop engine.

The engine runs in error coordinates, so most checks here replay recorded
traces against the defining recursions or compare seeded empirical
statistics with the closed-form analysis layer.
"""

import numpy as np
import pytest

import etlqg.simulation as sim
from etlqg import (
    ControlSynthesis,
    DefinitenessError,
    DivergenceError,
    ModelError,
    SchedulerParams,
    SimConfig,
    aggregate_runs,
    conditional_error_cov,
    gaussian_draw,
    infinite_horizon_cost,
    riccati_backward,
    run_closed_loop,
    run_experiment,
    transition_matrix,
)

from conftest import BENCH_TIMEOUT


def _cfg(model, lam=1.0, timeout=BENCH_TIMEOUT, **kw):
    defaults = dict(horizon=2000, runs=8, seed=99, burn_in=200)
    defaults.update(kw)
    return SimConfig(model=model, params=SchedulerParams(lam=lam, timeout=timeout),
                     **defaults)


class TestGaussianDraw:
    def test_zero_covariance_returns_mean_exactly(self):
        rng = np.random.default_rng(0)
        mean = np.array([3.0, -1.0])
        out = gaussian_draw(rng, mean, np.zeros((2, 2)))
        np.testing.assert_array_equal(out, mean)

    def test_sample_covariance_matches(self, bench_model):
        rng = np.random.default_rng(20240821)
        n_samples = 200_000
        draws = np.empty((n_samples, 2))
        for i in range(n_samples):
            draws[i] = gaussian_draw(rng, np.zeros(2), bench_model.W)
        sample_cov = (draws.T @ draws) / n_samples
        np.testing.assert_allclose(sample_cov, bench_model.W, atol=0.02)

    def test_sample_mean_matches(self, bench_model):
        rng = np.random.default_rng(20240822)
        n_samples = 200_000
        total = np.zeros(2)
        mean = np.array([5.0, 5.0])
        for _ in range(n_samples):
            total += gaussian_draw(rng, mean, bench_model.W)
        np.testing.assert_allclose(total / n_samples, mean, atol=0.02)

    def test_factor_cache_hit(self):
        rng = np.random.default_rng(1)
        cov = np.array([[2.5, 0.3], [0.3, 1.7]])  # not used by other tests
        before = len(sim._factor_cache)
        for _ in range(5):
            gaussian_draw(rng, np.zeros(2), cov)
        assert len(sim._factor_cache) == before + 1

    def test_indefinite_covariance_rejected(self):
        rng = np.random.default_rng(2)
        with pytest.raises(DefinitenessError):
            gaussian_draw(rng, np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ModelError):
            gaussian_draw(rng, np.zeros(3), np.eye(2))


class TestSimConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"horizon": 0},
            {"horizon": 2.5},
            {"horizon": True},
            {"runs": 0},
            {"seed": -1},
            {"burn_in": -1},
            {"burn_in": 2000},
            {"divergence_limit": 0.0},
        ],
    )
    def test_invalid_settings_rejected(self, bench_model, overrides):
        kw = dict(horizon=2000, runs=4, seed=1, burn_in=200)
        kw.update(overrides)
        with pytest.raises(ModelError):
            SimConfig(model=bench_model,
                      params=SchedulerParams(lam=1.0, timeout=10), **kw)

    def test_valid_settings_accepted(self, bench_model):
        cfg = SimConfig(model=bench_model,
                        params=SchedulerParams(lam=1.0, timeout=10),
                        horizon=10, runs=1, seed=0, burn_in=0,
                        divergence_limit=None)
        assert cfg.horizon == 10
        assert cfg.divergence_limit is None


class TestDeterminism:
    def test_repeat_run_bitwise_identical(self, bench_model, bench_filter,
                                          bench_control):
        cfg = _cfg(bench_model, runs=4, horizon=600)
        r1, c1, _ = run_closed_loop(cfg, bench_filter, bench_control)
        r2, c2, _ = run_closed_loop(cfg, bench_filter, bench_control)
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_array_equal(c1, c2)

    def test_chunk_size_does_not_change_the_stream(self, bench_model, bench_filter,
                                                   bench_control, monkeypatch):
        # per-run generators are consumed in fixed order, so the block size
        # used for pregeneration must be invisible in the results
        cfg = _cfg(bench_model, runs=2, horizon=50, burn_in=0, record_trace=True)
        _, _, traces_default = run_closed_loop(cfg, bench_filter, bench_control)
        monkeypatch.setattr(sim, "_CHUNK_STEPS", 7)
        _, _, traces_small = run_closed_loop(cfg, bench_filter, bench_control)
        for a, b in zip(traces_default, traces_small):
            np.testing.assert_array_equal(a.x, b.x)
            np.testing.assert_array_equal(a.sigma, b.sigma)
            np.testing.assert_array_equal(a.u, b.u)

    def test_different_seeds_differ(self, bench_model, bench_filter, bench_control):
        cfg_a = _cfg(bench_model, runs=2, horizon=400, seed=7)
        cfg_b = _cfg(bench_model, runs=2, horizon=400, seed=8)
        ra, _, _ = run_closed_loop(cfg_a, bench_filter, bench_control)
        rb, _, _ = run_closed_loop(cfg_b, bench_filter, bench_control)
        assert not np.array_equal(ra, rb)

    def test_run_experiment_repeatable(self, bench_model, bench_filter,
                                       bench_control):
        cfg = _cfg(bench_model, runs=4, horizon=600)
        res1 = run_experiment(cfg, bench_filter, bench_control)
        res2 = run_experiment(cfg, bench_filter, bench_control)
        assert res1 == res2


class TestAggregateRuns:
    def test_mean_and_stderr(self):
        mean, stderr = aggregate_runs(np.array([1.0, 2.0, 3.0]))
        assert mean == 2.0
        assert stderr == pytest.approx(1.0 / np.sqrt(3.0), rel=1e-12)

    def test_single_value_has_no_stderr(self):
        mean, stderr = aggregate_runs(np.array([4.2]))
        assert mean == 4.2
        assert stderr is None


@pytest.fixture(scope="module")
def traced(bench_model, bench_filter, bench_control):
    cfg = _cfg(bench_model, runs=3, horizon=500, burn_in=0, record_trace=True)
    rates, costs, traces = run_closed_loop(cfg, bench_filter, bench_control)
    return cfg, rates, costs, traces


class TestTraceInvariants:
    def test_counter_and_indicator_consistency(self, traced):
        cfg, _, _, traces = traced
        timeout = cfg.params.timeout
        for tr in traces:
            assert set(np.unique(tr.sigma)) <= {0, 1}
            assert tr.tau.max() <= timeout
            np.testing.assert_array_equal(tr.sigma == 1, tr.tau == 0)
            expected_tau = np.where(tr.sigma[1:] == 1, 0, tr.tau[:-1] + 1)
            np.testing.assert_array_equal(tr.tau[1:], expected_tau)
            forced = tr.tau[:-1] == timeout
            assert np.all(tr.sigma[1:][forced] == 1)

    def test_transmission_resets_controller_estimate(self, traced):
        _, _, _, traces = traced
        for tr in traces:
            sent = tr.sigma == 1
            assert sent.any()
            np.testing.assert_array_equal(tr.xhat_c[sent], tr.xhat_s[sent])
            np.testing.assert_array_equal(tr.e_filt[sent], 0.0)
            np.testing.assert_array_equal(tr.xhat_c, tr.xhat_s - tr.e_filt)

    def test_input_is_linear_feedback(self, traced, bench_control):
        _, _, _, traces = traced
        for tr in traces:
            np.testing.assert_array_equal(tr.u, -(tr.xhat_c @ bench_control.L_inf.T))

    def test_sensor_estimate_follows_filter_recursion(self, traced, bench_model,
                                                      bench_filter):
        # one-step replay from recorded quantities only
        A, B, C = bench_model.A, bench_model.B, bench_model.C
        K = bench_filter.K_inf
        for tr in traced[3]:
            pred = tr.xhat_s[:-1] @ A.T + tr.u[:-1] @ B.T
            innov = tr.y[1:] - pred @ C.T
            expected = pred + innov @ K.T
            np.testing.assert_allclose(tr.xhat_s[1:], expected, atol=1e-8)

    def test_first_step_uses_prior_mean(self, traced, bench_model, bench_filter):
        C, K = bench_model.C, bench_filter.K_inf
        x0_mean = bench_model.x0_mean
        for tr in traced[3]:
            expected = x0_mean + (tr.y[0] - C @ x0_mean) @ K.T
            np.testing.assert_allclose(tr.xhat_s[0], expected, atol=1e-10)

    def test_controller_estimate_propagates_blindly_on_hold(self, traced,
                                                            bench_model):
        A, B = bench_model.A, bench_model.B
        for tr in traced[3]:
            hold = tr.sigma[1:] == 0
            expected = tr.xhat_c[:-1] @ A.T + tr.u[:-1] @ B.T
            np.testing.assert_allclose(tr.xhat_c[1:][hold], expected[hold],
                                       atol=1e-8)

    def test_rate_matches_indicator_mean(self, traced):
        cfg, rates, _, traces = traced
        for r, tr in enumerate(traces):
            assert rates[r] == tr.sigma[cfg.burn_in:].mean()

    def test_cost_matches_stage_sums(self, traced, bench_model):
        cfg, _, costs, traces = traced
        Q, R = bench_model.Q, bench_model.R
        for r, tr in enumerate(traces):
            stages = (np.einsum("ki,ij,kj->k", tr.x, Q, tr.x)
                      + np.einsum("ki,ij,kj->k", tr.u, R, tr.u))
            assert costs[r] == pytest.approx(stages[cfg.burn_in:].mean(), rel=1e-12)

    def test_no_traces_by_default(self, bench_model, bench_filter, bench_control):
        cfg = _cfg(bench_model, runs=2, horizon=300)
        _, _, traces = run_closed_loop(cfg, bench_filter, bench_control)
        assert traces is None


class TestAgainstAnalysis:
    def test_unit_sensitivity_agreement(self, bench_model, bench_filter,
                                        bench_control):
        cfg = _cfg(bench_model, lam=1.0, runs=64, horizon=2000, seed=2024)
        res = run_experiment(cfg, bench_filter, bench_control)
        assert abs(res.empirical_rate - res.analytic_rate) < 4 * res.rate_stderr
        assert abs(res.empirical_cost - res.analytic_cost) < 5 * res.cost_stderr

    def test_low_sensitivity_rate_sits_above_timeout_floor(
        self, bench_model, bench_filter, bench_control
    ):
        """At lam=1e-6 the unstable plant still triggers well above 1/(T+1).

        The held error grows geometrically between resets, so even a tiny
        sensitivity produces a materially higher transmission rate than the
        pure-timeout floor; the simulator must reproduce the analytic value.
        """
        cfg = _cfg(bench_model, lam=1e-6, runs=64, horizon=2000, seed=2025)
        res = run_experiment(cfg, bench_filter, bench_control)
        floor = 1.0 / (BENCH_TIMEOUT + 1)
        assert res.analytic_rate > 1.9 * floor
        assert 0.035 < res.analytic_rate < 0.042
        assert abs(res.empirical_rate - res.analytic_rate) < 4 * res.rate_stderr

    def test_extreme_sensitivity_sends_almost_always(self, bench_model,
                                                     bench_filter, bench_control):
        cfg = _cfg(bench_model, lam=1e6, runs=8, horizon=2000)
        res = run_experiment(cfg, bench_filter, bench_control)
        assert res.analytic_rate >= 0.999
        assert res.empirical_rate >= 0.99

    def test_pure_timeout_cadence_is_exact(self, golden_model, golden_filter,
                                           golden_control):
        # lam underflows to a hold probability of exactly 1, so transmissions
        # happen exactly when the counter hits the timeout
        timeout = 9
        cfg = SimConfig(model=golden_model,
                        params=SchedulerParams(lam=1e-300, timeout=timeout),
                        horizon=100, runs=2, seed=5, burn_in=0,
                        record_trace=True)
        _, _, traces = run_closed_loop(cfg, golden_filter, golden_control)
        expected = (np.arange(100) % (timeout + 1)) == timeout
        for tr in traces:
            np.testing.assert_array_equal(tr.sigma.astype(bool), expected)

    def test_counter_occupancy_matches_stationary_distribution(
        self, bench_model, bench_filter, bench_control
    ):
        cfg = _cfg(bench_model, lam=1.0, runs=4, horizon=50_000, seed=77,
                   record_trace=True)
        _, _, traces = run_closed_loop(cfg, bench_filter, bench_control)
        taus = np.concatenate([tr.tau[cfg.burn_in:] for tr in traces])
        counts = np.bincount(taus, minlength=BENCH_TIMEOUT + 1)
        occupancy = counts / taus.size
        ma = transition_matrix(bench_filter, bench_model.A,
                               SchedulerParams(lam=1.0, timeout=BENCH_TIMEOUT))
        visible = ma.pi > 1e-3
        se = np.sqrt(ma.pi * (1.0 - ma.pi) / taus.size)
        # dependent samples; allow a generous multiple of the iid stderr
        assert np.all(np.abs(occupancy[visible] - ma.pi[visible])
                      < 12 * se[visible] + 1e-4)

    def test_trigger_cost_term_matches_time_average(self, bench_model,
                                                    bench_filter, bench_control):
        """Second route to the trigger penalty: average over simulated counters.

        The analytic term weights Tr(M sigma_e(i)) by the stationary
        distribution; replaying the recorded counter sequence through the
        same table must land on the same value.
        """
        params = SchedulerParams(lam=1.0, timeout=BENCH_TIMEOUT)
        cfg = _cfg(bench_model, lam=1.0, runs=8, horizon=25_000, seed=31,
                   record_trace=True)
        _, _, traces = run_closed_loop(cfg, bench_filter, bench_control)
        ma = transition_matrix(bench_filter, bench_model.A, params)
        cec = conditional_error_cov(bench_filter, bench_model.A, params)
        bd = infinite_horizon_cost(bench_control, bench_filter, ma, cec,
                                   bench_model)
        table = np.array([float(np.trace(bench_control.M_inf @ s))
                          for s in cec.sigmas])
        taus = np.concatenate([tr.tau[cfg.burn_in:] for tr in traces])
        empirical = table[taus].mean()
        assert empirical == pytest.approx(bd.trigger_term, rel=0.02)


class TestDivergenceGuard:
    def _open_loop(self, bench_model):
        # zero feedback leaves the unstable plant uncontrolled
        return ControlSynthesis(L_inf=np.zeros((1, 2)), S_inf=np.eye(2),
                                M_inf=np.eye(2))

    def test_guard_raises_with_location(self, bench_model, bench_filter):
        cfg = SimConfig(model=bench_model,
                        params=SchedulerParams(lam=1e-12, timeout=BENCH_TIMEOUT),
                        horizon=2000, runs=3, seed=11, burn_in=0,
                        divergence_limit=1e6)
        with pytest.raises(DivergenceError) as exc:
            run_closed_loop(cfg, bench_filter, self._open_loop(bench_model))
        err = exc.value
        assert err.step > 0
        assert 0 <= err.run < 3
        assert err.value > 1e6
        assert "diverged" in str(err)

    def test_guard_disabled_runs_to_completion(self, bench_model, bench_filter):
        cfg = SimConfig(model=bench_model,
                        params=SchedulerParams(lam=1e-12, timeout=BENCH_TIMEOUT),
                        horizon=800, runs=2, seed=11, burn_in=0,
                        divergence_limit=None)
        rates, costs, _ = run_closed_loop(cfg, bench_filter,
                                          self._open_loop(bench_model))
        assert np.all(np.isfinite(rates))
        assert costs.shape == (2,)

    def test_missing_gain_rejected(self, bench_model, bench_filter):
        cfg = _cfg(bench_model, runs=2, horizon=300)
        finite_only = riccati_backward(bench_model, 4)
        with pytest.raises(ModelError):
            run_closed_loop(cfg, bench_filter, finite_only)


class TestScheduleControlSeparation:
    def test_schedule_is_bitwise_independent_of_feedback(self, bench_model,
                                                         bench_filter,
                                                         bench_control):
        """The trigger path never reads the state or the input.

        Swapping the feedback gain for zero (open loop) must leave the
        transmission pattern bitwise unchanged under the same seed.
        """
        open_loop = ControlSynthesis(L_inf=np.zeros((1, 2)), S_inf=np.eye(2),
                                     M_inf=np.eye(2))
        kw = dict(horizon=1000, runs=2, seed=313, burn_in=0,
                  record_trace=True, divergence_limit=None)
        cfg = SimConfig(model=bench_model,
                        params=SchedulerParams(lam=1.0, timeout=BENCH_TIMEOUT),
                        **kw)
        _, _, closed = run_closed_loop(cfg, bench_filter, bench_control)
        _, _, opened = run_closed_loop(cfg, bench_filter, open_loop)
        for a, b in zip(closed, opened):
            np.testing.assert_array_equal(a.sigma, b.sigma)
            np.testing.assert_array_equal(a.tau, b.tau)
            np.testing.assert_array_equal(a.e_filt, b.e_filt)
            assert not np.array_equal(a.x, b.x)


class TestExperimentResult:
    def test_fields_echo_configuration(self, bench_model, bench_filter,
                                       bench_control):
        cfg = _cfg(bench_model, lam=2.0, runs=3, horizon=400, seed=17)
        res = run_experiment(cfg, bench_filter, bench_control)
        assert res.lam == 2.0
        assert res.timeout == BENCH_TIMEOUT
        assert res.runs == 3
        assert res.horizon == 400
        assert res.seed == 17
        assert res.burn_in == 200

    def test_single_run_has_no_stderr(self, bench_model, bench_filter,
                                      bench_control):
        cfg = _cfg(bench_model, runs=1, horizon=400)
        res = run_experiment(cfg, bench_filter, bench_control)
        assert res.rate_stderr is None
        assert res.cost_stderr is None
        assert res.empirical_rate is not None

    def test_analytic_fields_match_direct_pipeline(self, bench_model,
                                                   bench_filter, bench_control):
        params = SchedulerParams(lam=0.4, timeout=BENCH_TIMEOUT)
        cfg = _cfg(bench_model, lam=0.4, runs=2, horizon=300)
        res = run_experiment(cfg, bench_filter, bench_control)
        ma = transition_matrix(bench_filter, bench_model.A, params)
        cec = conditional_error_cov(bench_filter, bench_model.A, params)
        bd = infinite_horizon_cost(bench_control, bench_filter, ma, cec,
                                   bench_model)
        assert res.analytic_rate == ma.rate
        assert res.analytic_cost == bd.total
