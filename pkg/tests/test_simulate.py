import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergharvest import (AmbiguityProblem, InputDomainError, SimConfig,
                        SimulationAbortError, estimate_payoff, path_rng,
                        reflect_step, simulate_path, worst_case_kernel,
                        x0_independence_check)


class TestReflectStep:
    def test_no_motion(self):
        assert reflect_step(0.5, 0.0, 0.0, 1.0) == (0.5, 0.0)

    def test_overshoot_harvested(self):
        x_next, dz = reflect_step(0.9, 0.15, 0.15, 1.0)
        assert x_next == 1.0
        assert dz == pytest.approx(0.2)

    def test_negative_proposal_clipped_without_harvest(self):
        x_next, dz = reflect_step(0.1, -0.5, 0.0, 1.0)
        assert x_next == 0.0
        assert dz == 0.0

    @settings(max_examples=300, deadline=None)
    @given(x=st.floats(0.0, 1.0), drift=st.floats(-2.0, 2.0),
           noise=st.floats(-2.0, 2.0))
    def test_projection_properties(self, x, drift, noise):
        beta = 1.0
        x_next, dz = reflect_step(x, drift, noise, beta)
        proposed = x + drift + noise
        assert 0.0 <= x_next <= beta
        assert dz >= 0.0
        if proposed > beta:
            # Harvest only at the boundary and only by the overshoot.
            assert x_next == beta
            assert dz == pytest.approx(proposed - beta, abs=1e-12)
        elif proposed >= 0.0:
            assert dz == 0.0
            assert x_next == pytest.approx(proposed, abs=1e-12)
        else:
            assert x_next == 0.0
            assert dz == 0.0

    def test_vectorized_matches_scalar(self):
        xs = np.array([0.2, 0.9, 0.99])
        drifts = np.array([0.0, 0.2, -1.5])
        noises = np.array([0.05, 0.0, 0.0])
        xn, dz = reflect_step(xs, drifts, noises, 1.0)
        for i in range(3):
            sx, sdz = reflect_step(float(xs[i]), float(drifts[i]),
                                   float(noises[i]), 1.0)
            assert xn[i] == sx and dz[i] == sdz


class TestWorstCaseKernel:
    def test_value_at_threshold(self, problem1, sol1):
        got = worst_case_kernel(problem1, sol1, sol1.threshold)
        expected = -problem1.epsilon * problem1.model.sigma(sol1.threshold)
        assert got == pytest.approx(expected, abs=1e-14)

    def test_zero_ambiguity_means_zero_kernel(self, problem0, sol0):
        xs = np.linspace(0.01, sol0.threshold, 7)
        assert np.all(worst_case_kernel(problem0, sol0, xs) == 0.0)

    def test_bounded_by_threshold_noise_scale(self, problem1, sol1):
        xs = np.geomspace(1e-7, sol1.threshold, 20000)
        psi = worst_case_kernel(problem1, sol1, xs)
        bound = problem1.epsilon * problem1.model.sigma(sol1.threshold)
        assert np.max(np.abs(psi)) <= bound * (1.0 + 1e-8)


@dataclasses.dataclass(frozen=True)
class _FrozenDrift:
    """Stub coefficients with constant total drift and negligible noise."""

    rate: float = 0.3

    def mu(self, x):
        return self.rate / x

    def sigma(self, x):
        return 1e-12 * x


def _frozen_problem(rate=0.3):
    return AmbiguityProblem(model=_FrozenDrift(rate), epsilon=0.0,
                            drift_peak=0.5, drift_zero=1.0, x_max=10.0)


def _small_cfg(problem, sol, **kw):
    defaults = dict(problem=problem, beta=sol.threshold, x0=sol.threshold,
                    dt=1e-3, horizon=10.0, n_paths=16, seed=123)
    defaults.update(kw)
    return SimConfig(**defaults)


class TestSimulatePath:
    def test_constant_drift_harvests_at_that_rate(self):
        problem = _frozen_problem(rate=0.3)
        cfg = SimConfig(problem=problem, beta=1.0, x0=1.0, dt=1e-3,
                        horizon=5.0, n_paths=1, burn_in=0.0, seed=1)
        stats = simulate_path(cfg, 0)
        assert stats.payoff_estimate == pytest.approx(0.3, rel=1e-6)
        assert stats.kl_penalty == 0.0
        assert stats.max_x <= 1.0

    def test_initial_overshoot_is_instant_harvest(self):
        problem = _frozen_problem(rate=0.0)
        cfg = SimConfig(problem=problem, beta=1.0, x0=1.5, dt=1e-3,
                        horizon=1.0, n_paths=1, burn_in=0.0, seed=1)
        stats = simulate_path(cfg, 0)
        # Zero drift and negligible noise: the only harvest is the projection
        # of the starting point onto the boundary.
        assert stats.harvest_total == pytest.approx(0.5, abs=1e-9)

    def test_burn_in_discards_initial_jump(self):
        problem = _frozen_problem(rate=0.0)
        cfg = SimConfig(problem=problem, beta=1.0, x0=1.5, dt=1e-3,
                        horizon=1.0, n_paths=1, burn_in=0.2, seed=1)
        stats = simulate_path(cfg, 0)
        assert stats.harvest_total == pytest.approx(0.0, abs=1e-9)

    def test_single_path_matches_batched_member(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=8, horizon=4.0)
        est = estimate_payoff(cfg)
        alone = simulate_path(cfg, 5)
        batched = est.per_path[5]
        assert alone.payoff_estimate == batched.payoff_estimate
        assert alone.harvest_total == batched.harvest_total
        assert np.array_equal(alone.occupation_histogram,
                              batched.occupation_histogram)

    def test_seed_reproducibility_and_stream_independence(self, problem0,
                                                          sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=4, horizon=2.0)
        a = simulate_path(cfg, 0)
        b = simulate_path(cfg, 0)
        c = simulate_path(cfg, 1)
        assert a.payoff_estimate == b.payoff_estimate
        assert a.payoff_estimate != c.payoff_estimate
        other_seed = dataclasses.replace(cfg, seed=cfg.seed + 1)
        d = simulate_path(other_seed, 0)
        assert d.payoff_estimate != a.payoff_estimate

    def test_pathwise_state_stays_in_band(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=4, horizon=4.0)
        for s in estimate_payoff(cfg).per_path:
            assert s.max_x <= cfg.beta
            assert s.harvest_total >= 0.0
            assert s.negative_proposals == 0

    def test_occupation_histogram_counts_retained_samples(self, problem0,
                                                          sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=2, horizon=4.0,
                         occupation_stride=4)
        stats = simulate_path(cfg, 0)
        retained = cfg.n_steps - cfg.burn_steps
        expected = math.ceil(retained / cfg.occupation_stride)
        assert stats.occupation_histogram.sum() == expected

    def test_negativity_counter_small_at_defaults(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=8, horizon=10.0, dt=1e-3)
        est = estimate_payoff(cfg)
        steps = (cfg.n_steps - cfg.burn_steps) * cfg.n_paths
        frac = sum(s.negative_proposals for s in est.per_path) / steps
        assert frac < 1e-3


class TestEstimate:
    def test_single_path_aggregate_flags_undefined_se(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=1, horizon=2.0)
        est = estimate_payoff(cfg)
        assert est.std_error == 0.0
        assert not est.se_defined
        assert est.n_paths == 1

    def test_split_window_diagnostic_present(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=16, horizon=10.0)
        est = estimate_payoff(cfg)
        assert math.isfinite(est.first_half_mean)
        assert math.isfinite(est.second_half_mean)
        assert est.split_consistent

    def test_jobs_do_not_change_results(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=6, horizon=2.0)
        seq = estimate_payoff(cfg, jobs=1)
        par = estimate_payoff(cfg, jobs=2)
        assert seq.mean == par.mean
        for a, b in zip(seq.per_path, par.per_path):
            assert a.payoff_estimate == b.payoff_estimate

    def test_abort_detection_raises_on_poisoned_kernel(self, problem1, sol1):
        cfg = SimConfig(problem=problem1, beta=sol1.threshold,
                        x0=sol1.threshold, dt=1e-3, horizon=1.0, n_paths=4,
                        seed=9, measure="custom",
                        kernel_xs=np.array([0.0, sol1.threshold]),
                        kernel_values=np.array([float("nan"), float("nan")]))
        with pytest.raises(SimulationAbortError):
            estimate_payoff(cfg)

    def test_dt_refinement_consistency(self, problem0, sol0):
        coarse = estimate_payoff(_small_cfg(problem0, sol0, n_paths=48,
                                            horizon=20.0, dt=1e-3))
        fine = estimate_payoff(_small_cfg(problem0, sol0, n_paths=48,
                                          horizon=20.0, dt=5e-4))
        gap = abs(coarse.mean - fine.mean)
        assert gap <= 3.0 * math.hypot(coarse.std_error, fine.std_error)

    def test_kl_penalty_zero_under_reference(self, problem1, sol1):
        cfg = _small_cfg(problem1, sol1, n_paths=4, horizon=2.0,
                         measure="reference")
        est = estimate_payoff(cfg)
        assert all(s.kl_penalty == 0.0 for s in est.per_path)

    def test_kl_penalty_positive_under_worst_case(self, problem1, sol1):
        cfg = _small_cfg(problem1, sol1, n_paths=4, horizon=2.0,
                         measure="worstcase", solution=sol1)
        est = estimate_payoff(cfg)
        assert all(s.kl_penalty > 0.0 for s in est.per_path)

    def test_reference_run_upper_bounds_adversarial_value(self, problem1,
                                                          sol1):
        # Without the adverse tilt there is no penalty and the drift is more
        # favorable: the estimate can only sit above the adversarial value.
        cfg = _small_cfg(problem1, sol1, n_paths=32, horizon=20.0,
                         measure="reference")
        est = estimate_payoff(cfg)
        assert est.mean >= sol1.long_run_yield - 3.0 * est.std_error


class TestX0Independence:
    def test_consistent_across_starts(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=32, horizon=20.0)
        beta = sol0.threshold
        report = x0_independence_check(cfg, [0.1 * beta, beta, 2.0 * beta])
        assert report.consistent
        assert report.worst_pair_gap() <= 1.0

    def test_start_above_boundary_projects_immediately(self, problem0, sol0):
        cfg = _small_cfg(problem0, sol0, n_paths=2, horizon=2.0,
                         x0=2.0 * sol0.threshold)
        stats = simulate_path(cfg, 0)
        assert stats.max_x <= sol0.threshold


class TestConfigValidation:
    def test_rejects_bad_fields(self, problem0, sol0):
        with pytest.raises(InputDomainError):
            SimConfig(problem=problem0, beta=-1.0, x0=0.5)
        with pytest.raises(InputDomainError):
            SimConfig(problem=problem0, beta=1.0, x0=0.5, dt=2.0, horizon=1.0)
        with pytest.raises(InputDomainError):
            SimConfig(problem=problem0, beta=1.0, x0=0.5, burn_in=0.7)
        with pytest.raises(InputDomainError):
            SimConfig(problem=problem0, beta=1.0, x0=0.5, measure="optimist")
        with pytest.raises(InputDomainError):
            SimConfig(problem=problem0, beta=1.0, x0=0.5, measure="worstcase")

    def test_path_rng_streams_are_distinct(self):
        a = path_rng(1, 0).standard_normal(4)
        b = path_rng(1, 1).standard_normal(4)
        c = path_rng(2, 0).standard_normal(4)
        assert not np.allclose(a, b)
        assert not np.allclose(a, c)
        assert np.array_equal(a, path_rng(1, 0).standard_normal(4))
