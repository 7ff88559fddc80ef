import numpy as np
import pytest

from helpers import make_panel

from adafat import (
    FactorConfig,
    TestConfig,
    adafat_run,
    compute_theta,
    estimate_factors,
    estimate_zeta,
    p_values,
    run_procedure,
    t_adjusted,
    t_original,
    threshold_star,
    validate_dataset,
)
from adafat.errors import ConvergenceWarning, SubsetTooSmallError


def null_panel(seed, n=60, m=50):
    rng = np.random.default_rng(seed)
    data, *_ = make_panel(rng, n=n, m=m, q=2, p=1)
    return data


class TestAdafatRun:
    def test_degenerates_to_full_set_fit_when_nothing_rejected(self):
        # Find a seeded null panel where the original tests reject nothing.
        for seed in range(30):
            data = null_panel(seed)
            p_ori = p_values(t_original(data))
            if threshold_star(p_ori, 0.5, 0.1) == 0.0:
                break
        else:
            pytest.fail("no quiet seed found")
        outcome, trace = adafat_run(data)
        assert trace.iterations[0].null_subset.size == data.m
        fatdw = run_procedure("fatdw", data)
        np.testing.assert_array_equal(
            np.flatnonzero(trace.iterations[0].rejected >= 0) * 0
            + trace.iterations[0].rejected,
            fatdw.rejected,
        )

    def test_converges_on_null_panel_quickly(self):
        data = null_panel(3)
        outcome, trace = adafat_run(data)
        assert trace.converged
        assert trace.iterations_used <= 3

    def test_fixed_point_survives_extra_round(self):
        rng = np.random.default_rng(60)
        alpha = np.zeros(80)
        alpha[:16] = 1.8
        data, _, _, _, _ = make_panel(rng, n=100, m=80, q=2, p=1, alpha=alpha)
        config = TestConfig()
        outcome, trace = adafat_run(data, config)
        assert trace.converged
        # One extra regression from the final subset reproduces the output.
        theta = compute_theta(data)
        est = estimate_factors(data, config.factor_config())
        final = trace.iterations[-1]
        zeta = estimate_zeta(est, theta, final.null_subset)
        p = p_values(t_adjusted(theta, est, zeta))
        t_star = threshold_star(p, config.nu, config.tau)
        np.testing.assert_array_equal(np.flatnonzero(p <= t_star), outcome.rejected)

    def test_frozen_estimates_reproduce_trace(self):
        rng = np.random.default_rng(61)
        alpha = np.zeros(60)
        alpha[:12] = 1.6
        data, _, _, _, _ = make_panel(rng, n=90, m=60, q=2, p=1, alpha=alpha)
        config = TestConfig()
        _, trace = adafat_run(data, config)
        theta = compute_theta(data)
        est = estimate_factors(data, config.factor_config())
        for record in trace.iterations:
            zeta = estimate_zeta(est, theta, record.null_subset)
            np.testing.assert_array_equal(zeta, record.zeta_hat)

    def test_subset_updates_are_disjoint_and_shrinking(self):
        rng = np.random.default_rng(62)
        alpha = np.zeros(70)
        alpha[:20] = 1.5
        data, _, _, _, _ = make_panel(rng, n=80, m=70, q=2, p=1, alpha=alpha)
        _, trace = adafat_run(data)
        sizes = [it.null_subset.size for it in trace.iterations]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))
        for prev, nxt in zip(trace.iterations, trace.iterations[1:]):
            assert np.intersect1d(nxt.null_subset, prev.rejected).size == 0

    def test_rejection_set_spans_all_tests_not_just_subset(self):
        # The thresholding step scores every test, including ones already
        # outside the null-subset estimate.
        rng = np.random.default_rng(63)
        alpha = np.zeros(80)
        alpha[:16] = 2.0
        data, _, split, _, _ = make_panel(rng, n=100, m=80, q=2, p=1, alpha=alpha)
        outcome, trace = adafat_run(data)
        assert outcome.rejected.size >= 10
        final = trace.iterations[-1]
        assert np.intersect1d(outcome.rejected, final.null_subset).size < outcome.rejected.size

    def test_subset_too_small_at_first_step(self):
        rng = np.random.default_rng(64)
        n, m = 30, 25
        alpha = rng.choice([-8.0, 8.0], m)
        Y = alpha[None, :] + 0.5 * rng.standard_normal((n, m))
        data = validate_dataset(Y)
        with pytest.raises(SubsetTooSmallError) as excinfo:
            adafat_run(data)
        assert excinfo.value.trace is not None

    def test_max_iter_returns_unconverged(self):
        rng = np.random.default_rng(65)
        alpha = np.zeros(60)
        alpha[:15] = 1.2
        data, _, _, _, _ = make_panel(rng, n=70, m=60, q=2, p=1, alpha=alpha)
        with pytest.warns(ConvergenceWarning):
            outcome, trace = adafat_run(data, TestConfig(max_iter=1))
        assert not trace.converged
        assert trace.iterations_used == 1
        assert outcome.method == "adafat"

    def test_run_procedure_dispatch_matches(self):
        rng = np.random.default_rng(67)
        alpha = np.zeros(50)
        alpha[:10] = 1.5
        data, _, _, _, _ = make_panel(rng, n=80, m=50, q=2, p=1, alpha=alpha)
        direct, _ = adafat_run(data)
        dispatched = run_procedure("adafat", data)
        np.testing.assert_array_equal(direct.rejected, dispatched.rejected)
        assert direct.threshold == dispatched.threshold

    def test_trace_serialization(self):
        data = null_panel(5)
        _, trace = adafat_run(data)
        blob = trace.to_json_dict()
        assert blob["iterations_used"] == len(blob["subset_sizes"])
        assert blob["converged"] in (True, False)
        assert all(isinstance(s, int) for s in blob["subset_sizes"])
