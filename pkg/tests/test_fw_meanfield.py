import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpop.fw_meanfield import (FrequencyState, SystemParams, default_dt,
                                  draw_labels, droplet_measure,
                                  emergence_experiment, empirical_distribution,
                                  empirical_mean, initial_all_type1, step_system)
from dualpop.fw_single import DiffusionParams, step_fw
from dualpop.seeding import make_rng


class TestStepSystem:
    def test_all_ones_absorbing_without_mutation(self, rng):
        params = SystemParams(N=20, c=1.0, s=1.0, d=1.0, m=0.0)
        state = initial_all_type1(params)
        for _ in range(50):
            state = step_system(state, params, 1e-3, rng)
        assert np.all(state.x1 == 1.0)

    def test_all_zeros_fixed(self, rng):
        params = SystemParams(N=20, c=1.0, s=1.0, d=1.0, m=1.0)
        state = FrequencyState(x1=np.zeros(20))
        for _ in range(50):
            state = step_system(state, params, 1e-3, rng)
        assert np.all(state.x1 == 0.0)

    def test_confinement_under_stepping(self, rng):
        params = SystemParams(N=50, c=2.0, s=3.0, d=2.0, m=1.0)
        state = FrequencyState(x1=rng.uniform(0, 1, 50))
        for _ in range(200):
            state = step_system(state, params, 5e-3, rng)
            assert np.all((state.x1 >= 0.0) & (state.x1 <= 1.0))

    def test_two_type_closure_mirror(self, rng):
        # stepping x2 = 1 - x1 with the advantageous-side drift and negated
        # noise reproduces 1 - (stepped x1) up to round-off
        params = SystemParams(N=30, c=1.2, s=0.8, d=1.5, m=0.5)
        x1 = rng.uniform(0, 1, 30)
        noise = rng.standard_normal(30)
        dt = 1e-3

        xbar1 = x1.mean()
        yy = x1 * (1.0 - x1)
        mrate = params.mutation_rate
        stepped_x1 = np.clip(
            x1 + (params.c * (xbar1 - x1) - params.s * yy - mrate * x1) * dt
            + np.sqrt(params.d * yy * dt) * noise, 0.0, 1.0)

        x2 = 1.0 - x1
        xbar2 = x2.mean()
        stepped_x2 = np.clip(
            x2 + (params.c * (xbar2 - x2) + params.s * yy + mrate * (1.0 - x2)) * dt
            + np.sqrt(params.d * yy * dt) * (-noise), 0.0, 1.0)

        np.testing.assert_allclose(stepped_x2, 1.0 - stepped_x1, atol=1e-12)

    def test_rejects_nonfinite(self, rng):
        params = SystemParams(N=3, c=1.0, s=1.0, d=1.0, m=0.0)
        with pytest.raises(ValueError):
            FrequencyState(x1=np.array([0.1, np.nan, 0.2]))
        state = FrequencyState(x1=np.array([0.1, 0.2, 0.3]))
        with pytest.raises(ValueError):
            step_system(state, params, -1.0, rng)

    def test_single_site_reduction_matches_fw_single(self, rng_factory):
        # N=1: migration cancels, so x2 follows the single-site diffusion with
        # restoring force m toward 1; KS on the time-t marginals
        n_paths = 10_000
        t, dt = 0.5, 1e-3
        params = SystemParams(N=1, c=3.7, s=1.0, d=1.0, m=0.8, L=1.0)
        rng_a = rng_factory(1)
        x1 = np.full((n_paths, 1), 0.5)
        for _ in range(int(t / dt)):
            xbar = x1.mean(axis=1, keepdims=True)
            yy = x1 * (1 - x1)
            x1 = np.clip(x1 + (params.c * (xbar - x1) - params.s * yy
                               - params.mutation_rate * x1) * dt
                         + np.sqrt(params.d * yy * dt) * rng_a.standard_normal(x1.shape),
                         0.0, 1.0)
        sys_marginal = 1.0 - x1[:, 0]

        single = DiffusionParams(c=0.8, s=1.0, d=1.0, m_bar=1.0)
        rng_b = rng_factory(2)
        y = np.full(n_paths, 0.5)
        for _ in range(int(t / dt)):
            y = step_fw(y, single, dt, rng_b.standard_normal(n_paths))

        stat = scipy.stats.ks_2samp(sys_marginal, y)
        assert stat.pvalue > 0.01


class TestSummaries:
    def test_empirical_means(self):
        state = FrequencyState(x1=np.ones(4))
        assert empirical_mean(state, 1) == 1.0
        assert empirical_mean(state, 2) == 0.0
        state = FrequencyState(x1=np.array([0.2, 0.6]))
        assert empirical_mean(state, 2) == pytest.approx(0.6)

    def test_empirical_mean_rejects_bad_type(self):
        with pytest.raises(ValueError):
            empirical_mean(FrequencyState(x1=np.array([0.5])), 3)

    def test_droplet_measure_empty_at_all_ones(self, rng):
        state = FrequencyState(x1=np.ones(5))
        labels = draw_labels(5, rng)
        assert droplet_measure(state, labels).n_atoms == 0

    def test_droplet_single_atom(self, rng):
        state = FrequencyState(x1=np.array([0.7]))
        meas = droplet_measure(state, draw_labels(1, rng))
        assert meas.n_atoms == 1
        assert meas.total_mass == pytest.approx(0.3)

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_droplet_total_mass_identity(self, values):
        x1 = np.array(values)
        state = FrequencyState(x1=x1)
        labels = np.linspace(0.01, 0.99, len(values))
        meas = droplet_measure(state, labels)
        expected = (1.0 - x1)[(1.0 - x1) > 1e-12].sum()
        assert meas.total_mass == pytest.approx(expected, abs=1e-12)
        assert meas.total_mass == pytest.approx(
            len(values) * empirical_mean(state, 2), abs=1e-9)

    def test_empirical_distribution_extremes(self):
        bins = 10
        zero = empirical_distribution(FrequencyState(x1=np.ones(8)), bins)
        assert zero.masses[0] == 1.0
        one = empirical_distribution(FrequencyState(x1=np.zeros(8)), bins)
        assert one.masses[-1] == 1.0
        half = empirical_distribution(
            FrequencyState(x1=np.array([0.0, 0.0, 1.0, 1.0])), bins)
        assert half.masses[0] == 0.5 and half.masses[-1] == 0.5

    def test_empirical_distribution_needs_two_bins(self):
        with pytest.raises(ValueError):
            empirical_distribution(FrequencyState(x1=np.ones(3)), 1)


class TestEmergence:
    def test_no_mutation_no_emergence(self, rng):
        params = SystemParams(N=16, c=1.0, s=1.0, d=1.0, m=0.0)
        res = emergence_experiment(params, alpha_hat=0.6, t_window=(-1.0, 1.0),
                                   replicas=4, rng=rng, n_samples=9)
        assert np.all(res.mean_type2 == 0.0)
        assert np.all(np.isnan(res.half_takeover))

    def test_window_truncated_at_zero(self, rng):
        params = SystemParams(N=4, c=1.0, s=1.0, d=1.0, m=1.0)
        res = emergence_experiment(params, alpha_hat=5.0, t_window=(-50.0, 0.5),
                                   replicas=2, rng=rng, n_samples=7)
        assert res.times[0] == 0.0

    def test_mutation_rate_speeds_takeover(self, rng_factory):
        # coupled seeds: raising m shifts half-takeover times down
        base = dict(N=24, c=1.0, s=1.0, d=1.0)
        t_small = emergence_experiment(SystemParams(m=0.5, **base), 0.6,
                                       (-2.0, 2.0), 12, rng_factory(7),
                                       n_samples=5).half_takeover
        t_large = emergence_experiment(SystemParams(m=4.0, **base), 0.6,
                                       (-2.0, 2.0), 12, rng_factory(7),
                                       n_samples=5).half_takeover
        assert np.nanmedian(t_large) < np.nanmedian(t_small)

    def test_default_dt_heuristic(self):
        params = SystemParams(N=100, c=1.0, s=1.0, d=1.0, m=1.0)
        assert default_dt(params) == pytest.approx(
            1e-3 / (3.0 + 1.0 / 100.0), rel=1e-12)
