import math

import numpy as np
import pytest
import scipy.linalg

from dualpop.particles import (EquilibriumTailError, EventRecord, FiniteRun,
                               OccupancyState, ParticleParams, _site_rates,
                               equilibrium_mean, intensity_trajectory,
                               self_consistent_intensity, simulate_collision_free,
                               simulate_single_site_internal,
                               single_site_equilibrium, step_eta_finite,
                               step_eta_limit)

from conftest import assert_z


class TestParams:
    def test_finite_and_limit_are_exclusive(self):
        with pytest.raises(ValueError):
            ParticleParams(c=1.0, s=1.0, d=1.0, N=10, iota=0.5)
        with pytest.raises(ValueError):
            ParticleParams(c=1.0, s=1.0, d=-1.0)

    def test_state_invariants(self):
        with pytest.raises(ValueError):
            OccupancyState(counts={1: 0})
        st = OccupancyState(counts={1: 2, 4: 1})
        assert st.total == 3 and st.occupied == 2


class TestRates:
    def test_no_death_for_lone_particle(self):
        b, dth, mv = _site_rates(1, ParticleParams(c=1.0, s=2.0, d=5.0, N=3), True)
        assert dth == 0.0

    def test_mean_production_balances_at_carrying_scale(self):
        # birth minus death rate at k=3 with s=2, d=1 is 2*3 - 1*3*2 = 0
        b, dth, _ = _site_rates(3, ParticleParams(c=0.0, s=2.0, d=1.0, N=1), True)
        assert b - dth == 0.0

    def test_lone_particle_does_not_emigrate_in_limit(self):
        _, _, mv = _site_rates(1, ParticleParams(c=2.0, s=1.0, d=1.0), False)
        assert mv == 0.0

    def test_finite_keeps_migration_for_singletons(self):
        _, _, mv = _site_rates(1, ParticleParams(c=2.0, s=1.0, d=1.0, N=5), True)
        assert mv == 2.0


class TestSteppers:
    def test_extinct_state_signalled(self, rng):
        params = ParticleParams(c=1.0, s=1.0, d=1.0, N=4)
        state = OccupancyState(counts={})
        new, ev = step_eta_finite(state, params, rng)
        assert ev.kind == "extinct"
        assert new.counts == {}

    def test_finite_step_count_bookkeeping(self, rng):
        params = ParticleParams(c=1.0, s=1.0, d=1.0, N=6)
        state = OccupancyState(counts={1: 3, 4: 2})
        for _ in range(200):
            before = state.total
            state, ev = step_eta_finite(state, params, rng)
            delta = {"birth": 1, "death": -1, "migrate": 0}[ev.kind]
            assert state.total == before + delta
            assert all(v > 0 for v in state.counts.values())

    def test_limit_emigrant_lands_on_lowest_empty(self, rng_factory):
        params = ParticleParams(c=50.0, s=0.0, d=0.0)
        state = OccupancyState(counts={1: 2, 2: 1})
        rng = rng_factory(3)
        for _ in range(50):
            state, ev = step_eta_limit(state, params, rng)
            if ev.kind == "emigrate":
                assert ev.dest == 3
                assert state.counts[3] == 1
                break
        else:
            pytest.fail("no emigration observed at overwhelming rate")

    def test_limit_immigration_targets_tracked_window(self, rng):
        params = ParticleParams(c=1.0, s=0.0, d=1.0, iota=2.0)
        state = OccupancyState(counts={1: 1})
        seen_kinds = set()
        for _ in range(100):
            state, ev = step_eta_limit(state, params, rng, n_tracked=3)
            seen_kinds.add(ev.kind)
            if ev.kind == "immigrate":
                assert 1 <= ev.site <= 3
        assert "immigrate" in seen_kinds

    def test_yule_mean_when_death_off(self, rng_factory):
        # d = 0: migration preserves count, so the total is a pure Yule process
        params = ParticleParams(c=1.0, s=1.0, d=0.0, N=7)
        t = 1.0
        totals = []
        for r in range(4000):
            run = FiniteRun(params, rng_factory(r), init={1: 1})
            run.run_until(t)
            totals.append(run.total)
        totals = np.array(totals, dtype=float)
        assert_z(totals.mean(), totals.std() / math.sqrt(len(totals)),
                 math.exp(t), z_max=3.5, label="Yule mean")

    def test_coupled_seed_death_dominance(self, rng_factory):
        params0 = ParticleParams(c=1.0, s=1.0, d=0.0, N=5)
        params1 = ParticleParams(c=1.0, s=1.0, d=1.0, N=5)
        tot0 = tot1 = 0
        for r in range(300):
            a = FiniteRun(params0, rng_factory(r), init={1: 2})
            b = FiniteRun(params1, rng_factory(r), init={1: 2})
            a.run_until(2.0)
            b.run_until(2.0)
            tot0 += a.total
            tot1 += b.total
        assert tot0 > tot1

    def test_occupation_integral_exact_for_frozen_chain(self, rng):
        # s = d = 0: only migration events; the count is constant 1
        params = ParticleParams(c=1.0, s=0.0, d=0.0, N=3)
        run = FiniteRun(params, rng, init={1: 1})
        run.run_until(2.5)
        assert run.total == 1
        assert run.occupation_integral == pytest.approx(2.5, abs=1e-12)


class TestCollisionFree:
    def test_sites_stay_contiguous_and_never_empty(self, rng):
        params = ParticleParams(c=1.0, s=1.0, d=1.0)
        run = simulate_collision_free(params, 6.0, rng)
        assert np.all(run.counts >= 1)
        assert np.all(np.diff(run.k_values) == 1)

    def test_replayed_site_table_matches_final_counts(self, rng):
        params = ParticleParams(c=1.0, s=1.0, d=0.7)
        run = simulate_collision_free(params, 5.0, rng)
        ages, sizes = run.site_table_at(run.horizon)
        assert sizes.sum() == run.counts.sum()
        assert len(sizes) == run.n_sites
        assert np.all(ages >= 0.0)

    def test_totals_replay_consistent(self, rng):
        params = ParticleParams(c=1.0, s=1.0, d=0.5)
        run = simulate_collision_free(params, 4.0, rng)
        totals = run.totals_at(np.array([4.0]))
        assert totals[0] == run.counts.sum()

    def test_single_site_internal_yule(self, rng_factory):
        # one site, d = 0, c = 0: plain Yule chain
        params = ParticleParams(c=0.0, s=1.0, d=0.0)
        t_grid = np.array([0.0, 1.0])
        finals = np.array([
            simulate_single_site_internal(params, t_grid, rng_factory(r))[-1]
            for r in range(4000)], dtype=float)
        assert_z(finals.mean(), finals.std() / math.sqrt(len(finals)),
                 math.e, z_max=3.5, label="zeta0 Yule mean")


class TestEquilibrium:
    def test_point_mass_without_immigration(self):
        dist = single_site_equilibrium(1.0, 1.0, 1.0, 0.0)
        assert dist.probs.tolist() == [1.0]

    def test_sums_to_one_and_no_mass_at_zero(self):
        dist = single_site_equilibrium(1.0, 1.0, 1.0, 1.5)
        assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert dist.probs[0] == 0.0

    def test_matches_linear_solve_oracle(self):
        c, s, d, iota = 1.3, 0.9, 1.1, 1.7
        dist = single_site_equilibrium(c, s, d, iota)
        k_max = dist.k_max
        # stationary vector of the truncated generator, dense solve
        Q = np.zeros((k_max + 1, k_max + 1))
        for k in range(k_max + 1):
            up = s * k + c * iota
            down = d * k * (k - 1) + (c * k if k >= 2 else 0.0)
            if k < k_max:
                Q[k, k + 1] = up
                Q[k, k] -= up
            if k > 0:
                Q[k, k - 1] = down
                Q[k, k] -= down
        ns = scipy.linalg.null_space(Q.T)
        assert ns.shape[1] == 1
        pi = ns[:, 0] / ns[:, 0].sum()
        np.testing.assert_allclose(dist.probs, pi, atol=1e-10)

    def test_mean_increasing_in_iota(self):
        means = [equilibrium_mean(1.0, 1.0, 1.0, i) for i in (0.5, 1.0, 2.0, 4.0)]
        assert means == sorted(means)

    def test_tail_error_when_truncated_too_low(self):
        with pytest.raises(EquilibriumTailError):
            single_site_equilibrium(1.0, 5.0, 0.1, 3.0, k_max=8)

    def test_requires_death_with_immigration(self):
        with pytest.raises(ValueError):
            single_site_equilibrium(1.0, 1.0, 0.0, 1.0)


class TestFixedPoint:
    def test_residual_below_tolerance(self):
        fp = self_consistent_intensity(1.0, 1.0, 1.0, tol=1e-10)
        assert fp.converged
        assert abs(equilibrium_mean(1.0, 1.0, 1.0, fp.iota_star) - fp.iota_star) < 1e-8

    def test_trivial_fixed_point_reported(self):
        fp = self_consistent_intensity(1.0, 1.0, 1.0)
        assert fp.trivial_fixed_point == 0.0

    def test_nonconvergence_reports_history(self):
        fp = self_consistent_intensity(1.0, 1.0, 1.0, tol=1e-16, max_iter=5)
        assert not fp.converged
        assert len(fp.history) == 6


class TestIntensityTrajectory:
    def test_starts_at_one_over_n(self, rng_factory):
        params = ParticleParams(c=1.0, s=1.0, d=1.0, N=25)
        out = intensity_trajectory(params, np.array([0.0, 0.5]), 3, rng_factory)
        assert np.all(out[:, 0] == 1.0 / 25.0)

    def test_fixed_time_intensity_dominated_by_yule(self, rng_factory):
        # at fixed t the mean intensity is below e^{st}/N (death only removes)
        t = 1.0
        for i, n in enumerate((50, 200)):
            params = ParticleParams(c=1.0, s=1.0, d=1.0, N=n)
            out = intensity_trajectory(params, np.array([t]), 80,
                                       lambda r, i=i: rng_factory(1000 * i + r))
            assert out[:, 0].mean() <= math.exp(t) / n * 1.25

    @pytest.mark.slow
    def test_positive_intensity_emerges_on_the_log_window(self, rng_factory):
        # median intensity at alpha^-1 log N is order one across N, and far
        # smaller five time units earlier
        alpha = 0.48
        for i, n in enumerate((100, 400)):
            params = ParticleParams(c=1.0, s=1.0, d=1.0, N=n)
            t_emerge = math.log(n) / alpha
            grid = np.array([max(t_emerge - 5.0, 0.1), t_emerge])
            out = intensity_trajectory(params, grid, 30,
                                       lambda r, i=i: rng_factory(7000 + 100 * i + r))
            med_early, med_at = np.median(out, axis=0)
            assert med_at > 0.05, f"N={n}: intensity {med_at:.3f} at the window"
            assert med_early < 0.5 * med_at
