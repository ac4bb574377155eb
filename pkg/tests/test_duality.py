import math

import numpy as np
import pytest

from dualpop.duality import (DualityReport, check_moment_duality,
                             check_spatial_duality, death_chain_moment,
                             dual_occupation, single_site_timescale)
from dualpop.fw_meanfield import SystemParams
from dualpop.particles import ParticleParams

from conftest import assert_z


class TestDeathChainMoment:
    def test_first_moment_is_martingale(self):
        val, se = death_chain_moment(0.3, 1.0, 1, 5.0)
        assert val == 0.3 and se == 0.0

    def test_k2_closed_form(self):
        val, _ = death_chain_moment(0.3, 1.0, 2, 0.5)
        expected = math.exp(-0.5) * 0.09 + (1 - math.exp(-0.5)) * 0.3
        assert val == pytest.approx(expected, rel=1e-14)

    def test_k3_closed_form_vs_monte_carlo(self, rng):
        closed, _ = death_chain_moment(0.4, 0.8, 3, 0.7)
        mc, se = death_chain_moment(0.4, 0.8, 3, 0.7, rng=rng, replicas=400_000,
                                    force_mc=True)
        assert se > 0.0
        assert_z(mc, se, closed, z_max=3.5, label="death chain k=3")

    def test_k4_needs_rng(self):
        with pytest.raises(ValueError):
            death_chain_moment(0.4, 1.0, 4, 0.5)


class TestMomentDuality:
    def test_t_zero_is_exact(self, rng):
        rep = check_moment_duality(0.3, 1.0, 2, 1e-9, 100, rng, dt=1e-3)
        assert rep.lhs_mean == pytest.approx(0.09, abs=1e-8)

    def test_named_cell_passes(self, rng):
        rep = check_moment_duality(0.3, 1.0, 2, 0.5, 50_000, rng)
        assert rep.passed, rep.as_dict()

    def test_k1_martingale(self, rng):
        rep = check_moment_duality(0.5, 1.0, 1, 0.5, 50_000, rng)
        assert rep.rhs_mean == 0.5
        assert rep.passed

    def test_k4_monte_carlo_path(self, rng):
        rep = check_moment_duality(0.5, 1.0, 4, 0.3, 60_000, rng)
        assert rep.rhs_se > 0.0
        assert rep.passed, rep.as_dict()

    def test_rejects_bad_inputs(self, rng):
        with pytest.raises(ValueError):
            check_moment_duality(1.5, 1.0, 2, 0.5, 10, rng)
        with pytest.raises(ValueError):
            check_moment_duality(0.5, 0.0, 2, 0.5, 10, rng)


class TestDualOccupation:
    def test_time_zero(self, rng):
        run, integral = dual_occupation(
            ParticleParams(c=1.0, s=1.0, d=1.0, N=5), 0.0, rng)
        assert run.total == 1
        assert integral == 0.0

    def test_pure_migration_keeps_count_one(self, rng):
        run, integral = dual_occupation(
            ParticleParams(c=1.0, s=0.0, d=0.0, N=5), 2.0, rng)
        assert run.total == 1
        assert integral == pytest.approx(2.0, abs=1e-12)

    def test_integrated_yule_mean(self, rng_factory):
        # d = 0: E[int_0^t Pi] = (e^{st} - 1)/s
        s, t, reps = 1.0, 1.0, 3000
        vals = np.zeros(reps)
        for r in range(reps):
            _, vals[r] = dual_occupation(
                ParticleParams(c=1.0, s=s, d=0.0, N=6), t, rng_factory(r))
        assert_z(vals.mean(), vals.std() / math.sqrt(reps),
                 (math.exp(s * t) - 1.0) / s, z_max=3.5,
                 label="integrated Yule mean")


class TestSpatialDuality:
    def test_no_mutation_gives_one_on_both_sides(self, rng_factory):
        params = SystemParams(N=6, c=1.0, s=1.0, d=1.0, m=0.0)
        rep = check_spatial_duality(params, 0.5, 200, rng_factory, dt=1e-3)
        assert rep.lhs_mean == 1.0
        assert rep.rhs_mean == 1.0

    def test_hazard_monotone_in_mutation_rate(self, rng_factory):
        # same dual integrals, increasing m: the hazard transform is ordered
        params = ParticleParams(c=1.0, s=1.0, d=0.5, N=8)
        integrals = []
        for r in range(64):
            _, integral = dual_occupation(params, 1.0, rng_factory(r))
            integrals.append(integral)
        integrals = np.array(integrals)
        values = [np.exp(-(m / 8) * integrals).mean() for m in (0.5, 1.0, 2.0)]
        assert values[0] > values[1] > values[2]

    def test_small_scale_identity(self, rng_factory):
        params = SystemParams(N=5, c=1.0, s=1.0, d=1.0, m=1.0)
        rep = check_spatial_duality(params, 0.5, 8000, rng_factory, dt=1e-3)
        assert abs(rep.z_score) < 4.0, rep.as_dict()


class TestSingleSiteTimescale:
    def test_log_slope_without_noise_rate(self, rng_factory):
        fit = single_site_timescale(0.0, 1.0, [50, 200, 800], 24, rng_factory)
        assert fit.regressor == "log L"
        assert fit.slope == pytest.approx(1.0, rel=0.3)

    def test_linear_regime_with_noise(self, rng_factory):
        fit = single_site_timescale(1.0, 1.0, [50, 150, 400], 24, rng_factory)
        assert fit.regressor == "L"
        assert fit.r_squared > 0.9
        assert fit.slope > 0.0


class TestReport:
    def test_z_and_flag(self):
        rep = DualityReport.from_sides((1.0, 0.1), (1.25, 0.1))
        assert rep.z_score == pytest.approx(-0.25 / math.hypot(0.1, 0.1))
        assert rep.passed
        rep = DualityReport.from_sides((1.0, 0.01), (2.0, 0.01))
        assert not rep.passed
