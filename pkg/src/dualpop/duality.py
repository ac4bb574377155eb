"""Monte Carlo checks of the dualities linking diffusions to particle systems.

Moment duality: for the drift-free frequency diffusion with noise rate d,
E[X_t^k] equals E[x0^{D_t}] where D is the pure-death chain jumping
n -> n-1 at rate d n (n - 1) / 2.

Spatial duality: for the N-site system started all of type 1, the mean
type-1 frequency equals E[exp(-(m/N) * int_0^t Pi_u du)] where Pi is the
total count of the dual particle system started from one particle.  The dual
of the diffusion with resampling rate d is the logistic particle model whose
per-site death rate is d * C(k,2) = (d/2) k (k-1); in the simulator's
per-particle parametrization (site death rate d_sim * k * (k-1)) this means
driving the dual at d_sim = d / 2.

Both sides of each identity are Monte Carlo (or closed-form where available),
so checks are reported as z-scores rather than against fixed numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fw_meanfield import SystemParams
from .particles import FiniteRun, ParticleParams

__all__ = [
    "DualityReport",
    "check_moment_duality",
    "death_chain_moment",
    "dual_occupation",
    "check_spatial_duality",
    "single_site_timescale",
    "TimescaleFit",
]

Z_THRESHOLD = 3.0


@dataclass
class DualityReport:
    lhs_mean: float
    lhs_se: float
    rhs_mean: float
    rhs_se: float
    z_score: float
    passed: bool
    label: str = ""

    @staticmethod
    def from_sides(lhs: tuple[float, float], rhs: tuple[float, float],
                   label: str = "", z_threshold: float = Z_THRESHOLD) -> "DualityReport":
        lhs_mean, lhs_se = lhs
        rhs_mean, rhs_se = rhs
        se = math.hypot(lhs_se, rhs_se)
        z = (lhs_mean - rhs_mean) / se if se > 0 else math.inf
        return DualityReport(lhs_mean=lhs_mean, lhs_se=lhs_se,
                             rhs_mean=rhs_mean, rhs_se=rhs_se,
                             z_score=z, passed=abs(z) < z_threshold, label=label)

    def as_dict(self) -> dict:
        return {"label": self.label, "lhs_mean": self.lhs_mean, "lhs_se": self.lhs_se,
                "rhs_mean": self.rhs_mean, "rhs_se": self.rhs_se,
                "z": self.z_score, "passed": self.passed}


def death_chain_moment(x0: float, d: float, k: int, t: float,
                       rng: np.random.Generator | None = None,
                       replicas: int = 10 ** 5,
                       force_mc: bool = False) -> tuple[float, float]:
    """E[x0^{D_t}] for the death chain n -> n-1 at rate d n (n-1) / 2.

    Closed form for k <= 3; Monte Carlo over the explicit jump times
    otherwise (then `rng` is required).  ``force_mc`` switches small k to the
    Monte Carlo route too, for cross-validating the closed forms.
    Returns (value, standard error).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not force_mc:
        if k == 1:
            return x0, 0.0
        if k == 2:
            p2 = math.exp(-d * t)
            return p2 * x0 ** 2 + (1.0 - p2) * x0, 0.0
        if k == 3:
            r3, r2 = 3.0 * d, d
            p3 = math.exp(-r3 * t)
            p2 = r3 / (r3 - r2) * (math.exp(-r2 * t) - math.exp(-r3 * t))
            p1 = 1.0 - p3 - p2
            return p3 * x0 ** 3 + p2 * x0 ** 2 + p1 * x0, 0.0
    if rng is None:
        raise ValueError("Monte Carlo evaluation needs an rng")
    n = np.full(replicas, k)
    t_acc = np.zeros(replicas)
    for level in range(k, 1, -1):
        rate = d * level * (level - 1) / 2.0
        t_acc += rng.exponential(1.0 / rate, size=replicas)
        n = np.where((t_acc <= t) & (n == level), level - 1, n)
    vals = x0 ** n
    return float(vals.mean()), float(vals.std() / math.sqrt(replicas))


def _diffusion_moment(x0: float, d: float, k: int, t: float, dt: float,
                      replicas: int, rng: np.random.Generator) -> tuple[float, float]:
    """E[X_t^k] for the drift-free diffusion by clamped Euler paths."""
    x = np.full(replicas, x0)
    n_steps = int(round(t / dt))
    sq = math.sqrt(dt)
    for _ in range(n_steps):
        yy = x * (1.0 - x)
        x = np.clip(x + np.sqrt(d * yy) * sq * rng.standard_normal(replicas), 0.0, 1.0)
    vals = x ** k
    return float(vals.mean()), float(vals.std() / math.sqrt(replicas))


def check_moment_duality(x0: float, d: float, k: int, t: float, replicas: int,
                         rng: np.random.Generator, dt: float = 1e-3,
                         z_threshold: float = Z_THRESHOLD) -> DualityReport:
    """Compare E[X_t^k] (Monte Carlo paths) against E[x0^{D_t}]."""
    if not 0.0 <= x0 <= 1.0:
        raise ValueError(f"x0 must lie in [0, 1], got {x0}")
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    lhs = _diffusion_moment(x0, d, k, t, dt, replicas, rng)
    rhs = death_chain_moment(x0, d, k, t, rng=rng, replicas=replicas)
    return DualityReport.from_sides(lhs, rhs,
                                    label=f"moment x0={x0} d={d} k={k} t={t}",
                                    z_threshold=z_threshold)


def dual_occupation(params: ParticleParams, t: float,
                    rng: np.random.Generator) -> tuple[FiniteRun, float]:
    """Run the finite dual from one particle at site 1 up to time t.

    Returns the run and the exact time integral of the piecewise-constant
    total count.
    """
    run = FiniteRun(params, rng, init={1: 1})
    run.run_until(t)
    return run, run.occupation_integral


def check_spatial_duality(
    params: SystemParams,
    t: float,
    replicas: int,
    rng_for_replica,
    dt: float = 5e-4,
    z_threshold: float = Z_THRESHOLD,
) -> DualityReport:
    """Mean type-1 frequency vs the dual hazard functional, both Monte Carlo.

    LHS: xbar1(t) from the all-type-1 start, averaged over replicas (all sites
    share one law, so the spatial average is a variance-reduced estimator of
    E[x1(i, t)]).  Stepping uses the boundary-exact scheme: the plain clamped
    Euler step has a slowly decaying weak bias at the all-ones start.
    RHS: exp(-(m/N) int Pi) over dual runs at death coefficient d/2.
    """
    from .fw_meanfield import _step_x1_boundary_exact  # local alias, heavy path

    N = params.N
    mrate = params.mutation_rate
    rng = rng_for_replica(0)
    x1 = np.ones((replicas, N))
    n_steps = int(round(t / dt))
    for _ in range(n_steps):
        x1 = _step_x1_boundary_exact(x1, params, dt, rng)
    site_means = x1.mean(axis=1)
    lhs = (float(site_means.mean()), float(site_means.std() / math.sqrt(replicas)))

    dual_params = ParticleParams(c=params.c, s=params.s, d=params.d / 2.0, N=N)
    vals = np.zeros(replicas)
    for r in range(replicas):
        _, integral = dual_occupation(dual_params, t, rng_for_replica(r + 1))
        vals[r] = math.exp(-mrate * integral)
    rhs = (float(vals.mean()), float(vals.std() / math.sqrt(replicas)))
    return DualityReport.from_sides(lhs, rhs,
                                    label=f"spatial N={N} c={params.c} s={params.s} "
                                          f"d={params.d} m={params.m} t={t}",
                                    z_threshold=z_threshold)


@dataclass
class TimescaleFit:
    L_values: np.ndarray
    medians: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    regressor: str            # "log L" or "L"


def _first_hazard_time(s: float, d: float, m: float, L: float,
                       rng: np.random.Generator, max_events: int = 10 ** 7) -> float:
    """Time at which (m/L) * int_0^t count_u du reaches 1 for the single-site
    dual chain (birth s k, death d k (k-1), migration immaterial at one site)."""
    k = 1
    t = 0.0
    integral = 0.0
    target = L / m
    for _ in range(max_events):
        up = s * k
        down = d * k * (k - 1)
        rate = up + down
        if rate == 0.0:
            return t + (target - integral) / k
        wait = rng.exponential(1.0 / rate)
        if integral + k * wait >= target:
            return t + (target - integral) / k
        integral += k * wait
        t += wait
        if rng.uniform(0.0, rate) < up:
            k += 1
        else:
            k -= 1
    raise RuntimeError("hazard did not reach 1 within the event cap")


def single_site_timescale(
    d: float,
    s: float,
    L_values,
    replicas: int,
    rng_for_replica,
    m: float = 1.0,
) -> TimescaleFit:
    """Median first-mutation times across L, with the regime-appropriate fit.

    d = 0: the dual count grows exponentially, so medians are fitted against
    log L (slope should be 1/s).  d > 0: the count equilibrates and the hazard
    grows linearly, so medians are fitted against L.
    """
    L_values = np.asarray(L_values, dtype=float)
    medians = np.zeros(len(L_values))
    for i, L in enumerate(L_values):
        times = [
            _first_hazard_time(s, d, m, float(L), rng_for_replica(i * replicas + r))
            for r in range(replicas)
        ]
        medians[i] = float(np.median(times))
    x = np.log(L_values) if d == 0.0 else L_values
    slope, intercept = np.polyfit(x, medians, 1)
    pred = slope * x + intercept
    ss_res = float(((medians - pred) ** 2).sum())
    ss_tot = float(((medians - medians.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TimescaleFit(L_values=L_values, medians=medians, slope=float(slope),
                        intercept=float(intercept), r_squared=r2,
                        regressor="log L" if d == 0.0 else "L")
