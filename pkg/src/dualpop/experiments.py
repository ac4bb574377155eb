"""Experiment registry: named, seeded, artifact-producing runs.

Each experiment declares a flat typed parameter schema and a runner mapping a
RunConfig to a results dict; runners write CSV/JSON artifacts into the output
directory and are deterministic given (config, seed).

Convention note used throughout: the particle simulators parametrize the
site death rate as d_sim * k * (k - 1), while the diffusion side and the
colonization system use the pairwise rate (d/2) k (k - 1).  Wherever a
particle run must match a diffusion-side object at parameter d, it is driven
at d_sim = d / 2.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .config import RunConfig
from .reporting import write_csv, write_json
from .seeding import make_rng

__all__ = ["EXPERIMENTS", "run_experiment", "experiment_names", "UnknownExperimentError"]


class UnknownExperimentError(ValueError):
    def __init__(self, name: str):
        names = ", ".join(experiment_names())
        super().__init__(f"unknown experiment {name!r}; registered: {names}")


def _int_list(raw: str) -> list[int]:
    return [int(tok) for tok in str(raw).replace(";", ",").split(",") if tok.strip()]


# ---------------------------------------------------------------------------

def _run_duality_moment(cfg: RunConfig) -> dict:
    from .duality import check_moment_duality

    p = cfg.params
    out = Path(cfg.out_dir)
    reports = []
    if int(p["lattice"]):
        x0s, ks = (0.1, 0.3, 0.7), (1, 2, 3)
        ds, ts = (0.5, 1.0), (0.25, 1.0)
        cells = [(x0, k, d, t) for x0 in x0s for k in ks for d in ds for t in ts]
        threshold = 4.0
        replicas = int(p["lattice_replicas"])
    else:
        cells = [(float(p["x0"]), int(p["k"]), float(p["d"]), float(p["t"]))]
        threshold = 3.0
        replicas = int(p["replicas"])
    for i, (x0, k, d, t) in enumerate(cells):
        rep = check_moment_duality(x0, d, k, t, replicas, make_rng(cfg.seed, i),
                                   dt=float(p["dt"]), z_threshold=threshold)
        reports.append(rep)
    rows = [(r.label, r.lhs_mean, r.lhs_se, r.rhs_mean, r.rhs_se, r.z_score, r.passed)
            for r in reports]
    write_csv(out / "duality_moment.csv",
              ["check", "lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "z", "passed"],
              rows, cfg)
    results = {"checks": [r.as_dict() for r in reports],
               "all_passed": all(r.passed for r in reports)}
    write_json(out / "duality_moment.json", results, cfg)
    return results


def _run_duality_spatial(cfg: RunConfig) -> dict:
    from .duality import check_spatial_duality
    from .fw_meanfield import SystemParams

    p = cfg.params
    out = Path(cfg.out_dir)
    params = SystemParams(N=int(p["N"]), c=float(p["c"]), s=float(p["s"]),
                          d=float(p["d"]), m=float(p["m"]))
    rep = check_spatial_duality(params, float(p["t"]), int(p["replicas"]),
                                lambda i: make_rng(cfg.seed, i), dt=float(p["dt"]))
    write_csv(Path(cfg.out_dir) / "duality_spatial.csv",
              ["check", "lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "z", "passed"],
              [(rep.label, rep.lhs_mean, rep.lhs_se, rep.rhs_mean, rep.rhs_se,
                rep.z_score, rep.passed)], cfg)
    results = rep.as_dict()
    write_json(out / "duality_spatial.json", results, cfg)
    return results


def _cmj_pipeline(c: float, s: float, d_sim: float, seed: int, mu_replicas: int,
                  traj_replicas: int, horizon: float, mu_horizon: float,
                  age_bin: float, j_max: int) -> dict:
    """Shared CMJ estimation: Laplace-root, regression and histogram alphas."""
    from .cmj import (cmj_rates, estimate_mu, growth_rate_fit, malthusian_alpha,
                      track_age_size)
    from .particles import ParticleParams, simulate_collision_free

    params = ParticleParams(c=c, s=s, d=d_sim)
    t_grid = np.linspace(0.0, mu_horizon, max(int(20 * mu_horizon), 200) + 1)
    mu = estimate_mu(params, t_grid, mu_replicas, lambda r: make_rng(seed, r))
    alpha_laplace = malthusian_alpha(mu, s=s)

    grid = np.linspace(0.0, horizon, int(5 * horizon) + 1)
    ks = np.zeros((traj_replicas, len(grid)))
    weights = None
    overflow = 0.0
    age_edges = None
    for r in range(traj_replicas):
        run = simulate_collision_free(params, horizon, make_rng(seed + 1, r))
        idx = np.maximum(np.searchsorted(run.k_times, grid, side="right") - 1, 0)
        ks[r] = run.k_values[idx]
        h = track_age_size(run, horizon, age_bin=age_bin, j_max=j_max)
        weights = h.weights if weights is None else weights + h.weights
        overflow += h.overflow
        age_edges = h.age_edges
    from .cmj import AgeSizeHistogram
    pooled = AgeSizeHistogram(age_edges=age_edges, weights=weights,
                              overflow=overflow, normalized=False)
    stable = pooled.normalize()
    rates = cmj_rates(stable, c=c)
    fit = growth_rate_fit(grid, ks)
    return {
        "alpha_laplace": alpha_laplace,
        "alpha_regression": fit.alpha,
        "alpha_histogram": rates.alpha,
        "gamma": rates.gamma,
        "B": rates.B,
        "W_mean": float(fit.W_samples.mean()),
        "W_var": float(fit.W_samples.var()),
        "mu_total_mass": mu.total_mass(),
        "overflow_fraction": pooled.overflow / pooled.total(),
        "_stable_sizes": stable.size_marginal() / stable.size_marginal().sum(),
        "_k_grid": grid,
        "_k_mean": ks.mean(axis=0),
        "_W_samples": fit.W_samples,
    }


def _run_cmj_alpha(cfg: RunConfig) -> dict:
    p = cfg.params
    out = Path(cfg.out_dir)
    res = _cmj_pipeline(float(p["c"]), float(p["s"]), float(p["d"]), cfg.seed,
                        int(p["mu_replicas"]), int(p["traj_replicas"]),
                        float(p["horizon"]), float(p["mu_horizon"]),
                        float(p["age_bin"]), int(p["j_max"]))
    write_csv(out / "cmj_growth.csv", ["t", "mean_occupied"],
              zip(res["_k_grid"], res["_k_mean"]), cfg)
    public = {k: v for k, v in res.items() if not k.startswith("_")}
    write_json(out / "cmj_alpha.json", public, cfg)
    return public


def _run_droplet_growth(cfg: RunConfig) -> dict:
    from .droplet import growth_constant, simulate_droplet_ensemble
    from .fw_single import DiffusionParams

    p = cfg.params
    out = Path(cfg.out_dir)
    params = DiffusionParams(c=float(p["c"]), s=float(p["s"]), d=float(p["d"]))
    fit = growth_constant(params, m=float(p["m"]), eps=float(p["eps"]),
                          horizon=float(p["horizon"]), replicas=int(p["replicas"]),
                          rng=make_rng(cfg.seed, 0), dt=float(p["dt"]))
    comp = fit.mean_mass * np.exp(-fit.alpha_star * fit.times)
    tail = comp[len(comp) // 2:]
    results = {
        "alpha_star": fit.alpha_star,
        "eps": fit.eps,
        "W_mean": float(fit.W_samples.mean()),
        "W_var": float(fit.W_samples.var()),
        "compensated_tail_spread": float(tail.max() / tail.min()) if tail.min() > 0 else math.inf,
        "degenerate": fit.degenerate,
    }
    write_csv(out / "droplet_mean.csv", ["t", "mean_total_mass"],
              zip(fit.times, fit.mean_mass), cfg)
    # small per-replica dump (first few replicas) in the trajectory schema
    times, mass, atoms = simulate_droplet_ensemble(
        params, float(p["m"]), float(p["eps"]), float(p["horizon"]),
        float(p["dt"]), min(int(p["replicas"]), 8), make_rng(cfg.seed, 1))
    rows = [(r, t, mass[r, i], atoms[r, i])
            for r in range(mass.shape[0]) for i, t in enumerate(times)]
    write_csv(out / "droplet_trajectories.csv",
              ["replica", "t", "total_mass", "n_atoms"], rows, cfg)
    write_json(out / "droplet_growth.json", results, cfg)
    return results


def _run_emergence_scaling(cfg: RunConfig) -> dict:
    from .fw_meanfield import SystemParams, emergence_experiment, half_takeover_times

    p = cfg.params
    out = Path(cfg.out_dir)
    c, s, d, m = (float(p[k]) for k in ("c", "s", "d", "m"))
    n_values = _int_list(p["n_values"])
    replicas = int(p["replicas"])

    alpha_hat = float(p["alpha_hat"])
    if alpha_hat <= 0.0:
        from .cmj import estimate_mu, malthusian_alpha
        from .particles import ParticleParams
        mu = estimate_mu(ParticleParams(c=c, s=s, d=d / 2.0),
                         np.linspace(0.0, float(p["mu_horizon"]),
                                     max(int(20 * float(p["mu_horizon"])), 200) + 1),
                         int(p["mu_replicas"]), lambda r: make_rng(cfg.seed, 10_000 + r))
        alpha_hat = malthusian_alpha(mu, s=s)

    medians = []
    rows = []
    for i, n in enumerate(n_values):
        params = SystemParams(N=n, c=c, s=s, d=d, m=m)
        half = half_takeover_times(params, replicas, make_rng(cfg.seed, i))
        medians.append(float(np.nanmedian(half)))
        rows.extend((n, r, half[r]) for r in range(replicas))
    write_csv(out / "half_takeover.csv", ["N", "replica", "t_half"], rows, cfg)

    slope, intercept = np.polyfit(np.log(n_values), medians, 1)
    results = {
        "n_values": n_values,
        "medians": medians,
        "slope": float(slope),
        "intercept": float(intercept),
        "alpha_hat": alpha_hat,
        "inv_alpha_hat": 1.0 / alpha_hat,
        "slope_rel_error": abs(slope - 1.0 / alpha_hat) * alpha_hat,
    }

    # window trajectories for the smallest ladder rung, trajectory-dump schema
    n0 = n_values[0]
    window = emergence_experiment(SystemParams(N=n0, c=c, s=s, d=d, m=m), alpha_hat,
                                  (-2.0, 4.0), min(replicas, 16),
                                  make_rng(cfg.seed, 900), n_samples=25)
    rows = [(r, t, window.mean_type2[r, i], n0 * window.mean_type2[r, i])
            for r in range(window.mean_type2.shape[0])
            for i, t in enumerate(window.times)]
    write_csv(out / "emergence_window.csv",
              ["replica", "t", "mean_type2", "droplet_mass"], rows, cfg)
    write_json(out / "emergence_scaling.json", results, cfg)
    return results


def _run_mkv_fixation(cfg: RunConfig) -> dict:
    from .mkv_pde import run_mkv_to_fixation, uniform_density

    p = cfg.params
    out = Path(cfg.out_dir)
    grid0 = uniform_density(int(p["cells"]))
    curve = run_mkv_to_fixation(grid0, float(p["c"]), float(p["s"]), float(p["d"]),
                                float(p["horizon"]),
                                fixation_mean=float(p["fixation_mean"]))
    write_csv(out / "mkv_mean_curve.csv", ["t", "m"],
              zip(curve.times, curve.mean), cfg)
    results = {
        "final_mean": float(curve.mean[-1]),
        "fixation_reached": curve.fixation_reached,
        "mass_drift": curve.mass_drift,
        "cells": int(p["cells"]),
    }
    write_json(out / "mkv_fixation.json", results, cfg)
    return results


def _run_colonization(cfg: RunConfig) -> dict:
    from .colonization import (ColonizationParams, colonization_rates, entrance_shoot,
                               stable_size_distribution)

    p = cfg.params
    out = Path(cfg.out_dir)
    params = ColonizationParams(c=float(p["c"]), s=float(p["s"]), d=float(p["d"]))
    j_max = int(p["j_max"])

    if str(p["stable_source"]) == "cmj":
        # stochastic stable law from the particle chain at matched convention
        res = _cmj_pipeline(params.c, params.s, params.d / 2.0, cfg.seed,
                            int(p["mu_replicas"]), int(p["traj_replicas"]),
                            float(p["cmj_horizon"]), float(p["mu_horizon"]),
                            age_bin=0.5, j_max=j_max)
        sizes = res["_stable_sizes"]
        alpha = res["alpha_laplace"]
    else:
        sizes, alpha = stable_size_distribution(params, j_max=j_max)

    shot = entrance_shoot(params, amplitude=float(p["amplitude"]), alpha=alpha,
                          stable=sizes, t_start=float(p["t_start"]),
                          horizon=float(p["horizon"]))
    window = shot.window & (shot.u > 0)
    comp = shot.compensated[window]
    results = {
        "alpha": alpha,
        "amplitude": float(p["amplitude"]),
        "compensated_min": float(comp.min()),
        "compensated_max": float(comp.max()),
        "max_rel_dev": float(np.abs(comp / float(p["amplitude"]) - 1.0).max()),
        "final_u": float(shot.u[-1]),
        "stable_source": str(p["stable_source"]),
    }
    j_cols = [f"usize{j}" for j in range(1, shot.usize.shape[1] + 1)]
    mean_size = shot.usize @ np.arange(1, shot.usize.shape[1] + 1)
    rows = [(t, shot.u[i], mean_size[i], *shot.usize[i])
            for i, t in enumerate(shot.times)]
    write_csv(out / "colonization.csv", ["t", "u", "mean_size", *j_cols], rows, cfg)
    write_json(out / "colonization.json", results, cfg)
    return results


def _run_intensity_fixed_point(cfg: RunConfig) -> dict:
    from .particles import (FiniteRun, ParticleParams, self_consistent_intensity,
                            single_site_equilibrium)

    p = cfg.params
    out = Path(cfg.out_dir)
    c, s, d = (float(p[k]) for k in ("c", "s", "d"))
    n_sites = int(p["N"])
    t_end = float(p["t_end"])
    replicas = int(p["replicas"])

    fp = self_consistent_intensity(c, s, d)
    eq = single_site_equilibrium(c, s, d, fp.iota_star)

    intens, occ_frac, per_occ = [], [], []
    size_counts = np.zeros(eq.k_max + 1)
    event_rows = []
    for r in range(replicas):
        run = FiniteRun(ParticleParams(c=c, s=s, d=d, N=n_sites),
                        make_rng(cfg.seed, r), init={1: 1})
        if r == 0:
            while True:
                ev = run.step()
                if ev.kind == "extinct" or ev.t > t_end:
                    break
                event_rows.append((ev.t, ev.site, ev.kind))
            run.run_until(t_end)
        else:
            run.run_until(t_end)
        occupied = run.k[run.k > 0]
        intens.append(run.total / n_sites)
        occ_frac.append(occupied.size / n_sites)
        per_occ.append(run.total / occupied.size if occupied.size else 0.0)
        counts = np.bincount(occupied, minlength=eq.k_max + 1)
        size_counts += counts[:eq.k_max + 1]

    write_csv(out / "event_log.csv", ["t", "site", "event"], event_rows, cfg)
    sim_intensity = float(np.mean(intens))
    sim_sizes = size_counts / size_counts.sum()
    cond_tv = 0.5 * float(np.abs(sim_sizes[1:] - eq.probs[1:] / eq.probs[1:].sum()).sum())
    results = {
        "iota_star": fp.iota_star,
        "trivial_fixed_point": fp.trivial_fixed_point,
        "converged": fp.converged,
        "simulated_intensity": sim_intensity,
        "intensity_se": float(np.std(intens) / math.sqrt(replicas)),
        "rel_gap": abs(fp.iota_star - sim_intensity) / fp.iota_star,
        "extinct": bool(all(v == 0.0 for v in intens)),
        # diagnostics: the conditioned-law identity and occupancy split
        "occupied_fraction": float(np.mean(occ_frac)),
        "mean_per_occupied_site": float(np.mean(per_occ)),
        "conditioned_size_law_tv": cond_tv,
    }
    write_json(out / "intensity_fixed_point.json", results, cfg)
    return results


def _run_single_site_timescale(cfg: RunConfig) -> dict:
    from .duality import single_site_timescale

    p = cfg.params
    out = Path(cfg.out_dir)
    fit = single_site_timescale(float(p["d"]), float(p["s"]), _int_list(p["L_values"]),
                                int(p["replicas"]), lambda i: make_rng(cfg.seed, i),
                                m=float(p["m"]))
    write_csv(out / "first_mutation_times.csv", ["L", "median_time"],
              zip(fit.L_values, fit.medians), cfg)
    results = {
        "regressor": fit.regressor,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "medians": [float(v) for v in fit.medians],
        "L_values": [int(v) for v in fit.L_values],
    }
    write_json(out / "single_site_timescale.json", results, cfg)
    return results


# ---------------------------------------------------------------------------

EXPERIMENTS: dict[str, tuple[dict, callable, str]] = {
    "duality_moment": (
        {"x0": (float, 0.3), "d": (float, 1.0), "k": (int, 2), "t": (float, 0.5),
         "replicas": (int, 100_000), "dt": (float, 1e-3), "lattice": (int, 0),
         "lattice_replicas": (int, 30_000)},
        _run_duality_moment,
        "Moment duality of the drift-free diffusion against the death chain",
    ),
    "duality_spatial": (
        {"N": (int, 10), "c": (float, 1.0), "s": (float, 1.0), "d": (float, 1.0),
         "m": (float, 1.0), "t": (float, 1.0), "replicas": (int, 100_000),
         "dt": (float, 5e-4)},
        _run_duality_spatial,
        "Spatial duality: mean inferior frequency vs dual hazard functional",
    ),
    "cmj_alpha": (
        {"c": (float, 1.0), "s": (float, 1.0), "d": (float, 1.0),
         "mu_replicas": (int, 20_000), "traj_replicas": (int, 400),
         "horizon": (float, 9.0), "mu_horizon": (float, 30.0),
         "age_bin": (float, 0.5), "j_max": (int, 30)},
        _run_cmj_alpha,
        "Three growth-rate estimators of the collision-free site process",
    ),
    "droplet_growth": (
        {"c": (float, 1.0), "s": (float, 1.0), "d": (float, 1.0), "m": (float, 1.0),
         "eps": (float, 1e-2), "horizon": (float, 8.0), "dt": (float, 1e-3),
         "replicas": (int, 1000)},
        _run_droplet_growth,
        "Exponential growth of the threshold-excursion droplet",
    ),
    "emergence_scaling": (
        {"n_values": (str, "64,128,256,512,1024"), "c": (float, 1.0),
         "s": (float, 1.0), "d": (float, 1.0), "m": (float, 1.0),
         "replicas": (int, 100), "alpha_hat": (float, 0.0),
         "mu_replicas": (int, 20_000), "mu_horizon": (float, 30.0)},
        _run_emergence_scaling,
        "Half-takeover time of the advantageous type vs log N",
    ),
    "mkv_fixation": (
        {"cells": (int, 800), "c": (float, 1.0), "s": (float, 1.0),
         "d": (float, 0.1), "horizon": (float, 20.0), "fixation_mean": (float, 0.99)},
        _run_mkv_fixation,
        "Density-limit fixation: grid mean driven to 1 from a uniform start",
    ),
    "colonization": (
        {"c": (float, 1.0), "s": (float, 1.0), "d": (float, 1.0), "j_max": (int, 44),
         "amplitude": (float, 1.0), "t_start": (float, -14.0),
         "horizon": (float, 10.0), "stable_source": (str, "cmj"),
         "mu_replicas": (int, 20_000), "traj_replicas": (int, 400),
         "cmj_horizon": (float, 9.0), "mu_horizon": (float, 30.0)},
        _run_colonization,
        "Entrance shooting of the colonization-equilibration pair",
    ),
    "intensity_fixed_point": (
        {"c": (float, 1.0), "s": (float, 1.0), "d": (float, 1.0), "N": (int, 200),
         "t_end": (float, 50.0), "replicas": (int, 16)},
        _run_intensity_fixed_point,
        "Self-consistent intensity vs the long-run finite-lattice chain",
    ),
    "single_site_timescale": (
        {"s": (float, 1.0), "d": (float, 0.0), "m": (float, 1.0),
         "L_values": (str, "100,1000,10000"), "replicas": (int, 40)},
        _run_single_site_timescale,
        "First rare-mutation times: log L versus linear-in-L regimes",
    ),
}


def experiment_names() -> list[str]:
    return sorted(EXPERIMENTS)


def experiment_schema(name: str) -> dict:
    if name not in EXPERIMENTS:
        raise UnknownExperimentError(name)
    return EXPERIMENTS[name][0]


def run_experiment(cfg: RunConfig) -> dict:
    if cfg.experiment not in EXPERIMENTS:
        raise UnknownExperimentError(cfg.experiment)
    runner = EXPERIMENTS[cfg.experiment][1]
    return runner(cfg)
