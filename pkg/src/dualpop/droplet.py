"""Excursion-driven droplet of advantageous mass.

The limiting droplet is an atomic-measure-valued branching process with
immigration: excursions of the single-site diffusion from 0 are spawned at
rate m + c * (total mass) and carry uniform labels.  Excursions of the
sigma-finite law are approximated by their restriction to paths exceeding a
threshold eps: such paths arrive at rate (m + c M) / S(eps) and start at eps,
which is the only finite-rate truncation of the excursion law (paths never
reaching eps are dropped, an O(eps) mass bias).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fw_single import DiffusionParams, scale_function

__all__ = [
    "DropletState",
    "DropletTrajectory",
    "GrowthConstantFit",
    "step_droplet",
    "simulate_droplet",
    "simulate_droplet_ensemble",
    "growth_constant",
]


@dataclass
class DropletState:
    """Live excursions: label, current mass and birth time of each atom."""

    labels: np.ndarray
    masses: np.ndarray
    birth_times: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        if not (len(self.labels) == len(self.masses) == len(self.birth_times)):
            raise ValueError("label/mass/birth arrays must have equal length")
        if np.any(self.masses <= 0.0):
            raise ValueError("active excursion masses must be positive")

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def n_atoms(self) -> int:
        return int(self.masses.size)


def empty_droplet() -> DropletState:
    return DropletState(labels=np.array([]), masses=np.array([]),
                        birth_times=np.array([]), t=0.0)


@dataclass
class DropletTrajectory:
    times: np.ndarray
    total_mass: np.ndarray
    n_atoms: np.ndarray


@dataclass
class GrowthConstantFit:
    alpha_star: float
    intercept: float
    W_samples: np.ndarray
    times: np.ndarray
    mean_mass: np.ndarray
    eps: float
    degenerate: bool = False


def _advance_masses(masses: np.ndarray, params: DiffusionParams, dt: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Euler step of all live excursions; entries <= 0 mark finished paths."""
    y = masses
    yy = y * (1.0 - y)
    prop = (y + (-params.c * y + params.s * yy) * dt
            + np.sqrt(params.d * yy * dt) * rng.standard_normal(y.size))
    return np.minimum(prop, 1.0)


def step_droplet(
    state: DropletState,
    params: DiffusionParams,
    m: float,
    eps: float,
    dt: float,
    rng: np.random.Generator,
    scale_eps: float | None = None,
) -> DropletState:
    """One time step: evolve atoms, drop the dead, spawn threshold crossings.

    New excursions appear as Poisson events with intensity
    (m + c * total_mass) / S(eps), each starting at mass eps under a fresh
    uniform label.  Pass ``scale_eps`` to reuse a precomputed S(eps).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if m < 0.0:
        raise ValueError(f"immigration rate must be >= 0, got {m}")
    s_eps = scale_function(params, eps) if scale_eps is None else scale_eps

    prop = _advance_masses(state.masses, params, dt, rng)
    keep = prop > 0.0
    labels = state.labels[keep]
    masses = prop[keep]
    births = state.birth_times[keep]

    intensity = (m + params.c * state.total_mass) / s_eps
    n_new = int(rng.poisson(intensity * dt))
    if n_new:
        labels = np.concatenate([labels, rng.uniform(0.0, 1.0, size=n_new)])
        masses = np.concatenate([masses, np.full(n_new, eps)])
        births = np.concatenate([births, np.full(n_new, state.t + dt)])
    return DropletState(labels=labels, masses=masses, birth_times=births,
                        t=state.t + dt)


def simulate_droplet(
    params: DiffusionParams,
    m: float,
    eps: float,
    horizon: float,
    dt: float,
    rng: np.random.Generator,
    record_times: np.ndarray | None = None,
) -> DropletTrajectory:
    """Single-replica droplet run from the empty state."""
    if record_times is None:
        record_times = np.linspace(0.0, horizon, 201)
    s_eps = scale_function(params, eps)
    state = empty_droplet()
    out_mass, out_atoms = [], []
    idx = 0
    n_steps = int(math.ceil(horizon / dt))
    for step in range(n_steps + 1):
        t = step * dt
        while idx < len(record_times) and record_times[idx] <= t + 0.5 * dt:
            out_mass.append(state.total_mass)
            out_atoms.append(state.n_atoms)
            idx += 1
        if step < n_steps:
            state = step_droplet(state, params, m, eps, dt, rng, scale_eps=s_eps)
    while idx < len(record_times):
        out_mass.append(state.total_mass)
        out_atoms.append(state.n_atoms)
        idx += 1
    return DropletTrajectory(times=np.asarray(record_times),
                             total_mass=np.array(out_mass),
                             n_atoms=np.array(out_atoms, dtype=np.int64))


def simulate_droplet_ensemble(
    params: DiffusionParams,
    m: float,
    eps: float,
    horizon: float,
    dt: float,
    replicas: int,
    rng: np.random.Generator,
    n_samples: int = 101,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All replicas stepped together on flat arrays keyed by replica index.

    Returns (record_times, total_mass[replica, time], n_atoms[replica, time]).
    """
    s_eps = scale_function(params, eps)
    record_times = np.linspace(0.0, horizon, n_samples)
    n_steps = int(math.ceil(horizon / dt))
    record_steps = np.round(record_times / dt).astype(int)

    rep = np.zeros(0, dtype=np.int64)
    masses = np.zeros(0)
    mass_out = np.zeros((replicas, n_samples))
    atoms_out = np.zeros((replicas, n_samples), dtype=np.int64)
    totals = np.zeros(replicas)

    next_rec = 0
    for step in range(n_steps + 1):
        while next_rec < n_samples and record_steps[next_rec] == step:
            mass_out[:, next_rec] = totals
            atoms_out[:, next_rec] = np.bincount(rep, minlength=replicas)
            next_rec += 1
        if step >= n_steps:
            break
        if masses.size:
            prop = _advance_masses(masses, params, dt, rng)
            keep = prop > 0.0
            rep, masses = rep[keep], prop[keep]
        n_new = rng.poisson((m + params.c * totals) / s_eps * dt)
        total_new = int(n_new.sum())
        if total_new:
            rep = np.concatenate([rep, np.repeat(np.arange(replicas), n_new)])
            masses = np.concatenate([masses, np.full(total_new, eps)])
        totals = np.bincount(rep, weights=masses, minlength=replicas)
    return record_times, mass_out, atoms_out


def growth_constant(
    params: DiffusionParams,
    m: float,
    eps: float,
    horizon: float,
    replicas: int,
    rng: np.random.Generator,
    dt: float = 1e-3,
    tail_fraction: float = 0.5,
) -> GrowthConstantFit:
    """Exponential growth rate of the mean total mass and the rescaled
    terminal-mass samples.

    Fits log E[total_mass(t)] against t by least squares over the tail half
    of the horizon; W samples are e^{-alpha t_end} * mass(t_end) per replica.
    Requires m > 0 (otherwise the droplet a.s. stays empty).
    """
    if m <= 0.0:
        raise ValueError(f"growth fitting requires m > 0, got {m}")
    times, mass, _ = simulate_droplet_ensemble(
        params, m, eps, horizon, dt, replicas, rng)
    mean_mass = mass.mean(axis=0)
    n_tail = max(int(len(times) * tail_fraction), 2)
    t_tail = times[-n_tail:]
    mean_tail = mean_mass[-n_tail:]
    if np.any(mean_tail <= 0.0):
        return GrowthConstantFit(alpha_star=math.nan, intercept=math.nan,
                                 W_samples=np.array([]), times=times,
                                 mean_mass=mean_mass, eps=eps, degenerate=True)
    slope, intercept = np.polyfit(t_tail, np.log(mean_tail), 1)
    w = mass[:, -1] * math.exp(-slope * horizon)
    return GrowthConstantFit(alpha_star=float(slope), intercept=float(intercept),
                             W_samples=w, times=times, mean_mass=mean_mass, eps=eps)
