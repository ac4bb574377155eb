"""Mean-field system of N interacting Fisher-Wright diffusions with rare mutation.

Only the type-1 (inferior) frequencies are stored; the advantageous type is
1 - x1 throughout.  Each coordinate follows

    dx1 = c (xbar1 - x1) dt - s x1 (1 - x1) dt - (m / L) x1 dt
          + sqrt(d x1 (1 - x1)) dW,

with xbar1 the arithmetic mean across sites recomputed once per step and the
same Brownian increment driving both types with opposite sign.  Includes the
empirical-measure summaries and the label-tagged droplet measure of the sparse
advantageous mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemParams",
    "FrequencyState",
    "AtomicMassMeasure",
    "EmpiricalMeasure",
    "EmergenceResult",
    "default_dt",
    "step_system",
    "empirical_mean",
    "droplet_measure",
    "empirical_distribution",
    "initial_all_type1",
    "emergence_experiment",
]

MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class SystemParams:
    """N sites, migration c, selection s, resampling d, mutation intensity m.

    The per-site mutation drift is m / L; L defaults to N, the regime in which
    O(1) mutations arrive in all of space per unit time.
    """

    N: int
    c: float
    s: float
    d: float
    m: float
    L: float | None = None

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        for name in ("c", "s", "d", "m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.L is not None and not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def mutation_rate(self) -> float:
        return self.m / (self.L if self.L is not None else self.N)


@dataclass
class FrequencyState:
    """Type-1 frequencies at the N sites at time t."""

    x1: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.x1 = np.asarray(self.x1, dtype=float)
        if not np.all(np.isfinite(self.x1)):
            raise ValueError("x1 contains non-finite entries")
        if np.any(self.x1 < 0.0) or np.any(self.x1 > 1.0):
            raise ValueError("x1 entries must lie in [0, 1]")

    @property
    def x2(self) -> np.ndarray:
        return 1.0 - self.x1


@dataclass(frozen=True)
class AtomicMassMeasure:
    """Finite atomic measure on [0, 1]: fixed uniform labels carrying masses.

    Atoms below the pruning floor are dropped at construction.
    """

    labels: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        if self.labels.shape != self.masses.shape:
            raise ValueError("labels and masses must have equal shape")
        if np.any(self.masses < 0.0):
            raise ValueError("atom masses must be non-negative")
        if len(np.unique(self.labels)) != len(self.labels):
            raise ValueError("atom labels must be distinct")

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def n_atoms(self) -> int:
        return int(self.masses.size)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Normalized histogram of per-site frequencies on a uniform bin mesh."""

    bin_edges: np.ndarray
    masses: np.ndarray
    sample_count: int

    def __post_init__(self) -> None:
        if abs(self.masses.sum() - 1.0) > 1e-9:
            raise ValueError("bin masses must sum to 1")


@dataclass
class EmergenceResult:
    """Trajectories of the mean advantageous frequency on a shifted window."""

    times: np.ndarray            # absolute times, alpha_hat^-1 log N + window
    mean_type2: np.ndarray       # (replicas, len(times))
    half_takeover: np.ndarray    # absolute first time xbar2 >= 1/2 per replica
    shift: float                 # alpha_hat^-1 log N


def default_dt(params: SystemParams) -> float:
    """Stability heuristic: 1e-3 * min(1, 1 / (c + s + d + m/L))."""
    rate = params.c + params.s + params.d + params.mutation_rate
    return 1e-3 * min(1.0, 1.0 / rate) if rate > 0 else 1e-3


def _step_x1(x1: np.ndarray, params: SystemParams, dt: float,
             rng: np.random.Generator) -> np.ndarray:
    """Advance type-1 frequencies; sites along the last axis.

    Works on (N,) states or (replicas, N) batches; the mean is taken per
    replica once per step (simultaneous explicit update).
    """
    xbar = x1.mean(axis=-1, keepdims=True)
    yy = x1 * (1.0 - x1)
    drift = params.c * (xbar - x1) - params.s * yy - params.mutation_rate * x1
    noise = rng.standard_normal(x1.shape)
    proposal = x1 + drift * dt + np.sqrt(params.d * yy * dt) * noise
    return np.clip(proposal, 0.0, 1.0)


def _step_x1_boundary_exact(x1: np.ndarray, params: SystemParams, dt: float,
                            rng: np.random.Generator,
                            boundary_mult: float = 40.0) -> np.ndarray:
    """Euler step with an exact square-root substep near the endpoints.

    The clamped Euler step has a slowly decaying weak bias for coordinates
    within a few noise scales of a boundary (the boundary diffusion is of
    square-root type with a small drift-to-noise ratio).  For those
    coordinates the distance to the boundary is advanced one step as a
    zero-reversion square-root diffusion with frozen drift, whose transition
    is exactly a scaled noncentral chi-square.  Coordinates whose frozen
    drift points out of the domain fall back to the Euler proposal.
    """
    xbar = x1.mean(axis=-1, keepdims=True)
    yy = x1 * (1.0 - x1)
    drift = params.c * (xbar - x1) - params.s * yy - params.mutation_rate * x1
    noise = rng.standard_normal(x1.shape)
    prop = np.clip(x1 + drift * dt + np.sqrt(params.d * yy * dt) * noise, 0.0, 1.0)
    if params.d == 0.0:
        return prop
    delta = min(boundary_mult * params.d * dt, 0.05)

    hi = ((1.0 - x1) < delta) & (drift < 0.0)
    if hi.any():
        sig2 = params.d * np.maximum(x1[hi], 1e-12)
        scale = sig2 * dt / 4.0
        w = scale * rng.noncentral_chisquare(-4.0 * drift[hi] / sig2,
                                             (1.0 - x1[hi]) / scale)
        prop[hi] = np.clip(1.0 - w, 0.0, 1.0)
    lo = (x1 < delta) & (drift > 0.0)
    if lo.any():
        sig2 = params.d * np.maximum(1.0 - x1[lo], 1e-12)
        scale = sig2 * dt / 4.0
        w = scale * rng.noncentral_chisquare(4.0 * drift[lo] / sig2, x1[lo] / scale)
        prop[lo] = np.clip(w, 0.0, 1.0)
    return prop


def step_system(state: FrequencyState, params: SystemParams, dt: float,
                rng: np.random.Generator) -> FrequencyState:
    """One Euler step of the N-site system; entries clamped to [0, 1]."""
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if state.x1.shape != (params.N,):
        raise ValueError(f"state has {state.x1.shape} entries, expected ({params.N},)")
    if not np.all(np.isfinite(state.x1)):
        raise ValueError("state contains non-finite entries")
    return FrequencyState(x1=_step_x1(state.x1, params, dt, rng), t=state.t + dt)


def empirical_mean(state: FrequencyState, type_: int = 1) -> float:
    """Arithmetic mean frequency of the chosen type (1 or 2)."""
    if type_ not in (1, 2):
        raise ValueError(f"type must be 1 or 2, got {type_}")
    mean1 = float(state.x1.mean())
    return mean1 if type_ == 1 else 1.0 - mean1


def draw_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform site labels, fixed once per run."""
    return rng.uniform(0.0, 1.0, size=n)


def droplet_measure(state: FrequencyState, labels: np.ndarray,
                    mass_floor: float = MASS_FLOOR) -> AtomicMassMeasure:
    """Atomic measure sum_j x2(j) delta_{label(j)}, pruned below the floor."""
    if labels.shape != state.x1.shape:
        raise ValueError("labels must match the number of sites")
    masses = state.x2
    keep = masses > mass_floor
    return AtomicMassMeasure(labels=labels[keep].copy(), masses=masses[keep].copy())


def empirical_distribution(state: FrequencyState, bins: int) -> EmpiricalMeasure:
    """Normalized histogram of type-2 frequencies over `bins` uniform bins."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(state.x2, bins=edges)
    return EmpiricalMeasure(bin_edges=edges, masses=counts / state.x1.size,
                            sample_count=state.x1.size)


def initial_all_type1(params: SystemParams) -> FrequencyState:
    """The standard start: every site entirely of the inferior type."""
    return FrequencyState(x1=np.ones(params.N), t=0.0)


def emergence_experiment(
    params: SystemParams,
    alpha_hat: float,
    t_window: tuple[float, float],
    replicas: int,
    rng: np.random.Generator,
    dt: float | None = None,
    n_samples: int = 41,
    boundary_exact: bool = True,
) -> EmergenceResult:
    """Track the mean advantageous frequency around time alpha_hat^-1 log N.

    All replicas start from the all-type-1 state and are stepped as one
    (replicas, N) batch.  Records xbar2 on the shifted window
    [shift + t_lo, shift + t_hi] (truncated at 0) and the first time each
    replica reaches xbar2 >= 1/2.
    """
    if alpha_hat <= 0:
        raise ValueError(f"alpha_hat must be positive, got {alpha_hat}")
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    t_lo, t_hi = t_window
    if t_hi < t_lo:
        raise ValueError(f"empty window: {t_window}")
    if dt is None:
        dt = default_dt(params)

    shift = math.log(params.N) / alpha_hat
    sample_times = np.maximum(np.linspace(shift + t_lo, shift + t_hi, n_samples), 0.0)
    horizon = sample_times[-1]
    n_steps = int(math.ceil(horizon / dt))
    sample_steps = np.minimum(np.round(sample_times / dt).astype(int), n_steps)

    stepper = _step_x1_boundary_exact if boundary_exact else _step_x1
    x1 = np.ones((replicas, params.N))
    mean2 = np.zeros((replicas, n_samples))
    half_takeover = np.full(replicas, np.nan)
    next_sample = 0
    for step in range(n_steps + 1):
        xbar2 = 1.0 - x1.mean(axis=1)
        newly = np.isnan(half_takeover) & (xbar2 >= 0.5)
        half_takeover[newly] = step * dt
        while next_sample < n_samples and sample_steps[next_sample] == step:
            mean2[:, next_sample] = xbar2
            next_sample += 1
        if step < n_steps:
            x1 = stepper(x1, params, dt, rng)
    return EmergenceResult(times=sample_times, mean_type2=mean2,
                           half_takeover=half_takeover, shift=shift)


def half_takeover_times(
    params: SystemParams,
    replicas: int,
    rng: np.random.Generator,
    dt: float | None = None,
    max_time: float | None = None,
    boundary_exact: bool = True,
) -> np.ndarray:
    """First times xbar2 >= 1/2 per replica, run until every replica crosses.

    ``max_time`` guards runaway runs (default 4x the m = 0 heuristic horizon);
    replicas that never cross within it are returned as NaN.
    """
    if dt is None:
        dt = default_dt(params)
    if max_time is None:
        base = math.log(max(params.N, 2))
        max_time = 4.0 * (base / max(params.s, 1e-6) + 10.0)
    stepper = _step_x1_boundary_exact if boundary_exact else _step_x1
    x1 = np.ones((replicas, params.N))
    half = np.full(replicas, np.nan)
    t = 0.0
    while t < max_time and np.isnan(half).any():
        x1 = stepper(x1, params, dt, rng)
        t += dt
        xbar2 = 1.0 - x1.mean(axis=1)
        newly = np.isnan(half) & (xbar2 >= 0.5)
        half[newly] = t
    return half
