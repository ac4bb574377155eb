"""Colonization-equilibration system for the occupied-site density.

Deterministic limit of the site bookkeeping of the particle model: u is the
fraction of occupied sites and Usize the size distribution among them
(age-marginalized; the age transport contributes only the explicit age-zero
injection, so the size-marginal system is closed).  The pair evolves by

    du/dt = a(t) (1 - u) u - g(t) u^2,
    a(t) = c * sum_{j>=2} j Usize(j),   g(t) = c * Usize(1),

and Usize by per-site birth/death/emigration flows, a migration shift at rate
u (a + g), loss of singletons whose emigrant lands on an occupied site, an
age-zero source (1 - u) a at j = 1, and the renormalization induced by the
changing number of occupied sites.  The right-hand side conserves the total
Usize mass identically (the truncation at j_max reflects overflow), so the
explicit stepper preserves it to round-off.

The death flows use the pairwise convention: a site of size j loses a
particle at rate (d/2) j (j - 1).  The particle simulators use the
per-particle convention d (k - 1), so a stochastic run matching this system
at parameter d must be driven with death coefficient d/2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ColonizationParams",
    "ColonizationState",
    "StepRejected",
    "ColonizationTrajectory",
    "default_j_max",
    "colonization_rates",
    "colonization_rhs",
    "step_colonization",
    "run_colonization",
    "entrance_shoot",
    "stable_size_distribution",
    "nu_norm",
]


@dataclass(frozen=True)
class ColonizationParams:
    c: float
    s: float
    d: float

    def __post_init__(self) -> None:
        for name in ("c", "s", "d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass
class ColonizationState:
    """Occupied fraction u and size distribution usize[j-1] = Usize(j)."""

    u: float
    usize: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.usize = np.asarray(self.usize, dtype=float)
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"u must lie in [0, 1], got {self.u}")
        if np.any(self.usize < -1e-12):
            raise ValueError("size distribution has a negative entry")
        if abs(self.usize.sum() - 1.0) > 1e-8:
            raise ValueError(f"size distribution must sum to 1, got {self.usize.sum()!r}")

    @property
    def j_max(self) -> int:
        return self.usize.size

    def mean_size(self) -> float:
        return float(np.arange(1, self.j_max + 1) @ self.usize)


class StepRejected(ValueError):
    def __init__(self, dt: float, worst: float):
        super().__init__(
            f"step dt={dt:.3e} drove a size-distribution entry to {worst:.3e}; reduce dt"
        )
        self.suggested_dt = 0.5 * dt


@dataclass
class ColonizationTrajectory:
    times: np.ndarray
    u: np.ndarray
    usize: np.ndarray        # (n_samples, j_max)
    mass_error: float        # max |sum Usize - 1| over every step taken
    n_steps: int = 0


def default_j_max(params: ColonizationParams) -> int:
    if params.d <= 0:
        return 64
    return int(math.ceil(4.0 * (params.s / params.d + 10.0)))


def colonization_rates(usize: np.ndarray, c: float) -> tuple[float, float]:
    """(a, g): colonization and annihilation rates from the size marginal."""
    j = np.arange(1, usize.size + 1)
    a = c * float((j[1:] * usize[1:]).sum())
    g = c * float(usize[0])
    return a, g


def _size_flows(U: np.ndarray, u: float, a: float, g: float, c: float,
                s: float, d: float) -> np.ndarray:
    """Size-direction flows shared by the marginal and age-structured systems
    (births, pairwise deaths, emigration, singleton absorption on collision,
    migration shift); excludes the new-site source and the renormalization.
    Acts on the last axis; mass-neutral except the -c u U(1) absorption."""
    J = U.shape[-1]
    j = np.arange(1, J + 1, dtype=float)
    dU = np.zeros_like(U)
    # internal births: j-1 -> j, capped at j_max (overflow reflection)
    dU[..., 1:] += s * j[:-1] * U[..., :-1]
    dU[..., :-1] -= s * j[:-1] * U[..., :-1]
    # pairwise deaths: j+1 -> j
    death = 0.5 * d * j * (j - 1.0) * U          # zero at j = 1
    dU[..., :-1] += death[..., 1:]
    dU -= death
    # emigration: j+1 -> j for j >= 1; loss only for j >= 2
    emig = c * j * U
    emig[..., 0] = 0.0
    dU[..., :-1] += emig[..., 1:]
    dU -= emig
    # singleton whose emigrant lands on an occupied site: the site is absorbed
    dU[..., 0] -= c * u * U[..., 0]
    # immigration shift at rate u (a + g): j -> j + 1, reflected at j_max
    shift = u * (a + g) * U
    dU[..., 1:] += shift[..., :-1]
    dU[..., :-1] -= shift[..., :-1]
    return dU


def colonization_rhs(state: ColonizationState,
                     params: ColonizationParams) -> tuple[float, np.ndarray]:
    """(du/dt, dUsize/dt); the dUsize flows sum to (1 - S)(a(1-u) - g u)
    with S the current Usize total, so S = 1 is exactly invariant."""
    U = state.usize
    u = state.u
    a, g = colonization_rates(U, params.c)
    dU = _size_flows(U, u, a, g, params.c, params.s, params.d)
    # newly colonized sites enter at size 1
    dU[0] += (1.0 - u) * a
    # renormalization from the changing occupied count
    dU -= (a * (1.0 - u) - g * u) * U
    du = a * (1.0 - u) * u - g * u * u
    return du, dU


def step_colonization(state: ColonizationState, params: ColonizationParams,
                      dt: float, negativity_tol: float = 1e-12) -> ColonizationState:
    """One explicit Euler step; rejects steps producing negative entries."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    du, dU = colonization_rhs(state, params)
    new_u = min(max(state.u + dt * du, 0.0), 1.0)
    new_U = state.usize + dt * dU
    worst = float(new_U.min())
    if worst < -negativity_tol:
        raise StepRejected(dt, worst)
    np.maximum(new_U, 0.0, out=new_U)
    return ColonizationState(u=new_u, usize=new_U, t=state.t + dt)


def stable_dt(params: ColonizationParams, j_max: int, safety: float = 0.5) -> float:
    """Explicit-Euler bound from the stiffest (quadratic-death) loss rate."""
    rate = (params.s * j_max + 0.5 * params.d * j_max * (j_max - 1)
            + params.c * j_max + 1.0)
    return safety / rate


def run_colonization(state0: ColonizationState, params: ColonizationParams,
                     horizon: float, dt: float | None = None,
                     n_samples: int = 201) -> ColonizationTrajectory:
    if dt is None:
        dt = stable_dt(params, state0.j_max)
    n_steps = int(math.ceil(horizon / dt))
    dt = horizon / n_steps
    sample_steps = np.unique(np.round(np.linspace(0, n_steps, n_samples)).astype(int))

    times, us, usizes = [], [], []
    mass_err = 0.0
    state = state0
    next_idx = 0
    for step in range(n_steps + 1):
        mass_err = max(mass_err, abs(state.usize.sum() - 1.0))
        if next_idx < len(sample_steps) and sample_steps[next_idx] == step:
            times.append(state.t)
            us.append(state.u)
            usizes.append(state.usize.copy())
            next_idx += 1
        if step < n_steps:
            state = step_colonization(state, params, dt)
    return ColonizationTrajectory(times=np.array(times), u=np.array(us),
                                  usize=np.array(usizes), mass_error=mass_err,
                                  n_steps=n_steps)


def stable_size_distribution(params: ColonizationParams, j_max: int | None = None,
                             horizon: float = 60.0, dt: float | None = None,
                             tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Stationary size distribution of the u -> 0 (pre-saturation) system.

    Relaxes the frozen-u=0 flows from the singleton state; the fixed point is
    the stable size law of the site-branching structure, and the associated
    colonization rate a* is its growth constant.  Returns (usize, a*).
    """
    if j_max is None:
        j_max = default_j_max(params)
    state = ColonizationState(u=0.0, usize=np.eye(1, j_max, 0).ravel(), t=0.0)
    if dt is None:
        dt = stable_dt(params, j_max)
    prev = state.usize
    steps = int(math.ceil(horizon / dt))
    check_every = max(steps // 200, 1)
    for step in range(steps):
        state = step_colonization(state, params, dt)
        state.u = 0.0
        if step % check_every == 0:
            if np.abs(state.usize - prev).max() < tol:
                break
            prev = state.usize.copy()
    a, _ = colonization_rates(state.usize, params.c)
    return state.usize, a


def nu_norm(usize: np.ndarray) -> float:
    """Weighted mass sum (1 + j^2) Usize(j), the bounding norm of the flows."""
    j = np.arange(1, usize.size + 1, dtype=float)
    return float(((1.0 + j * j) * usize).sum())


@dataclass
class AgeSizeState:
    """Age-structured variant: mass over (age bin, size) cells.

    Inspection mode for the age-resolved system; the load-bearing solver is
    the age-marginalized one.  The last age bin collects everything older
    than the mesh (so age transport conserves mass).
    """

    u: float
    mass: np.ndarray        # (n_age, j_max)
    age_bin: float
    t: float = 0.0

    def __post_init__(self) -> None:
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.ndim != 2:
            raise ValueError("age-size mass must be a 2-d array")
        if abs(self.mass.sum() - 1.0) > 1e-8:
            raise ValueError(f"age-size mass must sum to 1, got {self.mass.sum()!r}")

    def size_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def age_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)


def step_colonization_age(state: AgeSizeState, params: ColonizationParams,
                          dt: float) -> AgeSizeState:
    """Explicit step of the age-resolved system: upwind age transport at unit
    speed plus the common size flows, age-zero injection and renormalization."""
    U = state.mass
    u = state.u
    sizes = state.size_marginal()
    a, g = colonization_rates(sizes, params.c)
    dU = _size_flows(U, u, a, g, params.c, params.s, params.d)
    # age transport (upwind, unit speed); the top bin accumulates
    flux = U[:-1] / state.age_bin
    dU[1:] += flux
    dU[:-1] -= flux
    # newly colonized sites enter at age 0, size 1
    dU[0, 0] += (1.0 - u) * a / 1.0
    dU -= (a * (1.0 - u) - g * u) * U
    new_mass = U + dt * dU
    if new_mass.min() < -1e-12:
        raise StepRejected(dt, float(new_mass.min()))
    np.maximum(new_mass, 0.0, out=new_mass)
    du = a * (1.0 - u) * u - g * u * u
    return AgeSizeState(u=min(max(u + dt * du, 0.0), 1.0), mass=new_mass,
                        age_bin=state.age_bin, t=state.t + dt)


def stable_age_size_distribution(params: ColonizationParams, j_max: int,
                                 n_age: int = 48, age_bin: float = 0.5,
                                 horizon: float = 60.0,
                                 dt: float | None = None) -> AgeSizeState:
    """Relax the u -> 0 age-resolved system to its stationary shape.

    The fixed point approximates the stable age-size law of the site process:
    geometric age decay at the growth rate with the internal-chain size law
    along each age slice.
    """
    mass = np.zeros((n_age, j_max))
    mass[0, 0] = 1.0
    state = AgeSizeState(u=0.0, mass=mass, age_bin=age_bin)
    if dt is None:
        dt = min(stable_dt(params, j_max), 0.25 * age_bin)
    for _ in range(int(math.ceil(horizon / dt))):
        state = step_colonization_age(state, params, dt)
        state.u = 0.0
    return state


@dataclass
class EntranceShot:
    times: np.ndarray
    u: np.ndarray
    usize: np.ndarray
    compensated: np.ndarray    # e^{-alpha t} u(t)
    window: np.ndarray         # mask: pre-saturation samples (u < u_cap)
    alpha: float
    amplitude: float
    mass_error: float = 0.0
    n_steps: int = 0


def entrance_shoot(
    params: ColonizationParams,
    amplitude: float,
    alpha: float,
    stable: np.ndarray,
    t_start: float,
    horizon: float,
    dt: float | None = None,
    u_cap: float = 1e-2,
    n_samples: int = 401,
) -> EntranceShot:
    """Shoot the entrance trajectory u(t) ~ A e^{alpha t} from deep negative t.

    Initializes u(t_start) = A e^{alpha t_start} with the stable size law and
    integrates forward to `horizon`; reports e^{-alpha t} u(t) and the
    pre-saturation window u < u_cap on which it should hold near A.  Warns
    when u(t_start) is not small enough to resolve the entrance regime.
    """
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    u0 = amplitude * math.exp(alpha * t_start)
    if u0 > 1e-3:
        warnings.warn(
            f"u(t_start) = {u0:.2e} > 1e-3: entrance regime poorly resolved; "
            "move t_start earlier", stacklevel=2)
    state0 = ColonizationState(u=u0, usize=np.asarray(stable, dtype=float), t=t_start)
    traj = run_colonization(state0, params, horizon - t_start, dt=dt,
                            n_samples=n_samples)
    compensated = traj.u * np.exp(-alpha * traj.times)
    window = traj.u < u_cap
    return EntranceShot(times=traj.times, u=traj.u, usize=traj.usize,
                        compensated=compensated, window=window,
                        alpha=alpha, amplitude=amplitude,
                        mass_error=traj.mass_error, n_steps=traj.n_steps)
