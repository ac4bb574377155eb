"""Finite-volume solver for the nonlinear density equation of the mean-field
frequency limit,

    du/dt = -d/dx[(c (m(t) - x) + s x (1 - x)) u] + (d/2) d2/dx2[x (1 - x) u],

with m(t) the current grid mean.  Cell masses are advanced in flux form
(upwinded drift flux, centered diffusion flux with coefficients at the cell
interfaces, zero flux through the endpoints), so total mass is conserved to
round-off by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DensityGrid",
    "CFLError",
    "MeanCurve",
    "uniform_density",
    "point_mass_density",
    "cfl_limit",
    "step_mkv_pde",
    "run_mkv",
    "run_mkv_to_fixation",
]


@dataclass
class DensityGrid:
    """Piecewise-constant law on [0, 1]: M cell masses summing to 1."""

    masses: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.ndim != 1 or self.masses.size < 2:
            raise ValueError("need at least two cells")
        if np.any(self.masses < -1e-12):
            raise ValueError("cell masses must be non-negative")
        if abs(self.masses.sum() - 1.0) > 1e-10:
            raise ValueError(f"total mass must be 1, got {self.masses.sum()!r}")

    @property
    def n_cells(self) -> int:
        return self.masses.size

    @property
    def dx(self) -> float:
        return 1.0 / self.masses.size

    @property
    def centers(self) -> np.ndarray:
        m = self.masses.size
        return (np.arange(m) + 0.5) / m

    @property
    def interfaces(self) -> np.ndarray:
        """Interior interfaces x_{i+1/2}, i = 1..M-1."""
        m = self.masses.size
        return np.arange(1, m) / m

    def mean(self) -> float:
        return float(self.centers @ self.masses)

    def total_mass(self) -> float:
        return float(self.masses.sum())


class CFLError(ValueError):
    def __init__(self, dt: float, dt_max: float):
        super().__init__(f"dt={dt:.3e} violates the stability bound; use dt <= {dt_max:.3e}")
        self.suggested_dt = dt_max


@dataclass
class MeanCurve:
    times: np.ndarray
    mean: np.ndarray
    mass_drift: float     # |total mass - 1| at the end of the run
    final: DensityGrid
    fixation_reached: bool | None = None


def uniform_density(n_cells: int) -> DensityGrid:
    return DensityGrid(masses=np.full(n_cells, 1.0 / n_cells))


def point_mass_density(n_cells: int, y0: float) -> DensityGrid:
    """All mass in the cell containing y0."""
    if not 0.0 <= y0 <= 1.0:
        raise ValueError(f"y0 must lie in [0, 1], got {y0}")
    masses = np.zeros(n_cells)
    masses[min(int(y0 * n_cells), n_cells - 1)] = 1.0
    return DensityGrid(masses=masses)


def cfl_limit(grid: DensityGrid, c: float, s: float, d: float,
              safety: float = 0.9) -> float:
    """Largest stable explicit step from current drift/diffusion maxima."""
    dx = grid.dx
    v_max = c + 0.25 * s          # |c (m - x)| <= c, s x(1-x) <= s/4
    return safety / (v_max / dx + 0.25 * d / dx ** 2 + 0.25 * d / dx)


def _fluxes(masses: np.ndarray, dx: float, iface: np.ndarray, c: float,
            s: float, d: float, m_mean: float) -> np.ndarray:
    """Net flux (in +x direction) through the interior interfaces."""
    u = masses / dx
    drift = c * (m_mean - iface) + s * iface * (1.0 - iface)
    upwind = np.where(drift > 0.0, u[:-1], u[1:])
    advective = drift * upwind
    d_if = iface * (1.0 - iface)
    dprime_if = 1.0 - 2.0 * iface
    diffusive = 0.5 * d * (d_if * (u[1:] - u[:-1]) / dx
                           + dprime_if * 0.5 * (u[:-1] + u[1:]))
    return advective - diffusive


def step_mkv_pde(grid: DensityGrid, c: float, s: float, d: float,
                 dt: float) -> DensityGrid:
    """One conservative finite-volume step; rejects dt above the CFL bound."""
    dt_max = cfl_limit(grid, c, s, d, safety=1.0)
    if dt > dt_max:
        raise CFLError(dt, 0.9 * dt_max)
    flux = _fluxes(grid.masses, grid.dx, grid.interfaces, c, s, d, grid.mean())
    masses = grid.masses.copy()
    masses[:-1] -= flux * dt
    masses[1:] += flux * dt
    return DensityGrid(masses=masses, t=grid.t + dt)


def run_mkv(grid0: DensityGrid, c: float, s: float, d: float, horizon: float,
            dt: float | None = None, n_samples: int = 201) -> MeanCurve:
    """Integrate the density equation, recording the mean curve m(t)."""
    if dt is None:
        dt = cfl_limit(grid0, c, s, d)
    else:
        dt_max = cfl_limit(grid0, c, s, d, safety=1.0)
        if dt > dt_max:
            raise CFLError(dt, 0.9 * dt_max)
    n_steps = int(math.ceil(horizon / dt))
    dt = horizon / n_steps
    sample_steps = np.unique(np.round(np.linspace(0, n_steps, n_samples)).astype(int))

    dx = grid0.dx
    iface = grid0.interfaces
    centers = grid0.centers
    masses = grid0.masses.copy()
    times, means = [], []
    next_idx = 0
    m_mean = float(centers @ masses)
    for step in range(n_steps + 1):
        if next_idx < len(sample_steps) and sample_steps[next_idx] == step:
            times.append(grid0.t + step * dt)
            means.append(m_mean)
            next_idx += 1
        if step == n_steps:
            break
        flux = _fluxes(masses, dx, iface, c, s, d, m_mean)
        masses[:-1] -= flux * dt
        masses[1:] += flux * dt
        m_mean = float(centers @ masses)
    final = DensityGrid(masses=np.maximum(masses, 0.0) if masses.min() > -1e-12 else masses,
                        t=grid0.t + horizon)
    return MeanCurve(times=np.array(times), mean=np.array(means),
                     mass_drift=abs(masses.sum() - 1.0), final=final)


def run_mkv_to_fixation(grid0: DensityGrid, c: float, s: float, d: float,
                        horizon: float, dt: float | None = None,
                        fixation_mean: float = 0.99) -> MeanCurve:
    """Integrate until `horizon` and flag whether the mean reached fixation.

    Fixation toward the point mass at 1 is asserted through the mean
    (m >= fixation_mean), the operational stand-in on a fixed mesh.
    Requires a positive initial mean and s > 0 for a non-trivial run.
    """
    if s <= 0:
        raise ValueError("fixation requires s > 0")
    curve = run_mkv(grid0, c, s, d, horizon, dt=dt)
    curve.fixation_reached = bool(curve.mean[-1] >= fixation_mean)
    return curve
