"""Single-site Fisher-Wright diffusion numerics.

Euler-Maruyama stepping for

    dy = c (m_bar - y) dt + s y (1 - y) dt + sqrt(d y (1 - y)) dW,

together with the scale function S (S(0) = 0, S'(y) = exp(-2 s y) (1-y)^{-2c}),
hitting probabilities S(eps)/S(eta), and sampling of positive excursions from
0 approximated by paths started at a small threshold eps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiffusionParams",
    "ClampTally",
    "ExcursionPath",
    "ScaleTable",
    "step_fw",
    "scale_integrand",
    "scale_function",
    "scale_table",
    "hitting_probability",
    "sample_excursion",
    "excursion_sup_survey",
]

DEFAULT_DT = 1e-3
DEFAULT_MAX_STEPS = 10 ** 6


@dataclass(frozen=True)
class DiffusionParams:
    """Rates of the one-dimensional diffusion.

    c is the restoring/migration rate toward the external mean ``m_bar``,
    s the selection rate, d the resampling (noise) rate. All rates are per
    unit time; ``m_bar`` is a frequency in [0, 1] (0 for excursion work).
    """

    c: float
    s: float
    d: float
    m_bar: float = 0.0

    def __post_init__(self) -> None:
        for name in ("c", "s", "d", "m_bar"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.c < 0 or self.s < 0 or self.d < 0:
            raise ValueError(f"rates must be non-negative: c={self.c}, s={self.s}, d={self.d}")
        if not 0.0 <= self.m_bar <= 1.0:
            raise ValueError(f"m_bar must lie in [0, 1], got {self.m_bar}")


@dataclass
class ClampTally:
    """Counts of Euler proposals clamped back into [0, 1]."""

    low: int = 0
    high: int = 0

    @property
    def total(self) -> int:
        return self.low + self.high


@dataclass
class ExcursionPath:
    """A sampled excursion: path from eps until the first step at/below 0.

    ``zeta`` is the recorded lifetime; if the path never returned to 0 within
    the step cap, ``capped`` is True and ``zeta`` is the truncation time.
    """

    start_time: float
    times: np.ndarray
    values: np.ndarray
    zeta: float
    capped: bool = False

    @property
    def sup(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class ScaleTable:
    """Scale function evaluated on an ascending mesh of [0, 1)."""

    grid: np.ndarray
    values: np.ndarray
    params: DiffusionParams

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(g < 0.0) or np.any(g >= 1.0) or np.any(np.diff(g) <= 0.0):
            raise ValueError("grid must be strictly ascending within [0, 1)")
        if not np.all(np.isfinite(v)):
            raise ValueError("scale values must be finite on [0, 1)")
        if np.any(np.diff(v) <= 0.0):
            raise ValueError("scale function must be strictly increasing")
        if g[0] == 0.0 and v[0] != 0.0:
            raise ValueError("S(0) must be 0")


def _validate_state(state: np.ndarray | float) -> np.ndarray:
    arr = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("state contains non-finite entries")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("state must lie in [0, 1]")
    return arr


def step_fw(
    state: np.ndarray | float,
    params: DiffusionParams,
    dt: float,
    noise: np.ndarray | float,
    tally: ClampTally | None = None,
):
    """One Euler-Maruyama step; result clamped to [0, 1].

    ``noise`` is a standard normal draw (scalar or array broadcastable with
    ``state``).  Clamping events are counted in ``tally`` when given.  The
    endpoints are exact fixed points whenever drift and noise vanish there
    (always at 0 for m_bar = 0; at 1 only when c = 0 or m_bar = 1).
    """
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    y = _validate_state(state)
    z = np.asarray(noise, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("noise contains non-finite entries")
    yy = y * (1.0 - y)
    drift = params.c * (params.m_bar - y) + params.s * yy
    proposal = y + drift * dt + np.sqrt(params.d * yy * dt) * z
    if tally is not None:
        tally.low += int(np.count_nonzero(proposal < 0.0))
        tally.high += int(np.count_nonzero(proposal > 1.0))
    out = np.clip(proposal, 0.0, 1.0)
    if np.isscalar(state) or np.ndim(state) == 0:
        return float(out)
    return out


def scale_integrand(params: DiffusionParams, y: np.ndarray | float):
    """S'(y) = exp(-2 s y) / (1 - y)^{2c}; singular at 1 when c > 0."""
    y = np.asarray(y, dtype=float)
    return np.exp(-2.0 * params.s * y) * (1.0 - y) ** (-2.0 * params.c)


def _adaptive_simpson(f, a: float, b: float, fa: float, fm: float, fb: float,
                      whole: float, tol: float, depth: int) -> float:
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0:
        return left + right
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    return (_adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def scale_function(params: DiffusionParams, x: float, rel_tol: float = 1e-12) -> float:
    """S(x) by adaptive composite Simpson quadrature of S' with S(0) = 0.

    The integrand is smooth away from 1; for c > 0 refinement concentrates
    near 1 automatically through the adaptive error control.  Requires
    0 <= x < 1 (the integrand is singular at 1 when c > 0).
    """
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    if x < 0.0 or x >= 1.0:
        raise ValueError(f"scale function requires 0 <= x < 1, got {x}")
    if x == 0.0:
        return 0.0

    def f(y: float) -> float:
        return math.exp(-2.0 * params.s * y) * (1.0 - y) ** (-2.0 * params.c)

    # Split at midpoints toward 1 so the adaptive pass starts from panels on
    # which the integrand varies moderately even for c > 0, x near 1.
    breaks = [0.0]
    while params.c > 0.0 and (x - breaks[-1]) > 0.125 * (1.0 - breaks[-1]):
        breaks.append(breaks[-1] + 0.5 * (1.0 - breaks[-1]))
        if len(breaks) > 60:
            break
    breaks = [b for b in breaks if b < x] + [x]

    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        fa, fb = f(a), f(b)
        fm = f(0.5 * (a + b))
        whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        total += _adaptive_simpson(f, a, b, fa, fm, fb, whole,
                                   max(rel_tol * max(abs(whole), 1e-300), 1e-300), 48)
    return total


def scale_table(params: DiffusionParams, grid: np.ndarray) -> ScaleTable:
    """Evaluate S on an ascending mesh of [0, 1)."""
    grid = np.asarray(grid, dtype=float)
    values = np.array([scale_function(params, float(x)) for x in grid])
    return ScaleTable(grid=grid, values=values, params=params)


def hitting_probability(params: DiffusionParams, eps: float, eta: float) -> float:
    """P_eps(hit eta before 0) = S(eps) / S(eta); requires 0 < eps < eta < 1."""
    if not (0.0 < eps < eta < 1.0):
        raise ValueError(f"need 0 < eps < eta < 1, got eps={eps}, eta={eta}")
    return scale_function(params, eps) / scale_function(params, eta)


def sample_excursion(
    params: DiffusionParams,
    eps: float,
    dt: float,
    rng: np.random.Generator,
    max_steps: int = DEFAULT_MAX_STEPS,
    record_path: bool = True,
) -> ExcursionPath:
    """Sample one excursion started at eps, stepped until the first raw Euler
    proposal at/below 0 (checked before clamping).

    Approximates the excursion law conditioned to exceed eps; m_bar is forced
    to 0.  Noiseless parameter choices never hit 0, so ``max_steps`` caps the
    lifetime and marks the path as capped.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    p = DiffusionParams(c=params.c, s=params.s, d=params.d, m_bar=0.0)
    y = eps
    times = [0.0] if record_path else None
    values = [eps] if record_path else None
    sup = eps
    t = 0.0
    for _ in range(max_steps):
        z = rng.standard_normal()
        yy = y * (1.0 - y)
        proposal = y + (-p.c * y + p.s * yy) * dt + math.sqrt(p.d * yy * dt) * z
        t += dt
        if proposal <= 0.0:
            if record_path:
                times.append(t)
                values.append(0.0)
            return ExcursionPath(
                start_time=0.0,
                times=np.array(times if record_path else [0.0, t]),
                values=np.array(values if record_path else [eps, 0.0]),
                zeta=t,
                capped=False,
            )
        y = min(proposal, 1.0)
        sup = max(sup, y)
        if record_path:
            times.append(t)
            values.append(y)
    return ExcursionPath(
        start_time=0.0,
        times=np.array(times if record_path else [0.0, t]),
        values=np.array(values if record_path else [eps, y]),
        zeta=t,
        capped=True,
    )


def excursion_sup_survey(
    params: DiffusionParams,
    eps: float,
    etas,
    n_paths: int,
    dt: float,
    rng: np.random.Generator,
    max_steps: int = DEFAULT_MAX_STEPS,
    bridge_correction: bool = True,
) -> dict:
    """Empirical P(sup of excursion >= eta) over a batch of excursions.

    Batched Euler stepping of all live excursions at once; each path ends at
    its first raw proposal <= 0.  The discrete running maximum misses
    within-step crossings (an O(sqrt(dt)) barrier bias), so by default each
    step also flags a crossing with the Brownian-bridge probability
    exp(-2 (eta - x)(eta - x') / (sigma^2 dt)).  Returns per-eta frequencies
    with binomial standard errors.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    etas = np.asarray(etas, dtype=float)
    y = np.full(n_paths, eps)
    crossed = np.zeros((len(etas), n_paths), dtype=bool)
    for j, eta in enumerate(etas):
        crossed[j] = eps >= eta
    alive = np.ones(n_paths, dtype=bool)
    c, s, d = params.c, params.s, params.d
    sq = math.sqrt(dt)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        ya = y[idx]
        yy = ya * (1.0 - ya)
        prop = ya + (-c * ya + s * yy) * dt + np.sqrt(d * yy) * sq * rng.standard_normal(idx.size)
        dead = prop <= 0.0
        np.minimum(prop, 1.0, out=prop)
        if bridge_correction and d > 0.0:
            # within-step dips to 0 kill the path too (same bridge estimate)
            live = ~dead
            if live.any():
                mid = 0.5 * (ya[live] + prop[live])
                sig2 = d * np.maximum(mid * (1.0 - mid), 1e-300)
                p_zero = np.exp(-2.0 * ya[live] * prop[live] / (sig2 * dt))
                dipped = rng.uniform(size=int(live.sum())) < p_zero
                dead[live] |= dipped
        for j, eta in enumerate(etas):
            hit = prop >= eta
            if bridge_correction and d > 0.0:
                below = ~hit & (ya < eta)
                if below.any():
                    mid = 0.5 * (ya[below] + np.maximum(prop[below], 0.0))
                    sig2 = d * np.maximum(mid * (1.0 - mid), 1e-300)
                    p_cross = np.exp(-2.0 * (eta - ya[below])
                                     * (eta - prop[below]) / (sig2 * dt))
                    hit[below] = rng.uniform(size=int(below.sum())) < p_cross
            crossed[j, idx] |= hit
        y[idx] = prop
        alive[idx[dead]] = False
    freqs = crossed.mean(axis=1)
    ses = np.sqrt(np.maximum(freqs * (1.0 - freqs), 1e-300) / n_paths)
    return {"etas": etas, "freq": freqs, "se": ses, "n_capped": int(alive.sum())}
