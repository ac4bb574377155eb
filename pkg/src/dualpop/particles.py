"""Logistic branching random walks: finite lattice and unbounded-space limit.

Finite model on sites {1..N}: per particle, birth at rate s (same site),
death at rate d(k-1) when its site holds k particles, migration at rate c to
a uniformly random site (possibly its own, a null move).  Total site rates are
therefore s*k, d*k*(k-1) and c*k.

Limit model on unbounded space: birth and death as above; a particle emigrates
at rate c to the lowest-index empty site only while its site holds at least
two particles (a lone particle relocating is a relabelling null event), and
every tracked site receives immigrants at rate c*iota.  iota = 0 gives the
collision-free process whose occupied sites never empty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParticleParams",
    "OccupancyState",
    "EventRecord",
    "SizeDistribution",
    "EquilibriumTailError",
    "FixedPointResult",
    "step_eta_finite",
    "step_eta_limit",
    "FiniteRun",
    "CollisionFreeRun",
    "simulate_collision_free",
    "simulate_single_site_internal",
    "single_site_equilibrium",
    "equilibrium_mean",
    "default_k_max",
    "self_consistent_intensity",
    "intensity_trajectory",
]

EVENT_KINDS = ("birth", "death", "migrate", "emigrate", "immigrate", "extinct")


@dataclass(frozen=True)
class ParticleParams:
    """Rates plus the choice of geography.

    Exactly one of the two geographies is selected: a finite lattice
    (``N`` given, ``iota`` must be 0) or the unbounded limit model
    (``N`` is None, ``iota`` >= 0 is the immigration intensity).
    """

    c: float
    s: float
    d: float
    N: int | None = None
    iota: float = 0.0

    def __post_init__(self) -> None:
        for name in ("c", "s", "d", "iota"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.N is not None:
            if self.N < 1:
                raise ValueError(f"N must be >= 1, got {self.N}")
            if self.iota != 0.0:
                raise ValueError("immigration intensity applies to the limit model only")

    @property
    def finite(self) -> bool:
        return self.N is not None


@dataclass
class OccupancyState:
    """Occupied-site counts at time t; zero-count sites are not stored."""

    counts: dict[int, int]
    t: float = 0.0

    def __post_init__(self) -> None:
        if any(k <= 0 for k in self.counts.values()):
            raise ValueError("occupancy counts must be positive")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def occupied(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class EventRecord:
    t: float
    site: int
    kind: str
    dest: int | None = None


def _site_rates(k: int, params: ParticleParams, finite: bool) -> tuple[float, float, float]:
    """(birth, death, move) rates of one site holding k particles."""
    birth = params.s * k
    death = params.d * k * (k - 1)
    if finite:
        move = params.c * k
    else:
        move = params.c * k if k >= 2 else 0.0
    return birth, death, move


def step_eta_finite(state: OccupancyState, params: ParticleParams,
                    rng: np.random.Generator) -> tuple[OccupancyState, EventRecord]:
    """One exact next-event step of the finite-lattice chain.

    An empty state is absorbing (total rate 0) and is signalled by an
    ``extinct`` event with unchanged state.
    """
    if not params.finite:
        raise ValueError("step_eta_finite requires finite-lattice params")
    counts = dict(state.counts)
    if not counts:
        return state, EventRecord(t=state.t, site=0, kind="extinct")

    sites = list(counts)
    rates = []
    for i in sites:
        b, dth, mv = _site_rates(counts[i], params, finite=True)
        rates.append(b + dth + mv)
    total_rate = float(sum(rates))
    wait = rng.exponential(1.0 / total_rate)
    t = state.t + wait

    u = rng.uniform(0.0, total_rate)
    acc = 0.0
    site = sites[-1]
    for i, r in zip(sites, rates):
        acc += r
        if u < acc:
            site = i
            break
    b, dth, mv = _site_rates(counts[site], params, finite=True)
    v = rng.uniform(0.0, b + dth + mv)
    if v < b:
        counts[site] += 1
        event = EventRecord(t=t, site=site, kind="birth")
    elif v < b + dth:
        counts[site] -= 1
        if counts[site] == 0:
            del counts[site]
        event = EventRecord(t=t, site=site, kind="death")
    else:
        dest = int(rng.integers(1, params.N + 1))
        counts[site] -= 1
        if counts[site] == 0:
            del counts[site]
        counts[dest] = counts.get(dest, 0) + 1
        event = EventRecord(t=t, site=site, kind="migrate", dest=dest)
    return OccupancyState(counts=counts, t=t), event


def step_eta_limit(state: OccupancyState, params: ParticleParams,
                   rng: np.random.Generator,
                   n_tracked: int | None = None) -> tuple[OccupancyState, EventRecord]:
    """One exact next-event step of the unbounded-space chain.

    With iota > 0, ``n_tracked`` fixes the window of sites receiving
    immigration (defaults to the currently occupied sites plus the lowest
    empty one).  Emigrants occupy the lowest-index empty site.
    """
    if params.finite:
        raise ValueError("step_eta_limit requires limit-model params")
    counts = dict(state.counts)
    lowest_empty = _lowest_empty(counts)

    if params.iota > 0.0:
        tracked = n_tracked if n_tracked is not None else max(counts, default=0) + 1
    else:
        tracked = 0
    immig_rate = params.c * params.iota * tracked

    site_rate = {}
    for i, k in counts.items():
        b, dth, mv = _site_rates(k, params, finite=False)
        site_rate[i] = b + dth + mv
    total_rate = sum(site_rate.values()) + immig_rate
    if total_rate == 0.0:
        return state, EventRecord(t=state.t, site=0, kind="extinct")
    wait = rng.exponential(1.0 / total_rate)
    t = state.t + wait

    u = rng.uniform(0.0, total_rate)
    if u < immig_rate:
        dest = int(rng.integers(1, tracked + 1))
        counts[dest] = counts.get(dest, 0) + 1
        return OccupancyState(counts=counts, t=t), EventRecord(t=t, site=dest, kind="immigrate")

    u -= immig_rate
    acc = 0.0
    site = next(iter(site_rate))
    for i, r in site_rate.items():
        acc += r
        if u < acc:
            site = i
            break
    b, dth, mv = _site_rates(counts[site], params, finite=False)
    v = rng.uniform(0.0, b + dth + mv)
    if v < b:
        counts[site] += 1
        event = EventRecord(t=t, site=site, kind="birth")
    elif v < b + dth:
        counts[site] -= 1
        event = EventRecord(t=t, site=site, kind="death")
    else:
        counts[site] -= 1
        counts[lowest_empty] = 1
        event = EventRecord(t=t, site=site, kind="emigrate", dest=lowest_empty)
    return OccupancyState(counts=counts, t=t), event


def _lowest_empty(counts: dict[int, int]) -> int:
    i = 1
    while i in counts:
        i += 1
    return i


class FiniteRun:
    """Array-backed exact simulation of the finite-lattice chain.

    Keeps the running time integral of the total particle count, which is
    exact for the piecewise-constant count.
    """

    def __init__(self, params: ParticleParams, rng: np.random.Generator,
                 init: dict[int, int] | None = None):
        if not params.finite:
            raise ValueError("FiniteRun requires finite-lattice params")
        self.params = params
        self.rng = rng
        self.k = np.zeros(params.N, dtype=np.int64)
        for site, cnt in (init or {1: 1}).items():
            self.k[site - 1] = cnt
        self.t = 0.0
        self.total = int(self.k.sum())
        self.occupation_integral = 0.0

    @property
    def extinct(self) -> bool:
        return self.total == 0

    def state(self) -> OccupancyState:
        occ = np.flatnonzero(self.k)
        return OccupancyState(counts={int(i + 1): int(self.k[i]) for i in occ}, t=self.t)

    def step(self) -> EventRecord:
        p = self.params
        k = self.k
        site_rates = (p.s + p.c) * k + p.d * k * (k - 1)
        total_rate = float(site_rates.sum())
        if total_rate == 0.0:
            return EventRecord(t=self.t, site=0, kind="extinct")
        wait = self.rng.exponential(1.0 / total_rate)
        self.occupation_integral += self.total * wait
        self.t += wait

        cum = np.cumsum(site_rates)
        i = int(np.searchsorted(cum, self.rng.uniform(0.0, total_rate), side="right"))
        ki = int(k[i])
        b, dth, mv = p.s * ki, p.d * ki * (ki - 1), p.c * ki
        v = self.rng.uniform(0.0, b + dth + mv)
        if v < b:
            k[i] += 1
            self.total += 1
            return EventRecord(t=self.t, site=i + 1, kind="birth")
        if v < b + dth:
            k[i] -= 1
            self.total -= 1
            return EventRecord(t=self.t, site=i + 1, kind="death")
        j = int(self.rng.integers(0, p.N))
        k[i] -= 1
        k[j] += 1
        return EventRecord(t=self.t, site=i + 1, kind="migrate", dest=j + 1)

    def run_until(self, t_end: float) -> None:
        """Advance to t_end exactly (freezes the clock at the horizon)."""
        p = self.params
        while True:
            k = self.k
            site_rates = (p.s + p.c) * k + p.d * k * (k - 1)
            total_rate = float(site_rates.sum())
            if total_rate == 0.0:
                break
            wait = self.rng.exponential(1.0 / total_rate)
            if self.t + wait >= t_end:
                break
            self.occupation_integral += self.total * wait
            self.t += wait
            cum = np.cumsum(site_rates)
            i = int(np.searchsorted(cum, self.rng.uniform(0.0, total_rate), side="right"))
            ki = int(k[i])
            b, dth, mv = p.s * ki, p.d * ki * (ki - 1), p.c * ki
            v = self.rng.uniform(0.0, b + dth + mv)
            if v < b:
                k[i] += 1
                self.total += 1
            elif v < b + dth:
                k[i] -= 1
                self.total -= 1
            else:
                j = int(self.rng.integers(0, p.N))
                k[i] -= 1
                k[j] += 1
        self.occupation_integral += self.total * (t_end - self.t)
        self.t = t_end

    def sample_totals(self, t_grid: np.ndarray) -> np.ndarray:
        """Total count observed at each grid time (grid must be ascending)."""
        out = np.zeros(len(t_grid), dtype=np.int64)
        for idx, t_end in enumerate(t_grid):
            if t_end > self.t:
                self.run_until(float(t_end))
            out[idx] = self.total
        return out


_KIND_CODE = {"birth": 0, "death": 1, "emigrate": 2, "immigrate": 3}


@dataclass
class CollisionFreeRun:
    """Trajectory of the collision-free chain with its full event log.

    Sites are contiguous 1..n_sites (occupied sites never empty), so the
    free-site heap never holds anything in this regime; ages are measured
    from ``first_occupied``.
    """

    params: ParticleParams
    horizon: float
    times: np.ndarray          # event times
    sites: np.ndarray          # event site (1-based)
    kinds: np.ndarray          # coded via _KIND_CODE
    dests: np.ndarray          # destination site for emigrations, else 0
    counts: np.ndarray         # final per-site counts, index = site-1
    first_occupied: np.ndarray  # per-site first-occupation time
    k_times: np.ndarray        # times at which the occupied count jumped
    k_values: np.ndarray       # occupied count after each jump
    _init_total: int = 1
    _init_size: int = 1
    _init_sites: list = field(default_factory=list)

    @property
    def n_sites(self) -> int:
        return len(self.counts)

    def occupied_at(self, t: float) -> int:
        idx = np.searchsorted(self.k_times, t, side="right") - 1
        return int(self.k_values[idx]) if idx >= 0 else 0

    def totals_at(self, t_grid: np.ndarray) -> np.ndarray:
        """Total particle count at each grid time, replayed from the log."""
        deltas = np.where(self.kinds == _KIND_CODE["death"], -1,
                          np.where(self.kinds == _KIND_CODE["birth"], 1,
                                   np.where(self.kinds == _KIND_CODE["immigrate"], 1, 0)))
        idx = np.searchsorted(self.times, t_grid, side="right")
        cum = np.concatenate([[0], np.cumsum(deltas)])
        return self._init_total + cum[idx]

    def site_table_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(ages, sizes) of the sites occupied at time t, replayed from the log."""
        n = self.n_sites
        sizes = np.zeros(n + 1, dtype=np.int64)
        first = np.full(n + 1, np.nan)
        for site, t0 in self._init_sites:
            sizes[site] = self._init_size
            first[site] = t0
        upto = np.searchsorted(self.times, t, side="right")
        for e in range(upto):
            site = self.sites[e]
            kind = self.kinds[e]
            if kind == 0 or kind == 3:
                sizes[site] += 1
                if sizes[site] == 1:
                    first[site] = self.times[e]
            elif kind == 1:
                sizes[site] -= 1
            else:
                sizes[site] -= 1
                dest = self.dests[e]
                sizes[dest] += 1
                first[dest] = self.times[e]
        occ = np.flatnonzero(sizes > 0)
        return t - first[occ], sizes[occ]


def simulate_collision_free(
    params: ParticleParams,
    horizon: float,
    rng: np.random.Generator,
    n_init_sites: int = 1,
    particles_per_site: int = 1,
    max_events: int = 10 ** 7,
) -> CollisionFreeRun:
    """Exact simulation of the collision-free chain (iota = 0) to `horizon`.

    Starts with ``particles_per_site`` particles at each of sites
    1..n_init_sites.  Site rates live in a growing array so event selection
    is a cumulative-sum search; the total rate is refreshed from the array
    on every step (one vectorized sum), keeping the clock exact.
    """
    if params.finite or params.iota != 0.0:
        raise ValueError("collision-free simulation requires limit params with iota = 0")
    c, s, d = params.c, params.s, params.d

    def site_rate(k: int) -> float:
        return s * k + d * k * (k - 1) + (c * k if k >= 2 else 0.0)

    cap = max(4 * n_init_sites, 64)
    counts = np.zeros(cap, dtype=np.int64)
    rates = np.zeros(cap)
    counts[:n_init_sites] = particles_per_site
    rates[:n_init_sites] = site_rate(particles_per_site)
    first = [0.0] * n_init_sites
    n_sites = n_init_sites

    t = 0.0
    times, sites, kinds, dests = [], [], [], []
    k_times, k_values = [0.0], [n_init_sites]
    for _ in range(max_events):
        cum = np.cumsum(rates[:n_sites])
        total_rate = float(cum[-1])
        if total_rate <= 0.0:
            break
        wait = rng.exponential(1.0 / total_rate)
        if t + wait >= horizon:
            break
        t += wait
        i = int(np.searchsorted(cum, rng.uniform(0.0, total_rate), side="right"))
        k = int(counts[i])
        b, dth = s * k, d * k * (k - 1)
        mv = c * k if k >= 2 else 0.0
        v = rng.uniform(0.0, b + dth + mv)
        if v < b:
            counts[i] = k + 1
            kind = 0
        elif v < b + dth:
            counts[i] = k - 1
            kind = 1
        else:
            counts[i] = k - 1
            if n_sites == cap:
                cap *= 2
                counts = np.concatenate([counts, np.zeros(cap - n_sites, dtype=np.int64)])
                rates = np.concatenate([rates, np.zeros(cap - n_sites)])
            counts[n_sites] = 1
            rates[n_sites] = site_rate(1)
            n_sites += 1
            first.append(t)
            k_times.append(t)
            k_values.append(n_sites)
            dests.append(n_sites)
            kind = 2
        rates[i] = site_rate(int(counts[i]))
        times.append(t)
        sites.append(i + 1)
        kinds.append(kind)
        if kind != 2:
            dests.append(0)
    counts = list(counts[:n_sites])

    run = CollisionFreeRun(
        params=params,
        horizon=horizon,
        times=np.array(times),
        sites=np.array(sites, dtype=np.int64),
        kinds=np.array(kinds, dtype=np.int64),
        dests=np.array(dests, dtype=np.int64),
        counts=np.array(counts, dtype=np.int64),
        first_occupied=np.array(first),
        k_times=np.array(k_times),
        k_values=np.array(k_values, dtype=np.int64),
    )
    run._init_total = n_init_sites * particles_per_site
    run._init_sites = [(i + 1, 0.0) for i in range(n_init_sites)]
    run._init_size = particles_per_site
    return run


def simulate_single_site_internal(
    params: ParticleParams,
    sample_times: np.ndarray,
    rng: np.random.Generator,
    k0: int = 1,
) -> np.ndarray:
    """Internal occupation chain of one site, emigrants counted and discarded.

    Transitions: k -> k+1 at rate s*k, k -> k-1 at rate d*k*(k-1) plus
    c*k when k >= 2 (the emigrant leaves the site).  Returns the state
    observed at each of ``sample_times``.
    """
    c, s, d = params.c, params.s, params.d
    out = np.zeros(len(sample_times), dtype=np.int64)
    k = k0
    t = 0.0
    idx = 0
    horizon = float(sample_times[-1])
    while idx < len(sample_times):
        up = s * k
        down = d * k * (k - 1) + (c * k if k >= 2 else 0.0)
        rate = up + down
        if rate == 0.0:
            wait = math.inf
        else:
            wait = rng.exponential(1.0 / rate)
        t_next = t + wait
        while idx < len(sample_times) and sample_times[idx] < t_next:
            out[idx] = k
            idx += 1
        if t_next > horizon:
            break
        t = t_next
        if rng.uniform(0.0, rate) < up:
            k += 1
        else:
            k -= 1
    return out


@dataclass(frozen=True)
class SizeDistribution:
    """Probabilities over occupation sizes k = 0..K_max."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0.0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")

    @property
    def k_max(self) -> int:
        return len(self.probs) - 1

    def mean(self) -> float:
        return float(np.arange(len(self.probs)) @ self.probs)


class EquilibriumTailError(ValueError):
    """Truncation K_max too small: tail mass above threshold."""


def default_k_max(c: float, s: float, d: float, iota: float) -> int:
    """Truncation heuristic; the quadratic death makes tails super-geometric."""
    if d <= 0:
        return 64
    return int(math.ceil(4.0 * (s / d + c * iota / d + 10.0)))


def single_site_equilibrium(
    c: float, s: float, d: float, iota: float,
    k_max: int | None = None,
    tail_tol: float = 1e-10,
) -> SizeDistribution:
    """Stationary law of the single-site chain under immigration c*iota.

    Up-rate s*k + c*iota, down-rate d*k*(k-1) + c*k*1{k>=2}.  For iota > 0
    state 0 has no return flow (a lone particle neither dies nor emigrates),
    so the equilibrium charges {1, 2, ...}; computed by the detailed-balance
    product formula anchored at k = 1 and truncated at ``k_max``.
    """
    if iota < 0:
        raise ValueError(f"iota must be >= 0, got {iota}")
    if iota == 0.0:
        return SizeDistribution(probs=np.array([1.0]))
    if d <= 0.0:
        raise ValueError("equilibrium requires d > 0 when iota > 0")
    if k_max is None:
        k_max = default_k_max(c, s, d, iota)

    weights = np.zeros(k_max + 1)
    weights[1] = 1.0
    for k in range(1, k_max):
        up = s * k + c * iota
        down = d * (k + 1) * k + c * (k + 1)
        weights[k + 1] = weights[k] * up / down
    total = weights.sum()
    # Geometric bound on the discarded tail from the last rate ratio.
    up_last = s * k_max + c * iota
    down_next = d * (k_max + 1) * k_max + c * (k_max + 1)
    r = up_last / down_next
    tail = weights[k_max] * r / (1.0 - r) if r < 1.0 else math.inf
    tail_frac = tail / (total + tail) if math.isfinite(tail) else 1.0
    if tail_frac > tail_tol:
        raise EquilibriumTailError(
            f"tail mass {tail_frac:.3e} above {tail_tol:.1e}; increase k_max={k_max}"
        )
    return SizeDistribution(probs=weights / total)


def equilibrium_mean(c: float, s: float, d: float, iota: float,
                     k_max: int | None = None) -> float:
    return single_site_equilibrium(c, s, d, iota, k_max=k_max).mean()


@dataclass
class FixedPointResult:
    iota_star: float
    trivial_fixed_point: float
    converged: bool
    iterations: int
    residual: float
    history: list[float]


def self_consistent_intensity(
    c: float, s: float, d: float,
    tol: float = 1e-10,
    k_max: int | None = None,
    damping: float = 0.5,
    max_iter: int = 500,
) -> FixedPointResult:
    """Fixed point of iota -> mean of the single-site equilibrium.

    Damped iteration from iota_0 = s/d (the carrying-capacity scale); the
    trivial fixed point 0 is reported alongside.  Non-convergence returns the
    oscillation history with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if d <= 0:
        raise ValueError("self-consistency requires d > 0")
    iota = s / d
    history = [iota]
    for it in range(1, max_iter + 1):
        km = k_max if k_max is not None else default_k_max(c, s, d, iota)
        target = equilibrium_mean(c, s, d, iota, k_max=km)
        new = (1.0 - damping) * iota + damping * target
        history.append(new)
        if abs(new - iota) < tol:
            return FixedPointResult(iota_star=new, trivial_fixed_point=0.0,
                                    converged=True, iterations=it,
                                    residual=abs(target - new), history=history)
        iota = new
    return FixedPointResult(iota_star=iota, trivial_fixed_point=0.0,
                            converged=False, iterations=max_iter,
                            residual=abs(history[-1] - history[-2]), history=history)


def intensity_trajectory(
    params: ParticleParams,
    t_grid: np.ndarray,
    replicas: int,
    rng_for_replica,
) -> np.ndarray:
    """Per-replica normalized total count N^-1 * total at the grid times.

    Starts each replica from one particle at site 1.  ``rng_for_replica``
    maps a replica index to its independent generator.
    """
    if not params.finite:
        raise ValueError("intensity trajectories are defined for the finite model")
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.zeros((replicas, len(t_grid)))
    for r in range(replicas):
        run = FiniteRun(params, rng_for_replica(r), init={1: 1})
        out[r] = run.sample_totals(t_grid) / params.N
    return out
