"""Fixed-energy (conservative) dynamics: no driving, no dissipation.

Start from i.i.d. Poisson(rho) heights on a cycle (or a window) and evolve
synchronously: every unstable site topples once per step.  The run either
stabilizes, falls into an exact periodic orbit (the dynamics are
deterministic for quenched labels), or exhausts its step budget.  Annealed
runs are stochastic, so exact recurrence is not meaningful; persistent
activity there is summarized over a trailing window and flagged as
quasi-stationary.

For the classical (all-s) cycle the orbit class is a function of the
particle total alone away from two boundary totals: below the site count
the run stabilizes, between the site count and twice the site count it
ends in a period-2 orbit, and above twice the site count every site is
eventually unstable (activity 1).  At exactly those two totals both
outcomes occur, depending on the configuration.

Activity is the fraction of unstable sites; for a periodic orbit it is
averaged over one exact period, which for period 2 comes out near 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .engine import _kernel_seed, _step_arrays, default_budget
from .lattice import EnvironmentSpec, HeightConfig, sample_environment
from .rng import derive_seed, stream
from .topology import COMPLETE, Topology

STABILIZED = "stabilized"
PERIODIC = "periodic"
BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class OrbitResult:
    outcome: str
    steps: int
    period: int | None
    entry_time: int | None
    mean_activity: float
    toppling_total: int
    quasi_stationary: bool = False


def run_until_periodic(
    config: HeightConfig,
    env=None,
    *,
    seed: int | None = None,
    budget_steps: int = 100_000,
    window: int = 256,
) -> OrbitResult:
    """Evolve synchronously until stable or exactly periodic.

    Quenched runs detect cycles by comparing the full state against an
    anchor that is re-pinned at power-of-two times, so a cycle of period p
    entered at time mu is found within O(mu + p) steps; the reported
    period is exact (states compare equal), the entry time is recovered by
    a second pass, and the activity is averaged over one full period.
    Annealed runs (``seed``) stop only on stabilization or budget, with
    activity averaged over the last ``window`` steps.
    """
    topology = config.topology
    if topology.kind == COMPLETE:
        raise ValueError("synchronous orbits run on 1D topologies")
    annealed = seed is not None
    if annealed and env is not None:
        raise ValueError("pass either a quenched environment or a seed, not both")
    labels = env.labels if env is not None else None
    rng = stream(seed, 0xFE) if annealed else None
    wrapped = topology.wrapped
    m = topology.num_sites

    h = config.heights.copy()
    h.setflags(write=True)
    initial = h.copy()
    toppling_total = 0
    recent = np.zeros(max(1, window), dtype=np.float64)

    anchor = h.copy()
    anchor_t = 0
    power = 1

    t = 0
    while t < budget_steps:
        unstable = int(np.count_nonzero(h >= 2))
        if unstable == 0:
            return OrbitResult(STABILIZED, t, None, None, 0.0, toppling_total)
        if not annealed and t > anchor_t and np.array_equal(h, anchor):
            period = t - anchor_t
            mean_act = _period_activity(h, labels, wrapped, period)
            entry = _entry_time(initial, labels, wrapped, period, budget_steps)
            return OrbitResult(PERIODIC, t, period, entry, mean_act, toppling_total)
        if not annealed and t - anchor_t == power:
            anchor = h.copy()
            anchor_t = t
            power *= 2
        recent[t % recent.shape[0]] = unstable / m
        toppling_total += unstable
        h = _step_arrays(h, labels, wrapped, rng=rng)
        t += 1
    lookback = min(t, recent.shape[0])
    mean_act = float(recent[:lookback].mean()) if lookback else 0.0
    return OrbitResult(BUDGET_EXCEEDED, t, None, None, mean_act, toppling_total, annealed)


def _period_activity(h: np.ndarray, labels, wrapped: bool, period: int) -> float:
    total = 0
    cur = h.copy()
    for _ in range(period):
        total += int(np.count_nonzero(cur >= 2))
        cur = _step_arrays(cur, labels, wrapped)
    return total / (period * h.shape[0])


def _entry_time(initial: np.ndarray, labels, wrapped: bool, period: int, cap: int) -> int:
    hare = initial.copy()
    for _ in range(period):
        hare = _step_arrays(hare, labels, wrapped)
    tortoise = initial.copy()
    entry = 0
    while not np.array_equal(tortoise, hare):
        tortoise = _step_arrays(tortoise, labels, wrapped)
        hare = _step_arrays(hare, labels, wrapped)
        entry += 1
        if entry > cap:
            raise RuntimeError("entry-time recovery exceeded the step budget")
    return entry


def classify_cycle_total(total: int, num_sites: int) -> str | None:
    """Expected orbit class for the classical cycle by particle total;
    None at the two ambiguous totals."""
    if total < num_sites:
        return STABILIZED
    if total == num_sites or total == 2 * num_sites:
        return None
    if total < 2 * num_sites:
        return PERIODIC
    return "all_unstable"


# --- activity staircase ---


@dataclass(frozen=True)
class StaircasePoint:
    rho: float
    activity: float
    stderr: float
    censored_fraction: float
    per_trial: np.ndarray
    n: int
    trials: int


def _orbit_activity(result: OrbitResult) -> float:
    if result.outcome == STABILIZED:
        return 0.0
    return result.mean_activity


def activity_density(
    spec: EnvironmentSpec,
    rho: float,
    n: int,
    *,
    trials: int = 10,
    budget_steps: int = 100_000,
    seed: int = 0,
    topology_kind: str = "cycle",
) -> StaircasePoint:
    """Mean orbit activity over independent Poisson(rho) starts.

    Quenched budget-exceeded runs are counted in censored_fraction (their
    trailing-window activity still enters the mean); for annealed runs a
    budget-exceeded orbit is the expected supercritical behaviour and is
    likewise counted as censored.
    """
    topology = Topology.cycle(n) if topology_kind == "cycle" else Topology.interval(n)
    per_trial = np.empty(trials, dtype=np.float64)
    censored = 0
    for trial in range(trials):
        config_seed = derive_seed(seed, 0x57A, trial)
        config = _poisson_config(topology, rho, config_seed)
        if spec.quenched:
            env = sample_environment(topology, spec, derive_seed(seed, 0xE4, trial))
            result = run_until_periodic(config, env, budget_steps=budget_steps)
        else:
            result = run_until_periodic(
                config, seed=derive_seed(seed, 0xA4, trial), budget_steps=budget_steps
            )
        per_trial[trial] = _orbit_activity(result)
        if result.outcome == BUDGET_EXCEEDED:
            censored += 1
    mean = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return StaircasePoint(rho, mean, stderr, censored / trials, per_trial, n, trials)


def staircase_sweep(
    spec: EnvironmentSpec,
    rho_grid,
    n: int,
    *,
    trials: int = 10,
    budget_steps: int = 100_000,
    seed: int = 0,
    topology_kind: str = "cycle",
) -> list[StaircasePoint]:
    points = []
    for k, rho in enumerate(rho_grid):
        points.append(
            activity_density(
                spec,
                float(rho),
                n,
                trials=trials,
                budget_steps=budget_steps,
                seed=derive_seed(seed, 0x5CA1, k),
                topology_kind=topology_kind,
            )
        )
    return points


def _poisson_config(topology: Topology, rho: float, seed: int) -> HeightConfig:
    rng = stream(seed, 0xC0F1)
    return HeightConfig(topology, rng.poisson(rho, size=topology.num_sites).astype(np.int64))


# --- stabilizability threshold ---


@dataclass(frozen=True)
class ThresholdProbe:
    rho: float
    successes: int
    trials: int
    wilson_low: float
    wilson_high: float

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @property
    def ambiguous(self) -> bool:
        return self.wilson_low < 0.5 < self.wilson_high


@dataclass(frozen=True)
class ThresholdEstimate:
    value: float
    low: float
    high: float
    probes: tuple[ThresholdProbe, ...]


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def stabilization_probability(
    spec: EnvironmentSpec,
    rho: float,
    n: int,
    *,
    trials: int,
    budget: int | None = None,
    seed: int = 0,
    topology_kind: str = "cycle",
) -> ThresholdProbe:
    """Fraction of Poisson(rho) starts that sequentially stabilize within
    the toppling budget."""
    topology = Topology.cycle(n) if topology_kind == "cycle" else Topology.interval(n)
    cap = default_budget(topology.num_sites) if budget is None else int(budget)
    wins = 0
    for trial in range(trials):
        config = _poisson_config(topology, rho, derive_seed(seed, 0x57A, trial))
        heights = config.heights.copy()
        heights.setflags(write=True)
        odometer = np.zeros(topology.num_sites, dtype=np.int64)
        if spec.quenched:
            env = sample_environment(topology, spec, derive_seed(seed, 0xE4, trial))
            stable, _, _, _ = _kernels.stabilize_1d_quenched(
                heights, odometer, env.labels, topology.wrapped, cap
            )
        else:
            stable, _, _, _ = _kernels.stabilize_1d_annealed(
                heights,
                odometer,
                topology.wrapped,
                cap,
                _kernel_seed(derive_seed(seed, 0xA4, trial)),
            )
        wins += bool(stable)
    lo, hi = wilson_interval(wins, trials)
    return ThresholdProbe(rho, wins, trials, lo, hi)


def threshold_density(
    spec: EnvironmentSpec,
    n: int,
    *,
    bracket: tuple[float, float] = (0.05, 1.5),
    rho_tol: float = 0.01,
    trials_per_probe: int = 40,
    budget: int | None = None,
    seed: int = 0,
    topology_kind: str = "cycle",
) -> ThresholdEstimate:
    """Bisect for the density where the stabilization probability crosses
    1/2.

    Probes whose Wilson interval straddles 1/2 still steer the bisection
    by point estimate but are recorded as ambiguous in the probe table.
    The bracket must actually straddle the crossing (checked with the two
    endpoint probes).
    """
    lo, hi = bracket
    if not 0 <= lo < hi:
        raise ValueError(f"bad bracket {bracket}")
    probes: list[ThresholdProbe] = []

    def probe(rho: float, tag: int) -> ThresholdProbe:
        p = stabilization_probability(
            spec,
            rho,
            n,
            trials=trials_per_probe,
            budget=budget,
            seed=derive_seed(seed, 0x7B, tag),
            topology_kind=topology_kind,
        )
        probes.append(p)
        return p

    p_lo = probe(lo, 0)
    p_hi = probe(hi, 1)
    if p_lo.p_hat < 0.5 or p_hi.p_hat >= 0.5:
        raise ValueError(
            f"bracket does not straddle the threshold: "
            f"p({lo})={p_lo.p_hat:.2f}, p({hi})={p_hi.p_hat:.2f}"
        )
    tag = 2
    while hi - lo > rho_tol:
        mid = 0.5 * (lo + hi)
        p_mid = probe(mid, tag)
        tag += 1
        if p_mid.p_hat >= 0.5:
            lo = mid
        else:
            hi = mid
    return ThresholdEstimate(0.5 * (lo + hi), lo, hi, tuple(probes))


# --- toppling cost profiles ---


@dataclass(frozen=True)
class TopplingProfileRow:
    rho: float
    n: int
    trials: int
    mean_topplings: float
    max_topplings: int
    censored_fraction: float


def toppling_count_profile(
    spec: EnvironmentSpec,
    rhos,
    ns,
    *,
    trials: int = 20,
    budget: int | None = None,
    seed: int = 0,
    topology_kind: str = "cycle",
) -> list[TopplingProfileRow]:
    """Total sequential-stabilization topplings per start, censored at the
    budget (censored runs count the budget itself, a lower bound)."""
    rows = []
    for rho in rhos:
        for n in ns:
            topology = Topology.cycle(n) if topology_kind == "cycle" else Topology.interval(n)
            cap = default_budget(topology.num_sites) if budget is None else int(budget)
            counts = np.empty(trials, dtype=np.int64)
            censored = 0
            for trial in range(trials):
                config = _poisson_config(
                    topology, float(rho), derive_seed(seed, 0x57A, int(n), trial)
                )
                heights = config.heights.copy()
                heights.setflags(write=True)
                odometer = np.zeros(topology.num_sites, dtype=np.int64)
                if spec.quenched:
                    env = sample_environment(
                        topology, spec, derive_seed(seed, 0xE4, int(n), trial)
                    )
                    stable, topplings, _, _ = _kernels.stabilize_1d_quenched(
                        heights, odometer, env.labels, topology.wrapped, cap
                    )
                else:
                    stable, topplings, _, _ = _kernels.stabilize_1d_annealed(
                        heights,
                        odometer,
                        topology.wrapped,
                        cap,
                        _kernel_seed(derive_seed(seed, 0xA4, int(n), trial)),
                    )
                counts[trial] = topplings
                censored += not stable
            rows.append(
                TopplingProfileRow(
                    float(rho),
                    int(n),
                    trials,
                    float(counts.mean()),
                    int(counts.max()),
                    censored / trials,
                )
            )
    return rows
