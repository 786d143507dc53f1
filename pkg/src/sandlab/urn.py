"""Complete-graph dynamics and their ball-color reformulation.

On the complete graph with self-loops, a toppling takes two particles off
an active site and drops each on an independently uniform site.  Heights
only matter through their parity for the stopping question: a landing
flips the parity of a uniform site, the toppled site's parity never
changes, and the state is stable exactly when the number of odd sites
equals the particle total m.  One toppling is therefore two moves of the
classic urn walk on n balls (flip the color of a uniform ball), started
from g_0 odd sites, absorbed when the green count hits m.  Since each
move drives the green fraction toward 1/2, runs with m/n < 1/2 stop after
order n log n moves and runs with m/n > 1/2 essentially never stop.

With one site declared a sink (landings there vanish, additions avoid
it), the urn walk loses its stopping rule and the driven stationary
odd-height fraction over the other sites is 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .engine import _kernel_seed
from .rng import derive_seed, stream
from .topology import Topology

_SAFETY_CAP = 2**62


def initial_green_fraction(rho: float) -> float:
    """P(Poisson(rho) is odd), the expected starting odd-site fraction."""
    return 0.5 * (1.0 - np.exp(-2.0 * rho))


# --- the urn walk ---


@dataclass
class UrnState:
    """n two-colored balls; green tracks odd-height sites."""

    colors: np.ndarray  # bool, True = green
    target: int  # absorb when green count equals this

    @property
    def n(self) -> int:
        return self.colors.shape[0]

    @property
    def green(self) -> int:
        return int(self.colors.sum())

    @property
    def stopped(self) -> bool:
        return self.green == self.target

    def move(self, ball: int) -> None:
        self.colors[ball] = ~self.colors[ball]


def urn_equivalence_check(n: int, rho: float, seed: int, *, max_topplings: int = 200_000) -> bool:
    """Couple a complete-graph run with the urn walk on shared draws.

    The two landing sites of each toppling are fed to the urn as two
    color flips; after every toppling the urn must reproduce the height
    parities, the green count, and the stopping state.  Returns False on
    the first discrepancy.
    """
    rng = stream(seed, 0xEC)
    heights = rng.poisson(rho, size=n).astype(np.int64)
    m = int(heights.sum())
    urn = UrnState((heights % 2).astype(bool), m)
    topplings = 0
    while topplings < max_topplings:
        active = np.flatnonzero(heights >= 2)
        stable = active.size == 0
        if stable != urn.stopped:
            return False
        if stable:
            return True
        x = int(active[rng.integers(0, active.size)])
        heights[x] -= 2
        for ball in rng.integers(0, n, size=2):
            heights[int(ball)] += 1
            urn.move(int(ball))
        topplings += 1
        if not np.array_equal(heights % 2 == 1, urn.colors):
            return False
    # ran out of budget without a discrepancy
    return True


# --- compiled complete-graph runs ---


@dataclass(frozen=True)
class KnRunResult:
    n: int
    m: int
    g0: int
    topplings: int
    stopped: bool
    g_series: np.ndarray
    record_stride: int

    @property
    def moves(self) -> int:
        return 2 * self.topplings


def simulate_kn_manna(
    n: int,
    rho: float,
    *,
    budget: int | None = None,
    seed: int = 0,
    record_stride: int = 0,
) -> KnRunResult:
    """Run the complete-graph model from Poisson(rho) heights until stable
    or until ``budget`` topplings; optionally record the odd-site count
    every record_stride topplings."""
    rng = stream(seed, 0xC0F1)
    heights = rng.poisson(rho, size=n).astype(np.int64)
    m = int(heights.sum())
    g0 = int((heights % 2).sum())
    cap = -1 if budget is None else int(budget)
    max_records = 0
    if record_stride > 0 and cap > 0:
        max_records = cap // record_stride + 1
    g_out = np.zeros(max_records, dtype=np.int64)
    odometer = np.zeros(n, dtype=np.int64)
    stable, topplings, _, recorded = _kernels.stabilize_complete(
        heights, odometer, cap, _kernel_seed(derive_seed(seed, 0xCA)), g_out, record_stride
    )
    return KnRunResult(
        n, m, g0, int(topplings), bool(stable), g_out[: int(recorded)], record_stride
    )


def stop_probability(
    n: int,
    rho: float,
    *,
    trials: int = 40,
    budget: int | None = None,
    seed: int = 0,
) -> float:
    """Fraction of runs that reach a stable state within the budget
    (default 20 n log n topplings, several times the subcritical
    crossing time)."""
    cap = int(20 * n * np.log(n + 1)) if budget is None else int(budget)
    stopped = 0
    for trial in range(trials):
        run = simulate_kn_manna(n, rho, budget=cap, seed=derive_seed(seed, 0x5F, trial))
        stopped += run.stopped
    return stopped / trials


def stopping_time_scaling(
    rho: float,
    ns,
    *,
    trials: int = 5,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean stopping moves across sizes and the log-log slope fit."""
    ns = np.asarray(list(ns), dtype=np.int64)
    means = np.empty(ns.shape[0], dtype=np.float64)
    for k, n in enumerate(ns):
        cap = int(40 * n * np.log(n + 1))
        samples = []
        for trial in range(trials):
            run = simulate_kn_manna(
                int(n), rho, budget=cap, seed=derive_seed(seed, 0x51, int(n), trial)
            )
            if not run.stopped:
                raise RuntimeError(f"run at n={n} did not stop within {cap} topplings")
            samples.append(run.moves)
        means[k] = float(np.mean(samples))
    slope = float(np.polyfit(np.log(ns.astype(float)), np.log(means), 1)[0])
    return ns, means, slope


# --- driven variant with a sink ---


@dataclass(frozen=True)
class SinkDensityEstimate:
    """Two views of the driven sink model's odd-height fraction.

    ``mean`` averages over urn moves (every parity flip).  In that frame
    the embedded chain is exactly the no-stopping urn walk on the n-1
    non-sink balls, so the stationary value is 1/2 at every n.
    ``snapshot_mean`` averages only over the stable states between
    additions; conditioning on stability (odd count equals particle
    total) biases it upward at finite n, e.g. 3/4 exactly at n = 2.
    """

    mean: float
    stderr: float
    per_trial: np.ndarray
    snapshot_mean: float
    snapshot_stderr: float
    snapshot_per_trial: np.ndarray
    n: int
    additions: int


def sink_stationary_density(
    n: int,
    additions: int,
    *,
    burn_in: int | None = None,
    trials: int = 4,
    seed: int = 0,
) -> SinkDensityEstimate:
    """Long-run odd-height fraction over the non-sink sites of the driven
    complete graph (site 0 swallows particles)."""
    if n < 2:
        raise ValueError("need at least one non-sink site")
    burn = additions // 4 if burn_in is None else int(burn_in)
    # in stationarity an addition causes n/2 topplings on average, so an
    # addition contributes n moves; recording a fixed move count keeps the
    # window end independent of the trajectory
    target_moves = n * additions
    max_additions = 10 * (burn + additions) + 1000
    per_trial = np.empty(trials, dtype=np.float64)
    snap_trial = np.empty(trials, dtype=np.float64)
    for trial in range(trials):
        heights = np.zeros(n, dtype=np.int64)
        if additions == 0:
            g0 = int((heights[1:] % 2).sum())
            per_trial[trial] = g0 / (n - 1)
            snap_trial[trial] = g0 / (n - 1)
            continue
        move_sum, moves, snap_sum, snapshots, aborted = _kernels.drive_complete_sink(
            heights,
            target_moves,
            burn,
            _kernel_seed(derive_seed(seed, 0x5E, n, trial)),
            _SAFETY_CAP,
            max_additions,
        )
        if aborted >= 0:
            raise RuntimeError(f"addition {aborted} failed to stabilize")
        if moves < target_moves:
            raise RuntimeError("addition allowance exhausted before the move target")
        per_trial[trial] = move_sum / (moves * (n - 1))
        snap_trial[trial] = snap_sum / (snapshots * (n - 1))

    def _spread(arr: np.ndarray) -> float:
        return float(arr.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0

    return SinkDensityEstimate(
        float(per_trial.mean()),
        _spread(per_trial),
        per_trial,
        float(snap_trial.mean()),
        _spread(snap_trial),
        snap_trial,
        n,
        additions,
    )


def sink_density_two_sites_exact() -> float:
    """n = 2 closed form for the snapshot frame: the non-sink site holds
    0 or 1 between additions; from 1 an addition triggers topplings that
    return to 1 with probability 2/3, so the stationary P(odd) solves
    p = (1-p) + p * 2/3.  (The move frame alternates 0,1,0,1,... and
    averages to exactly 1/2 instead.)"""
    return 0.75
