"""Finite-window proxies for dynamics on the infinite lattice.

Two themes live here.  First, synchronous classical dynamics on a large
window (periodic by default, so no mass leaks) tracking the active-site
fraction alpha(t): below density 1 it dies, above 2 it saturates at 1, and
between the two the time average tends to 1/2 while defect patterns
(01, 10, 111 and their mirror images 23, 32, 222) thin out over time.

Second, the parity bookkeeping for restricted directed environments.
Writing eta'(x) for the parity of the height, E(x) = (eta(x) - eta'(x))/2
counts the excess pairs at x, and an s-site whose two neighbors both have
even height is a hole: stabilizing the triple around it absorbs exactly
one excess pair.  The walk

    S(x) = S(x-1) + E(x) - h(x)

has drift E[E] - P(hole); when the drift is negative, excess pairs are
absorbed before they can cross the walk's strictly-descending record
points ("extremal points") and the configuration stabilizes; positive
drift means pairs outrun the holes and per-site toppling counts diverge.
``predict_stabilizable`` reads the drift off a sampled configuration and
``stabilizability_oracle`` checks it against budgeted stabilization with
doubling budgets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .engine import _kernel_seed, _step_arrays, stabilize
from .lattice import (
    LABEL_R,
    LABEL_S,
    EnvironmentSpec,
    HeightConfig,
    TopplingEnvironment,
    sample_environment,
)
from .rng import derive_seed, stream
from .topology import Topology

MIRROR_MAX_HEIGHT = 3

# defect patterns whose density decays in the intermediate phase
DECAYING_PATTERNS = ("01", "10", "111")
MIRROR_PATTERNS = ("23", "32", "222")


# --- synchronous window runs ---


@dataclass(frozen=True)
class WindowResult:
    rho: float
    n: int
    boundary: str
    alpha: np.ndarray
    stabilized_at: int | None
    final: HeightConfig
    pattern_rows: tuple[tuple[int, dict[str, float]], ...]

    def time_average(self, skip: int = 0) -> float:
        if self.alpha.shape[0] <= skip:
            return 0.0
        return float(self.alpha[skip:].mean())

    def late_pattern_density(self, pattern: str) -> float:
        if not self.pattern_rows:
            raise ValueError("run recorded no pattern rows")
        return self.pattern_rows[-1][1][pattern]


def window_run(
    spec: EnvironmentSpec,
    rho: float,
    n: int,
    t_max: int,
    *,
    boundary: str = "periodic",
    seed: int = 0,
    pattern_stride: int = 0,
    patterns: tuple[str, ...] = DECAYING_PATTERNS,
    pattern_margin: int = 0,
) -> WindowResult:
    """Run t_max synchronous steps on the window [-n, n] from Poisson(rho).

    alpha[t] is the unstable-site fraction of the state at time t.  The
    run stops early once stable.  With pattern_stride > 0 the densities of
    ``patterns`` are recorded every stride steps (and at the final step).
    """
    topology = Topology.window(2 * n, boundary)
    m = topology.num_sites
    rng = stream(seed, 0xC0F1)
    h = rng.poisson(rho, size=m).astype(np.int64)
    env = None
    if spec.quenched and spec.kind != "all_s":
        env = sample_environment(topology, spec, derive_seed(seed, 0xE6))
    labels = env.labels if env is not None else None
    annealed_rng = stream(seed, 0xA6) if not spec.quenched else None
    classical = spec.kind == "all_s"

    alpha = np.empty(t_max, dtype=np.float64)
    rows: list[tuple[int, dict[str, float]]] = []
    stabilized_at: int | None = None
    wrapped = topology.wrapped
    t = 0
    while t < t_max:
        unstable = int(np.count_nonzero(h >= 2))
        alpha[t] = unstable / m
        if pattern_stride > 0 and t % pattern_stride == 0:
            rows.append((t, _pattern_snapshot(h, wrapped, patterns, pattern_margin)))
        if unstable == 0:
            stabilized_at = t
            t += 1
            break
        if classical:
            h = _step_arrays(h, None, wrapped)
        else:
            h = _step_arrays(h, labels, wrapped, rng=annealed_rng)
        t += 1
    if pattern_stride > 0 and (not rows or rows[-1][0] != t - 1):
        rows.append((t - 1, _pattern_snapshot(h, wrapped, patterns, pattern_margin)))
    return WindowResult(
        rho,
        n,
        boundary,
        alpha[:t],
        stabilized_at,
        HeightConfig(topology, h),
        tuple(rows),
    )


def _pattern_snapshot(
    h: np.ndarray, wrapped: bool, patterns, margin: int = 0
) -> dict[str, float]:
    return {p: pattern_density_of(h, p, wrapped=wrapped, margin=margin) for p in patterns}


# --- local patterns, FSCs, mirrors ---


def _parse_pattern(pattern) -> np.ndarray:
    if isinstance(pattern, str):
        values = [int(c) for c in pattern]
    else:
        values = [int(v) for v in pattern]
    if not values:
        raise ValueError("empty pattern")
    return np.array(values, dtype=np.int64)


def pattern_density_of(
    heights: np.ndarray, pattern, *, wrapped: bool = False, margin: int = 0
) -> float:
    """Fraction of positions from which the exact height word ``pattern``
    occurs, read to the right (wrapping when asked)."""
    pat = _parse_pattern(pattern)
    k = pat.shape[0]
    m = heights.shape[0]
    if wrapped:
        match = np.ones(m, dtype=bool)
        for off in range(k):
            match &= np.roll(heights, -off) == pat[off]
        if margin:
            match = match[margin : m - margin]
        return float(match.mean()) if match.size else 0.0
    positions = m - k + 1
    if positions <= 0:
        return 0.0
    match = np.ones(positions, dtype=bool)
    for off in range(k):
        match &= heights[off : off + positions] == pat[off]
    if margin:
        match = match[margin : positions - margin]
    return float(match.mean()) if match.size else 0.0


def pattern_density(config: HeightConfig, pattern, *, margin: int = 0) -> float:
    return pattern_density_of(
        config.heights, pattern, wrapped=config.topology.wrapped, margin=margin
    )


def is_fsc(window_heights) -> bool:
    """A height word is a forbidden sub-configuration when its particle
    total is smaller than its internal edge count (length - 1)."""
    w = np.asarray(window_heights, dtype=np.int64)
    if w.ndim != 1 or w.shape[0] < 2:
        raise ValueError("an FSC check needs a 1D window of length >= 2")
    return int(w.sum()) < w.shape[0] - 1


def fsc_density(heights: np.ndarray, size: int, *, wrapped: bool = False) -> float:
    """Fraction of sliding windows of ``size`` sites that are FSCs."""
    if size < 2:
        raise ValueError("FSC windows have at least 2 sites")
    m = heights.shape[0]
    if wrapped:
        padded = np.concatenate([heights, heights[: size - 1]])
        sums = np.convolve(padded, np.ones(size, dtype=np.int64), mode="valid")[:m]
    else:
        if m < size:
            return 0.0
        sums = np.convolve(heights, np.ones(size, dtype=np.int64), mode="valid")
    return float(np.mean(sums < size - 1))


def mirror(config: HeightConfig) -> HeightConfig:
    """Height reflection eta -> 3 - eta; commutes with the classical
    synchronous step.  Defined for heights up to 3."""
    if int(config.heights.max(initial=0)) > MIRROR_MAX_HEIGHT:
        raise ValueError("mirror image needs heights <= 3")
    return HeightConfig(config.topology, MIRROR_MAX_HEIGHT - config.heights)


# --- parity bookkeeping for restricted environments ---


@dataclass(frozen=True)
class ParityProfile:
    parity: np.ndarray
    excess: np.ndarray
    holes: np.ndarray
    walk: np.ndarray
    extremal: np.ndarray

    @property
    def drift(self) -> float:
        return float((self.excess - self.holes).mean())

    @property
    def extremal_density(self) -> float:
        return float(self.extremal.mean())


def parity_profile(config: HeightConfig, env: TopplingEnvironment) -> ParityProfile:
    """Parities, excess pairs, holes, the walk S, and its strict record
    minima (extremal points).

    A hole is an s-site whose both lattice neighbors have even height; on
    non-wrapped topologies the boundary sites have no second neighbor and
    are never holes.  The walk is read left to right from site 0.
    """
    if env.topology != config.topology:
        raise ValueError("environment and configuration topologies differ")
    h = config.heights
    parity = (h % 2).astype(np.int64)
    excess = (h - parity) // 2
    s_site = env.labels == LABEL_S
    even = parity == 0
    if config.topology.wrapped:
        holes = s_site & np.roll(even, 1) & np.roll(even, -1)
    else:
        holes = np.zeros(h.shape[0], dtype=bool)
        if h.shape[0] >= 3:
            holes[1:-1] = s_site[1:-1] & even[:-2] & even[2:]
    holes = holes.astype(np.int64)
    walk = np.cumsum(excess - holes)
    extremal = np.empty(h.shape[0], dtype=bool)
    extremal[0] = True
    if h.shape[0] > 1:
        running_min = np.minimum.accumulate(walk)
        extremal[1:] = walk[1:] < running_min[:-1]
    return ParityProfile(parity, excess, holes, walk, extremal)


@dataclass(frozen=True)
class StabilizabilityPrediction:
    stabilizable: bool | None
    drift: float
    drift_stderr: float
    extremal_density: float
    unmatched_extremal: int
    extremal_count: int


def predict_stabilizable(
    config: HeightConfig,
    env: TopplingEnvironment,
    *,
    block_size: int = 64,
    z: float = 2.0,
) -> StabilizabilityPrediction:
    """Predict stabilizability from the walk drift.

    The drift standard error comes from block means (blocks of
    ``block_size`` sites) since holes are locally correlated.  Drift more
    than z standard errors below zero predicts stabilizable, above zero
    non-stabilizable, otherwise indeterminate (None).  The greedy
    left-to-right matching check counts extremal points reached while an
    excess pair is still unabsorbed.
    """
    profile = parity_profile(config, env)
    inc = (profile.excess - profile.holes).astype(np.float64)
    nblocks = inc.shape[0] // block_size
    if nblocks < 2:
        raise ValueError("configuration too small for a drift standard error")
    block_means = inc[: nblocks * block_size].reshape(nblocks, block_size).mean(axis=1)
    drift = float(inc.mean())
    stderr = float(block_means.std(ddof=1) / np.sqrt(nblocks))
    if drift < -z * stderr:
        verdict: bool | None = True
    elif drift > z * stderr:
        verdict = False
    else:
        verdict = None
    carry = 0
    unmatched = 0
    holes = profile.holes
    excess = profile.excess
    for x in range(inc.shape[0]):
        if profile.extremal[x] and carry > 0:
            unmatched += 1
        carry += int(excess[x])
        if holes[x] and carry > 0:
            carry -= 1
    return StabilizabilityPrediction(
        verdict,
        drift,
        stderr,
        profile.extremal_density,
        unmatched,
        int(profile.extremal.sum()),
    )


# --- budgeted stabilization oracle ---


@dataclass(frozen=True)
class OracleResult:
    stable: bool
    budgets: tuple[int, ...]
    odometer_snapshots: np.ndarray
    settled: np.ndarray
    diverging: np.ndarray
    final: HeightConfig


def stabilizability_oracle(
    config: HeightConfig,
    env: TopplingEnvironment | None = None,
    *,
    seed: int | None = None,
    base_budget: int,
    doublings: int = 2,
    growth_tol: float = 0.5,
) -> OracleResult:
    """Classify sites by budgeted stabilization with doubling budgets.

    Runs to base_budget, 2x, 4x, ... cumulative topplings, snapshotting
    the odometer at each mark.  A site is *settled* when it is stable at
    the end and did not topple in the last doubling; it is *diverging*
    when its toppling count grew in both doublings and the last increment
    kept pace (>= growth_tol times the previous one).  For a stabilizable
    configuration every site settles once the run finishes early.
    """
    topology = config.topology
    m = topology.num_sites
    budgets = tuple(int(base_budget) << k for k in range(doublings + 1))
    heights = config.heights.copy()
    heights.setflags(write=True)
    odometer = np.zeros(m, dtype=np.int64)
    snaps = np.zeros((len(budgets), m), dtype=np.int64)
    spent = 0
    stable = False
    kseed = _kernel_seed(seed) if seed is not None else 0
    for k, mark in enumerate(budgets):
        if not stable:
            room = mark - spent
            if env is not None:
                stable_flag, topplings, _, _ = _kernels.stabilize_1d_quenched(
                    heights, odometer, env.labels, topology.wrapped, room
                )
            else:
                stable_flag, topplings, _, _ = _kernels.stabilize_1d_annealed(
                    heights, odometer, topology.wrapped, room, kseed + k
                )
            spent += int(topplings)
            stable = bool(stable_flag)
        snaps[k] = odometer
    inc_prev = snaps[-2] - snaps[-3] if len(budgets) >= 3 else snaps[-2]
    inc_last = snaps[-1] - snaps[-2]
    settled = (heights <= 1) & (inc_last == 0)
    diverging = (inc_prev > 0) & (inc_last >= np.maximum(1, growth_tol * inc_prev))
    return OracleResult(
        stable,
        budgets,
        snaps,
        settled,
        diverging,
        HeightConfig(topology, heights),
    )


def oracle_agreement(oracle: OracleResult, stabilizable: bool, *, margin: int = 0) -> float:
    """Fraction of (interior) sites whose oracle class matches the
    prediction."""
    mask = oracle.settled if stabilizable else oracle.diverging
    if margin:
        mask = mask[margin : mask.shape[0] - margin]
    if mask.size == 0:
        raise ValueError("margin leaves no interior sites")
    return float(mask.mean())


# --- the three-site parity table ---


def local_parity_stabilize(triple) -> np.ndarray:
    """Stabilize heights (a, b, c) on sites labeled (r, s, r), confining
    topplings to the triple; particles shed right of the last site are
    lost.  Needs b >= 2 so the middle site topples at least once."""
    a, b, c = (int(v) for v in np.asarray(triple))
    if b < 2:
        raise ValueError("the parity table assumes the middle site topples (b >= 2)")
    topology = Topology.interval(2)
    env = TopplingEnvironment(
        topology, np.array([LABEL_R, LABEL_S, LABEL_R], dtype=np.int8)
    )
    result = stabilize(HeightConfig(topology, np.array([a, b, c])), env)
    return np.asarray(result.config.heights)


def parity_table_prediction(triple) -> np.ndarray:
    """Closed form of the table: left site ends occupied, the middle keeps
    its parity, and the right site is occupied iff the outer parities
    agree."""
    a, b, c = (int(v) for v in np.asarray(triple))
    right = 1 if (a % 2 + c % 2) % 2 == 0 else 0
    return np.array([1, b % 2, right], dtype=np.int64)
