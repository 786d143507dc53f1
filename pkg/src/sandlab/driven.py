"""Driven dynamics on the interval: add a particle at a uniform site, then
stabilize, and repeat.

For a directed environment (labels s and r, r-fraction f_r) the lattice
splits at the r-sites into blocks.  Each block with an r-site at its left
end has exactly two recurrent sub-configurations, all-full and
all-full-except-the-rightmost ("non-full"), and an addition either flips
the block it hits, flips the first odd-length block downstream, or changes
nothing; which of these happens depends only on the addition site, never
on the configuration.  At stationarity each block is full with probability
1/2, which pins the expected height at 1 - f_r/2.  The leftmost block (no
r-site) behaves as a classical driven sandpile: its recurrent states have
at most one empty site and are equally likely.

The estimators below run the actual toppling dynamics; the block
machinery is exposed for structural checks, not used as a shortcut.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .engine import StabilizationResult, _kernel_seed, stabilize
from .lattice import (
    LABEL_R,
    EnvironmentSpec,
    HeightConfig,
    TopplingEnvironment,
    all_s_environment,
    sample_environment,
)
from .rng import derive_seed, stream
from .topology import INTERVAL, Topology

_SAFETY_CAP = 2**62


# --- single additions ---


def drive_step(
    config: HeightConfig,
    env: TopplingEnvironment | None,
    site: int,
    *,
    seed: int | None = None,
) -> StabilizationResult:
    """One addition at ``site`` followed by stabilization.

    ``config`` must already be stable.  Annealed runs pass ``seed`` and no
    environment.
    """
    if config.topology.kind != INTERVAL:
        raise ValueError("the driven model runs on interval topologies")
    if not config.is_stable:
        raise ValueError("drive_step expects a stable configuration")
    heights = config.heights.copy()
    heights.setflags(write=True)
    heights[site] += 1
    bumped = HeightConfig(config.topology, heights)
    if env is not None:
        return stabilize(bumped, env)
    return stabilize(bumped, seed=seed)


def addition_outcome_classical(config: HeightConfig, site: int) -> HeightConfig:
    """Closed form for one classical driven addition on the interval.

    With i the nearest empty site <= ``site`` (or -1) and j the nearest
    empty site >= ``site`` (or n+1), only sites strictly between i and j
    topple, sites i and j gain one particle (where they exist on the
    lattice) and site i+j-site loses one.  Empty addition sites just
    become occupied.
    """
    topology = config.topology
    if topology.kind != INTERVAL:
        raise ValueError("closed form applies to interval topologies")
    h = config.heights
    if not config.is_stable:
        raise ValueError("closed form applies to stable configurations")
    m = topology.num_sites
    empties = np.flatnonzero(h == 0)
    left = empties[empties <= site]
    right = empties[empties >= site]
    i = int(left[-1]) if left.size else -1
    j = int(right[0]) if right.size else m
    out = h.copy()
    out.setflags(write=True)
    if i >= 0:
        out[i] += 1
    if j < m:
        out[j] += 1
    out[i + j - site] -= 1
    return HeightConfig(topology, out)


# --- the two-state block lemma ---


def flip_states(topology: Topology) -> tuple[HeightConfig, HeightConfig]:
    """(full, non-full) absorbing pair for an r-headed block: all sites
    occupied, and all occupied except the rightmost."""
    m = topology.num_sites
    full = HeightConfig(topology, np.ones(m, dtype=np.int64))
    nonfull_heights = np.ones(m, dtype=np.int64)
    nonfull_heights[m - 1] = 0
    return full, HeightConfig(topology, nonfull_heights)


def lemma_flip(config: HeightConfig, site: int) -> HeightConfig:
    """Predicted outcome of one addition for the environment with r at
    site 0 and s elsewhere, starting from the full or non-full state.

    If n - site is even the configuration flips to the other member of
    the pair; otherwise it is unchanged.
    """
    topology = config.topology
    if topology.kind != INTERVAL:
        raise ValueError("the flip lemma is stated on interval topologies")
    if not 0 <= site < topology.num_sites:
        raise IndexError(f"site {site} out of range for {topology}")
    full, nonfull = flip_states(topology)
    if np.array_equal(config.heights, full.heights):
        other = nonfull
    elif np.array_equal(config.heights, nonfull.heights):
        other = full
    else:
        raise ValueError("configuration is neither the full nor the non-full state")
    if (topology.n - site) % 2 == 0:
        return other
    return config


def flip_environment(topology: Topology) -> TopplingEnvironment:
    """r at site 0, s everywhere else."""
    labels = all_s_environment(topology).labels.copy()
    labels.setflags(write=True)
    labels[0] = LABEL_R
    return TopplingEnvironment(topology, labels)


# --- block decomposition of a directed environment ---

NO_FLIP = -1
LEFT_BLOCK = 0


@dataclass(frozen=True)
class BlockDecomposition:
    """Split of a directed interval environment at its r-sites.

    ``r_positions`` are the r-site indices in increasing order.  Block 0
    is the (possibly empty) r-free prefix; block i >= 1 starts at the
    i-th r-site.  ``flip_target[a]`` names the block flipped by an
    addition at site a: a block index >= 1, NO_FLIP when the addition
    changes nothing, or LEFT_BLOCK when the addition lands in the prefix
    (whose effect depends on the configuration).
    """

    topology: Topology
    r_positions: np.ndarray
    bounds: tuple[tuple[int, int], ...]
    flip_target: np.ndarray = field(repr=False)

    @property
    def num_blocks(self) -> int:
        return len(self.bounds) - 1

    def length(self, i: int) -> int:
        lo, hi = self.bounds[i]
        return hi - lo + 1 if hi >= lo else 0

    def block_of(self, site: int) -> int:
        for i, (lo, hi) in enumerate(self.bounds):
            if lo <= site <= hi:
                return i
        raise IndexError(f"site {site} out of range")

    def block_slice(self, i: int) -> slice:
        lo, hi = self.bounds[i]
        return slice(lo, hi + 1)

    def is_full(self, config: HeightConfig, i: int) -> bool | None:
        """Classify block i >= 1 as full (True), non-full (False), or
        transient (None)."""
        if i < 1:
            raise ValueError("block 0 has no full/non-full classification")
        seg = config.heights[self.block_slice(i)]
        if np.all(seg == 1):
            return True
        if seg[-1] == 0 and np.all(seg[:-1] == 1):
            return False
        return None


def block_decompose(env: TopplingEnvironment) -> BlockDecomposition:
    """Decompose a directed interval environment into blocks; raises if the
    environment contains l labels."""
    topology = env.topology
    if topology.kind != INTERVAL:
        raise ValueError("block decomposition is defined on interval topologies")
    if not np.all((env.labels == 0) | (env.labels == LABEL_R)):
        raise ValueError("block decomposition needs a directed (s/r) environment")
    m = topology.num_sites
    r_pos = np.flatnonzero(env.labels == LABEL_R)
    bounds: list[tuple[int, int]] = []
    if r_pos.size == 0:
        bounds.append((0, m - 1))
    else:
        bounds.append((0, int(r_pos[0]) - 1))  # empty when the first r sits at 0
        for k in range(r_pos.size):
            lo = int(r_pos[k])
            hi = int(r_pos[k + 1]) - 1 if k + 1 < r_pos.size else m - 1
            bounds.append((lo, hi))

    flip_target = np.full(m, NO_FLIP, dtype=np.int64)
    lengths = [hi - lo + 1 if hi >= lo else 0 for lo, hi in bounds]
    nblocks = len(bounds) - 1
    # first odd-length block strictly after i (or NO_FLIP)
    next_odd = np.full(nblocks + 2, NO_FLIP, dtype=np.int64)
    for i in range(nblocks, 0, -1):
        later = next_odd[i + 1] if i + 1 <= nblocks else NO_FLIP
        next_odd[i] = i if lengths[i] % 2 == 1 else later
    lo0, hi0 = bounds[0]
    if hi0 >= lo0:
        flip_target[lo0 : hi0 + 1] = LEFT_BLOCK
    for i in range(1, nblocks + 1):
        lo, hi = bounds[i]
        li = lengths[i]
        for a in range(lo, hi + 1):
            pos = a - lo + 1  # 1-based position within the block
            if (li - pos) % 2 == 0:
                flip_target[a] = i
            else:
                flip_target[a] = next_odd[i + 1] if i + 1 <= nblocks else NO_FLIP
    return BlockDecomposition(topology, r_pos, tuple(bounds), flip_target)


# --- stationary density estimation ---


@dataclass(frozen=True)
class DrivenEstimate:
    """Time-averaged occupied fraction of the driven stationary state."""

    mean: float
    stderr: float
    per_trial: np.ndarray
    n: int
    additions: int
    burn_in: int

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.mean - target) <= sigmas * self.stderr


def default_burn_in(n: int) -> int:
    """Additions discarded before sampling; generous quadratic default so
    small systems forget their start."""
    return 10 * n * (n + 2)


def estimate_stationary_density(
    spec: EnvironmentSpec,
    n: int,
    additions: int,
    *,
    burn_in: int | None = None,
    trials: int = 6,
    seed: int = 0,
    initial_rho: float = 0.0,
) -> DrivenEstimate:
    """Run ``trials`` independent driven chains on I_n and average the
    occupied fraction over the post-burn-in additions of each.

    Each trial draws its own environment (for quenched specs) and its own
    addition sites; the stderr is the across-trial standard error, so it
    reflects environment-to-environment variation as well as time
    averaging noise.  Stable configurations are 0/1-valued, so occupied
    fraction and mean height agree.
    """
    if additions < 1:
        raise ValueError("need at least one sampled addition")
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    topology = Topology.interval(n)
    m = topology.num_sites
    burn = default_burn_in(n) if burn_in is None else int(burn_in)
    per_trial = np.empty(trials, dtype=np.float64)
    none_recorded = np.empty(0, dtype=np.int64)
    for trial in range(trials):
        rng = stream(seed, 0xD21F, trial)
        if initial_rho > 0.0:
            heights = rng.poisson(initial_rho, size=m).astype(np.int64)
        else:
            heights = np.zeros(m, dtype=np.int64)
        stabilize_first = heights.max(initial=0) >= 2
        add_sites = rng.integers(0, m, size=burn + additions)
        odometer = np.zeros(m, dtype=np.int64)
        if spec.quenched:
            env = sample_environment(topology, spec, derive_seed(seed, 0xE2, trial))
            if stabilize_first:
                _kernels.stabilize_1d_quenched(heights, odometer, env.labels, False, -1)
            occ_sum, samples, _, aborted = _kernels.drive_1d_quenched(
                heights, odometer, env.labels, add_sites, burn, none_recorded, 0, _SAFETY_CAP
            )
        else:
            kseed = _kernel_seed(derive_seed(seed, 0xA2, trial))
            if stabilize_first:
                _kernels.stabilize_1d_annealed(heights, odometer, False, -1, kseed)
            occ_sum, samples, _, aborted = _kernels.drive_1d_annealed(
                heights, odometer, add_sites, burn, none_recorded, 0, _SAFETY_CAP, kseed
            )
        if aborted >= 0:
            raise RuntimeError(f"addition {aborted} failed to stabilize")
        per_trial[trial] = occ_sum / (samples * m)
    mean = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / np.sqrt(trials))
    return DrivenEstimate(mean, stderr, per_trial, n, additions, burn)


def occupied_series(
    spec: EnvironmentSpec,
    n: int,
    additions: int,
    *,
    stride: int = 1,
    trials: int = 1,
    seed: int = 0,
) -> list[tuple[int, int, float]]:
    """(trial, t, occupied_fraction) rows sampled every ``stride``
    additions; t counts additions from 1."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    topology = Topology.interval(n)
    m = topology.num_sites
    rows: list[tuple[int, int, float]] = []
    for trial in range(trials):
        rng = stream(seed, 0xD21F, trial)
        heights = np.zeros(m, dtype=np.int64)
        add_sites = rng.integers(0, m, size=additions)
        odometer = np.zeros(m, dtype=np.int64)
        out = np.zeros(additions // stride, dtype=np.int64)
        if spec.quenched:
            env = sample_environment(topology, spec, derive_seed(seed, 0xE2, trial))
            _, _, _, aborted = _kernels.drive_1d_quenched(
                heights, odometer, env.labels, add_sites, additions, out, stride, _SAFETY_CAP
            )
        else:
            kseed = _kernel_seed(derive_seed(seed, 0xA2, trial))
            _, _, _, aborted = _kernels.drive_1d_annealed(
                heights, odometer, add_sites, additions, out, stride, _SAFETY_CAP, kseed
            )
        if aborted >= 0:
            raise RuntimeError(f"addition {aborted} failed to stabilize")
        for k, occ in enumerate(out):
            rows.append((trial, (k + 1) * stride, occ / m))
    return rows
