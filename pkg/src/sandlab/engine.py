"""Toppling dynamics: single topplings, full stabilization, parallel steps.

An unstable site holds at least two particles.  Toppling removes exactly
two and sends them according to the site's label (see
:mod:`sandlab.lattice`); on the complete graph each of the two particles
lands on an independently uniform site (self-loops allowed).  Particles
pushed past the open end of an interval are lost.

Stabilization is abelian for quenched labels: the final configuration and
the per-site toppling counts (the odometer) do not depend on the order in
which unstable sites are processed.  The same holds for annealed labels
once the label sequence each site will consume is fixed in advance, which
is what :class:`LabelStack` provides.  The fast annealed path instead
draws labels on the fly along a fixed canonical schedule (left-to-right
sweeps, one toppling per unstable site per sweep), which samples the same
law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lattice import (
    ANNEALED_P_L,
    ANNEALED_P_S,
    LABEL_L,
    LABEL_R,
    LABEL_S,
    HeightConfig,
    TopplingEnvironment,
)
from .rng import stream
from .topology import COMPLETE, Topology

UNLIMITED = -1


def default_budget(num_sites: int, c: float = 1.0, headroom: float = 100.0) -> int:
    """Toppling budget used when probing stabilizability: c * m * log(m+1)
    scaled by a safety headroom."""
    return int(math.ceil(c * num_sites * math.log(num_sites + 1) * headroom))


@dataclass(frozen=True)
class StabilizationResult:
    stable: bool
    config: HeightConfig
    odometer: np.ndarray
    topplings: int
    lost_left: int
    lost_right: int
    budget: int

    @property
    def lost(self) -> int:
        return self.lost_left + self.lost_right


class LabelStack:
    """Pre-committed annealed labels, one stream per site.

    Site x's k-th toppling always consumes the k-th label of stream x, no
    matter when that toppling happens; stabilization outcomes therefore do
    not depend on the processing schedule.  Streams are materialized
    lazily and deterministically from (seed, site).
    """

    _BLOCK = 64

    def __init__(self, topology: Topology, seed: int):
        self.topology = topology
        self.seed = int(seed)
        self._streams: dict[int, np.ndarray] = {}
        self._cursor: dict[int, int] = {}

    def _materialize(self, site: int, depth: int) -> np.ndarray:
        have = self._streams.get(site)
        need = max(depth + 1, self._BLOCK)
        if have is not None and have.shape[0] >= need:
            return have
        count = ((need + self._BLOCK - 1) // self._BLOCK) * self._BLOCK
        rng = stream(self.seed, 0xA11, site)
        u = rng.random(count)
        labels = np.where(
            u < ANNEALED_P_S, LABEL_S, np.where(u < ANNEALED_P_S + ANNEALED_P_L, LABEL_L, LABEL_R)
        ).astype(np.int8)
        self._streams[site] = labels
        return labels

    def peek(self, site: int) -> int:
        cur = self._cursor.get(site, 0)
        return int(self._materialize(site, cur)[cur])

    def pop(self, site: int) -> int:
        cur = self._cursor.get(site, 0)
        label = int(self._materialize(site, cur)[cur])
        self._cursor[site] = cur + 1
        return label

    def consumed(self, site: int) -> int:
        return self._cursor.get(site, 0)

    def copy(self) -> "LabelStack":
        dup = LabelStack(self.topology, self.seed)
        dup._cursor = dict(self._cursor)
        return dup


# --- single topplings ---


def _shed(heights: np.ndarray, topology: Topology, x: int, label: int) -> tuple[int, int]:
    """Apply one toppling's particle movement; returns (lost_left, lost_right)."""
    m = topology.num_sites
    if label == LABEL_S:
        moves = ((x - 1, 1), (x + 1, 1))
    elif label == LABEL_R:
        moves = ((x + 1, 2),)
    else:
        moves = ((x - 1, 2),)
    lost_left = lost_right = 0
    for target, amount in moves:
        if 0 <= target < m:
            heights[target] += amount
        elif topology.wrapped:
            heights[target % m] += amount
        elif target < 0:
            lost_left += amount
        else:
            lost_right += amount
    return lost_left, lost_right


def topple(
    config: HeightConfig,
    env: TopplingEnvironment | LabelStack | None,
    site: int,
    rng: np.random.Generator | None = None,
) -> HeightConfig:
    """Topple one unstable site once and return the new configuration.

    ``env`` is a quenched environment, a :class:`LabelStack` (consumes one
    label), or None for the classical all-s rule.  Complete topologies
    ignore labels and need ``rng`` for the two landing sites.
    """
    topology = config.topology
    m = topology.num_sites
    if not 0 <= site < m:
        raise IndexError(f"site {site} out of range for {topology}")
    if config.heights[site] < 2:
        raise ValueError(f"site {site} is stable (height {config.heights[site]}), cannot topple")
    heights = config.heights.copy()
    heights.setflags(write=True)
    if topology.kind == COMPLETE:
        if rng is None:
            raise ValueError("toppling on a complete topology needs an rng for the landings")
        heights[site] -= 2
        for target in rng.integers(0, m, size=2):
            heights[int(target)] += 1
        return HeightConfig(topology, heights)
    if isinstance(env, LabelStack):
        label = env.pop(site)
    elif env is not None:
        label = int(env.labels[site])
    else:
        label = LABEL_S
    heights[site] -= 2
    _shed(heights, topology, site, label)
    return HeightConfig(topology, heights)


# --- stabilization ---


def stabilize(
    config: HeightConfig,
    env: TopplingEnvironment | None = None,
    *,
    stack: LabelStack | None = None,
    seed: int | None = None,
    budget: int | None = None,
) -> StabilizationResult:
    """Topple until stable (or until ``budget`` topplings have been spent).

    Exactly one label source must be supplied: a quenched environment, a
    pre-committed :class:`LabelStack`, or ``seed`` for the fast annealed
    path (on complete topologies ``seed`` also drives the landing draws).
    Classical runs pass an all-s environment.  When the budget runs out
    before stability the partial configuration and odometer are returned
    with ``stable=False``; a stabilization that succeeds within some
    budget returns the same output under any larger budget.
    """
    topology = config.topology
    m = topology.num_sites
    cap = UNLIMITED if budget is None else int(budget)
    sources = sum(x is not None for x in (env, stack, seed))
    if sources != 1:
        raise ValueError("supply exactly one of env, stack, seed")
    if topology.kind == COMPLETE:
        if seed is None:
            raise ValueError("complete topologies stabilize with a seed (annealed landings)")
        heights = config.heights.copy()
        heights.setflags(write=True)
        odometer = np.zeros(m, dtype=np.int64)
        empty = np.empty(0, dtype=np.int64)
        stable, topplings, _, _ = _kernels.stabilize_complete(
            heights, odometer, cap, _kernel_seed(seed), empty, 0
        )
        return StabilizationResult(
            bool(stable), HeightConfig(topology, heights), odometer, int(topplings), 0, 0, cap
        )
    heights = config.heights.copy()
    heights.setflags(write=True)
    odometer = np.zeros(m, dtype=np.int64)
    if env is not None:
        if env.topology != topology:
            raise ValueError("environment topology does not match configuration")
        stable, topplings, ll, lr = _kernels.stabilize_1d_quenched(
            heights, odometer, env.labels, topology.wrapped, cap
        )
    elif seed is not None:
        stable, topplings, ll, lr = _kernels.stabilize_1d_annealed(
            heights, odometer, topology.wrapped, cap, _kernel_seed(seed)
        )
    else:
        return _stabilize_with_stack(config, stack, cap)
    return StabilizationResult(
        bool(stable),
        HeightConfig(topology, heights),
        odometer,
        int(topplings),
        int(ll),
        int(lr),
        cap,
    )


def _kernel_seed(seed: int) -> int:
    # numba's internal generator accepts 32-bit seeds
    return int(seed) & 0x7FFFFFFF


def _stabilize_with_stack(config: HeightConfig, stack: LabelStack, cap: int) -> StabilizationResult:
    """Reference stack-driven stabilization (pure Python, sweep order)."""
    topology = config.topology
    if stack.topology != topology:
        raise ValueError("stack topology does not match configuration")
    m = topology.num_sites
    heights = config.heights.copy()
    heights.setflags(write=True)
    odometer = np.zeros(m, dtype=np.int64)
    topplings = 0
    lost_left = lost_right = 0
    limit = cap if cap >= 0 else None
    while True:
        toppled_any = False
        for x in range(m):
            if heights[x] >= 2:
                if limit is not None and topplings >= limit:
                    return StabilizationResult(
                        False,
                        HeightConfig(topology, heights),
                        odometer,
                        topplings,
                        lost_left,
                        lost_right,
                        cap,
                    )
                label = stack.pop(x)
                heights[x] -= 2
                odometer[x] += 1
                ll, lr = _shed(heights, topology, x, label)
                lost_left += ll
                lost_right += lr
                topplings += 1
                toppled_any = True
        if not toppled_any:
            return StabilizationResult(
                True,
                HeightConfig(topology, heights),
                odometer,
                topplings,
                lost_left,
                lost_right,
                cap,
            )


# --- synchronous (parallel) dynamics ---


def _step_arrays(
    heights: np.ndarray,
    labels: np.ndarray | None,
    wrapped: bool,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One synchronous step on raw arrays; every unstable site topples once.

    ``labels=None`` with an rng draws annealed labels for the toppling
    sites; ``labels=None`` without an rng means classical all-s.
    """
    unstable = heights >= 2
    if labels is None and rng is not None:
        u = rng.random(heights.shape[0])
        lab = np.where(u < ANNEALED_P_S, LABEL_S, np.where(u < ANNEALED_P_S + ANNEALED_P_L, LABEL_L, LABEL_R))
    elif labels is None:
        lab = np.full(heights.shape[0], LABEL_S, dtype=np.int8)
    else:
        lab = labels
    send_left = np.where(unstable, np.where(lab == LABEL_S, 1, np.where(lab == LABEL_L, 2, 0)), 0)
    send_right = np.where(unstable, np.where(lab == LABEL_S, 1, np.where(lab == LABEL_R, 2, 0)), 0)
    out = heights - 2 * unstable.astype(heights.dtype)
    if wrapped:
        out += np.roll(send_right, 1) + np.roll(send_left, -1)
    else:
        out[1:] += send_right[:-1]
        out[:-1] += send_left[1:]
    return out


def parallel_step(
    config: HeightConfig,
    env: TopplingEnvironment | None = None,
    *,
    stack: LabelStack | None = None,
    rng: np.random.Generator | None = None,
) -> HeightConfig:
    """Synchronous update: all currently unstable sites topple once.

    Annealed steps consume one label per toppling site, from ``stack``
    when given, else drawn from ``rng``.
    """
    topology = config.topology
    if topology.kind == COMPLETE:
        raise NotImplementedError("synchronous dynamics are defined on 1D topologies")
    if stack is not None:
        heights = config.heights.copy()
        heights.setflags(write=True)
        lab = np.full(topology.num_sites, LABEL_S, dtype=np.int8)
        for x in np.flatnonzero(heights >= 2):
            lab[x] = stack.pop(int(x))
        return HeightConfig(topology, _step_arrays(heights, lab, topology.wrapped))
    labels = env.labels if env is not None else None
    return HeightConfig(
        topology, _step_arrays(config.heights, labels, topology.wrapped, rng=rng)
    )


# --- order-independence checks ---


def _stabilize_random_order(
    config: HeightConfig,
    env: TopplingEnvironment | None,
    stack: LabelStack | None,
    rng: np.random.Generator,
    max_topplings: int,
) -> tuple[HeightConfig, np.ndarray]:
    heights = config.heights.copy()
    heights.setflags(write=True)
    topology = config.topology
    odometer = np.zeros(topology.num_sites, dtype=np.int64)
    topplings = 0
    while True:
        unstable = np.flatnonzero(heights >= 2)
        if unstable.size == 0:
            return HeightConfig(topology, heights), odometer
        if topplings >= max_topplings:
            raise RuntimeError("random-order stabilization exceeded its safety cap")
        x = int(unstable[rng.integers(0, unstable.size)])
        label = (
            stack.pop(x)
            if stack is not None
            else (int(env.labels[x]) if env is not None else LABEL_S)
        )
        heights[x] -= 2
        odometer[x] += 1
        _shed(heights, topology, x, label)
        topplings += 1


def check_abelian(
    config: HeightConfig,
    env: TopplingEnvironment | None = None,
    *,
    stack_seed: int | None = None,
    n_orders: int = 20,
    seed: int = 0,
    max_topplings: int = 1_000_000,
) -> bool:
    """Stabilize under ``n_orders`` random schedules and report whether the
    final configuration and odometer always agree.

    With ``stack_seed`` the run is annealed against a fresh copy of the
    same pre-committed LabelStack per schedule; otherwise quenched
    (``env``) or classical.
    """
    reference: tuple[np.ndarray, np.ndarray] | None = None
    for order in range(n_orders):
        rng = stream(seed, 0xAB31, order)
        stack = (
            LabelStack(config.topology, stack_seed) if stack_seed is not None else None
        )
        final, odometer = _stabilize_random_order(config, env, stack, rng, max_topplings)
        if reference is None:
            reference = (final.heights, odometer)
        else:
            if not (
                np.array_equal(reference[0], final.heights)
                and np.array_equal(reference[1], odometer)
            ):
                return False
    return True
