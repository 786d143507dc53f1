"""Height configurations, toppling environments, and their samplers.

A *height configuration* assigns each site a non-negative particle count.
A *toppling environment* assigns each site a quenched label telling it how
to shed particles when it topples:

* ``s``  one particle to each neighbor (symmetric),
* ``r``  both particles to the right neighbor,
* ``l``  both particles to the left neighbor.

Environment families:

* all-s: the classical model;
* i.i.d. directed: each site independently ``r`` with probability f_r,
  otherwise ``s``;
* restricted directed: stationary ergodic over {s, r} with no two ``s``
  labels at distance 1 or 2 (which forces f_s <= 1/3);
* annealed: no quenched labels at all; a fresh label (s with probability
  1/2, l with 1/4, r with 1/4) is consumed per toppling.  See
  :class:`sandlab.engine.LabelStack`.

Initial heights are i.i.d. Poisson(rho) unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .topology import COMPLETE, Topology

LABEL_S = 0
LABEL_R = 1
LABEL_L = 2

_LABEL_CHARS = {LABEL_S: "s", LABEL_R: "r", LABEL_L: "l"}
_CHAR_LABELS = {v: k for k, v in _LABEL_CHARS.items()}

ANNEALED_P_S = 0.5
ANNEALED_P_L = 0.25
ANNEALED_P_R = 0.25


# --- height configurations ---


@dataclass(frozen=True)
class HeightConfig:
    """Immutable particle counts on a topology."""

    topology: Topology
    heights: np.ndarray

    def __post_init__(self) -> None:
        h = np.ascontiguousarray(self.heights, dtype=np.int64)
        if h.ndim != 1 or h.shape[0] != self.topology.num_sites:
            raise ValueError(
                f"heights shape {h.shape} does not match {self.topology.num_sites} sites"
            )
        if np.any(h < 0):
            raise ValueError("heights must be non-negative")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @property
    def total(self) -> int:
        return int(self.heights.sum())

    @property
    def is_stable(self) -> bool:
        return bool(np.all(self.heights <= 1))

    def unstable_sites(self) -> np.ndarray:
        return np.flatnonzero(self.heights >= 2)

    def occupied_fraction(self) -> float:
        return float(np.mean(self.heights >= 1))

    def replace(self, heights: np.ndarray) -> "HeightConfig":
        return HeightConfig(self.topology, heights)


def sample_config(topology: Topology, rho: float, seed: int) -> HeightConfig:
    """I.i.d. Poisson(rho) heights; identical (topology, rho, seed) gives
    identical output."""
    if rho < 0:
        raise ValueError(f"density must be >= 0, got {rho}")
    rng = stream(seed, 0xC0F1)
    heights = rng.poisson(rho, size=topology.num_sites).astype(np.int64)
    return HeightConfig(topology, heights)


# --- environments ---


@dataclass(frozen=True)
class EnvironmentSpec:
    """Which law the quenched labels (or the annealed label stream) follow."""

    kind: str
    f_r: float = 0.0
    f_s: float = 1.0

    _KINDS = ("all_s", "iid_directed", "restricted", "annealed")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if not 0.0 <= self.f_r <= 1.0:
            raise ValueError(f"f_r must lie in [0, 1], got {self.f_r}")
        if self.kind == "restricted" and not 0.0 <= self.f_s <= 1.0 / 3.0 + 1e-12:
            raise ValueError(
                f"restricted environments need f_s <= 1/3, got f_s={self.f_s}"
            )

    @staticmethod
    def all_s() -> "EnvironmentSpec":
        return EnvironmentSpec("all_s", f_r=0.0, f_s=1.0)

    @staticmethod
    def iid_directed(f_r: float) -> "EnvironmentSpec":
        return EnvironmentSpec("iid_directed", f_r=f_r, f_s=1.0 - f_r)

    @staticmethod
    def restricted(f_s: float) -> "EnvironmentSpec":
        return EnvironmentSpec("restricted", f_r=1.0 - f_s, f_s=f_s)

    @staticmethod
    def annealed() -> "EnvironmentSpec":
        return EnvironmentSpec("annealed", f_r=ANNEALED_P_R, f_s=ANNEALED_P_S)

    @property
    def quenched(self) -> bool:
        return self.kind != "annealed"

    def describe(self) -> str:
        if self.kind == "iid_directed":
            return f"iid-directed:{self.f_r:g}"
        if self.kind == "restricted":
            return f"restricted:{self.f_s:g}"
        return self.kind.replace("_", "-")


@dataclass(frozen=True)
class TopplingEnvironment:
    """Quenched per-site labels on a topology."""

    topology: Topology
    labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        lab = np.ascontiguousarray(self.labels, dtype=np.int8)
        if lab.ndim != 1 or lab.shape[0] != self.topology.num_sites:
            raise ValueError(
                f"labels shape {lab.shape} does not match {self.topology.num_sites} sites"
            )
        if not np.all((lab >= 0) & (lab <= 2)):
            raise ValueError("labels must be codes in {0 (s), 1 (r), 2 (l)}")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def f_r(self) -> float:
        return float(np.mean(self.labels == LABEL_R))

    @property
    def f_s(self) -> float:
        return float(np.mean(self.labels == LABEL_S))

    @property
    def f_l(self) -> float:
        return float(np.mean(self.labels == LABEL_L))

    def label_chars(self) -> list[str]:
        return [_LABEL_CHARS[int(c)] for c in self.labels]

    @staticmethod
    def from_chars(topology: Topology, chars: "list[str] | str") -> "TopplingEnvironment":
        if isinstance(chars, str):
            chars = list(chars)
        try:
            codes = np.array([_CHAR_LABELS[c] for c in chars], dtype=np.int8)
        except KeyError as bad:
            raise ValueError(f"unknown label {bad.args[0]!r}; expected l, r, or s") from None
        return TopplingEnvironment(topology, codes)


def all_s_environment(topology: Topology) -> TopplingEnvironment:
    return TopplingEnvironment(topology, np.zeros(topology.num_sites, dtype=np.int8))


def _sample_restricted_labels(num_sites: int, f_s: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary run-length construction of a restricted {s, r} sequence.

    The label process is a renewal chain: after each s come two mandatory
    r's, then a Geometric number of extra r's, then the next s.  Starting
    the chain from its stationary phase distribution makes every site's
    marginal law identical, with P(s) = f_s exactly.
    """
    if f_s == 0.0:
        return np.full(num_sites, LABEL_R, dtype=np.int8)
    # Continuation probability of the r-run once past the two mandatory r's.
    q = (1.0 - 3.0 * f_s) / (1.0 - 2.0 * f_s)
    # Phase = r's emitted since the last s, capped at 2.  Stationary weights:
    pi = np.array([f_s, f_s, 1.0 - 2.0 * f_s])
    phase = int(rng.choice(3, p=pi / pi.sum()))

    chunks: list[np.ndarray] = []
    produced = 0
    first = True
    while produced < num_sites:
        want = num_sites - produced
        nblocks = max(16, int(want * f_s * 1.3) + 8)
        if q > 0.0:
            extras = rng.geometric(1.0 - q, size=nblocks) - 1
        else:
            extras = np.zeros(nblocks, dtype=np.int64)
        runs = extras + 2
        if first:
            runs[0] = extras[0] + (2 - phase)
            first = False
        # Each block is runs[i] r-labels followed by one s-label.
        block_lengths = runs + 1
        total = int(block_lengths.sum())
        seq = np.full(total, LABEL_R, dtype=np.int8)
        seq[np.cumsum(block_lengths) - 1] = LABEL_S
        chunks.append(seq)
        produced += total
    return np.concatenate(chunks)[:num_sites]


_RESTRICTED_SALT = 0x5EAD
_MAX_SEAM_ATTEMPTS = 1000


def sample_environment(topology: Topology, spec: EnvironmentSpec, seed: int) -> TopplingEnvironment:
    """Draw a quenched environment; deterministic in (topology, spec, seed).

    On wrapped topologies a restricted draw is redrawn until the spacing
    constraint also holds across the seam.
    """
    if not spec.quenched:
        raise ValueError(
            "annealed runs have no quenched environment; labels come from a LabelStack"
        )
    if topology.kind == COMPLETE and spec.kind != "all_s":
        raise ValueError("complete topologies only support symmetric toppling")
    m = topology.num_sites
    if spec.kind == "all_s":
        return all_s_environment(topology)
    if spec.kind == "iid_directed":
        rng = stream(seed, 0xE57)
        codes = np.where(rng.random(m) < spec.f_r, LABEL_R, LABEL_S).astype(np.int8)
        return TopplingEnvironment(topology, codes)
    # restricted
    for attempt in range(_MAX_SEAM_ATTEMPTS):
        rng = stream(seed, _RESTRICTED_SALT, attempt)
        codes = _sample_restricted_labels(m, spec.f_s, rng)
        env = TopplingEnvironment(topology, codes)
        if validate_environment(env, "restricted"):
            return env
    raise RuntimeError("could not draw a seam-valid restricted environment")


def validate_environment(env: TopplingEnvironment, constraint: str) -> bool:
    """Check a structural constraint on quenched labels.

    ``directed``    no l labels anywhere;
    ``restricted``  directed, plus no two s labels at distance 1 or 2
                    (measured around the seam on wrapped topologies).
    """
    if constraint not in ("directed", "restricted"):
        raise ValueError(f"unknown environment constraint {constraint!r}")
    lab = env.labels
    if np.any(lab == LABEL_L):
        return False
    if constraint == "directed":
        return True
    s = lab == LABEL_S
    if env.topology.wrapped:
        near = (s & np.roll(s, -1)) | (s & np.roll(s, -2))
        return not bool(near.any())
    return not bool((s[:-1] & s[1:]).any() or (s[:-2] & s[2:]).any())


# --- state file format ---
#
# Line 1: topology header, e.g. "interval 20" or "window 200 periodic".
# Line 2: space-separated heights.
# Line 3: space-separated labels, or "-" when no quenched environment.
# Line 4 (optional): "odometer" followed by per-site toppling counts.


def write_state(
    config: HeightConfig,
    env: TopplingEnvironment | None = None,
    odometer: np.ndarray | None = None,
) -> str:
    lines = [config.topology.header()]
    lines.append(" ".join(str(int(h)) for h in config.heights))
    if env is not None:
        if env.topology != config.topology:
            raise ValueError("environment and configuration topologies differ")
        lines.append(" ".join(env.label_chars()))
    else:
        lines.append("-")
    if odometer is not None:
        if len(odometer) != config.topology.num_sites:
            raise ValueError("odometer length does not match site count")
        lines.append("odometer " + " ".join(str(int(v)) for v in odometer))
    return "\n".join(lines) + "\n"


def read_state(
    text: str,
) -> tuple[HeightConfig, TopplingEnvironment | None, np.ndarray | None]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3:
        raise ValueError("state text needs a header, a heights line, and a labels line")
    topology = Topology.from_header(lines[0])
    try:
        heights = np.array([int(tok) for tok in lines[1].split()], dtype=np.int64)
    except ValueError:
        raise ValueError("heights line must hold integers") from None
    config = HeightConfig(topology, heights)
    env: TopplingEnvironment | None = None
    if lines[2].strip() != "-":
        env = TopplingEnvironment.from_chars(topology, lines[2].split())
    odometer: np.ndarray | None = None
    if len(lines) > 3:
        parts = lines[3].split()
        if parts[0] != "odometer":
            raise ValueError(f"unexpected trailing line {lines[3]!r}")
        odometer = np.array([int(tok) for tok in parts[1:]], dtype=np.int64)
        if odometer.shape[0] != topology.num_sites:
            raise ValueError("odometer length does not match site count")
    return config, env, odometer
