"""Graph topologies the sandpile models run on.

Four families are supported:

* ``interval``   sites 0..n on a line; particles shed past either end are lost.
* ``cycle``      sites 0..n with 0 and n adjacent; conservative.
* ``window``     sites 0..n on a line, used as a finite proxy for the infinite
                 lattice; boundary mode is ``periodic`` (wrap, conservative)
                 or ``dissipative`` (open ends, like an interval).
* ``complete``   n sites, every site adjacent to every site including itself.

``n`` follows the index convention of the 1D families (n+1 sites); the
complete graph has exactly n sites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INTERVAL = "interval"
CYCLE = "cycle"
WINDOW = "window"
COMPLETE = "complete"

_KINDS = (INTERVAL, CYCLE, WINDOW, COMPLETE)
_BOUNDARIES = ("periodic", "dissipative")


@dataclass(frozen=True)
class Topology:
    kind: str
    n: int
    boundary: str = field(default="")

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"topology needs n >= 1, got {self.n}")
        if self.kind == WINDOW:
            if self.boundary not in _BOUNDARIES:
                raise ValueError(
                    f"window boundary must be one of {_BOUNDARIES}, got {self.boundary!r}"
                )
        elif self.boundary:
            raise ValueError(f"{self.kind} topology takes no boundary mode")

    # --- constructors ---

    @staticmethod
    def interval(n: int) -> "Topology":
        return Topology(INTERVAL, n)

    @staticmethod
    def cycle(n: int) -> "Topology":
        return Topology(CYCLE, n)

    @staticmethod
    def window(n: int, boundary: str = "periodic") -> "Topology":
        return Topology(WINDOW, n, boundary)

    @staticmethod
    def complete(n: int) -> "Topology":
        return Topology(COMPLETE, n)

    # --- structure ---

    @property
    def num_sites(self) -> int:
        return self.n if self.kind == COMPLETE else self.n + 1

    @property
    def wrapped(self) -> bool:
        """True when site 0 and the last site are adjacent."""
        return self.kind == CYCLE or (self.kind == WINDOW and self.boundary == "periodic")

    @property
    def dissipative(self) -> bool:
        """True when toppling at the ends can lose particles."""
        return self.kind == INTERVAL or (self.kind == WINDOW and self.boundary == "dissipative")

    @property
    def one_dimensional(self) -> bool:
        return self.kind != COMPLETE

    def neighbors(self, x: int) -> tuple[int, ...]:
        """Neighbor sites of x; off-lattice ends are simply absent."""
        m = self.num_sites
        if not 0 <= x < m:
            raise IndexError(f"site {x} out of range for {self}")
        if self.kind == COMPLETE:
            return tuple(range(m))
        if self.wrapped:
            return ((x - 1) % m, (x + 1) % m)
        out = []
        if x > 0:
            out.append(x - 1)
        if x < m - 1:
            out.append(x + 1)
        return tuple(out)

    def header(self) -> str:
        """One-line text form used by the state file format."""
        if self.kind == WINDOW:
            return f"{self.kind} {self.n} {self.boundary}"
        return f"{self.kind} {self.n}"

    @staticmethod
    def from_header(line: str) -> "Topology":
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"malformed topology header {line!r}")
        kind = parts[0]
        try:
            n = int(parts[1])
        except ValueError:
            raise ValueError(f"malformed topology size in header {line!r}") from None
        boundary = parts[2] if len(parts) > 2 else ""
        return Topology(kind, n, boundary)
