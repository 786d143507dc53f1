"""Command-line front end for the simulation experiments.

Every run is described by an experiment spec: a command name plus a
validated key/value parameter set, built either from command-line flags
or from an INI-style config file (``sandlab run experiment.ini``).
Output CSV bytes are a pure function of the spec and the master seed;
trials fan out over a worker pool capped by SANDPILE_THREADS, and a
single writer emits rows in (trial, t) order regardless of completion
order.  A JSON manifest (spec hash, tool version, per-trial seeds,
output digests, wall time) is written alongside every output file.

Exit codes: 0 success, 1 spec/validation error, 2 partial failure
(some work units failed; completed rows and an error section are still
written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import secrets
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, densities, driven, fixed_energy, infinite_volume, urn
from .lattice import EnvironmentSpec
from .rng import MAX_SEED, derive_seed

COMMANDS = (
    "drive",
    "fixed-energy",
    "staircase",
    "threshold",
    "window",
    "solve-densities",
    "urn",
)


class SpecError(ValueError):
    """Invalid experiment spec; optionally tied to a config-file line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


# --- value parsers -------------------------------------------------------


def _int_in(lo: int | None = None, hi: int | None = None) -> Callable[[str], int]:
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise SpecError(f"expected an integer, got {text!r}") from None
        if lo is not None and value < lo:
            raise SpecError(f"must be >= {lo}, got {value}")
        if hi is not None and value > hi:
            raise SpecError(f"must be <= {hi}, got {value}")
        return value

    return parse


def _float_in(lo: float | None = None, strict_lo: bool = False) -> Callable[[str], float]:
    def parse(text: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise SpecError(f"expected a number, got {text!r}") from None
        if not np.isfinite(value):
            raise SpecError(f"must be finite, got {text}")
        if lo is not None and (value <= lo if strict_lo else value < lo):
            op = ">" if strict_lo else ">="
            raise SpecError(f"must be {op} {lo}, got {value}")
        return value

    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise SpecError(f"expected one of {', '.join(options)}; got {text!r}")
        return text

    return parse


def _parse_env(text: str) -> EnvironmentSpec:
    """all-s | iid-directed:<f_r> | restricted:<f_s> | annealed"""
    kind, _, arg = text.partition(":")
    try:
        if kind == "all-s":
            if arg:
                raise SpecError("all-s takes no parameter")
            return EnvironmentSpec.all_s()
        if kind == "annealed":
            if arg:
                raise SpecError("annealed takes no parameter")
            return EnvironmentSpec.annealed()
        if kind == "iid-directed":
            return EnvironmentSpec.iid_directed(_float_in(0.0)(arg))
        if kind == "restricted":
            return EnvironmentSpec.restricted(_float_in(0.0)(arg))
    except ValueError as exc:  # constructor range checks
        raise SpecError(f"bad environment {text!r}: {exc}") from None
    raise SpecError(
        f"unknown environment {text!r} "
        "(use all-s, iid-directed:<f_r>, restricted:<f_s>, or annealed)"
    )


def _parse_rho_grid(text: str) -> tuple[float, ...]:
    """lo:hi:count, a comma list, or a single value."""
    number = _float_in(0.0)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise SpecError(f"grid must be lo:hi:count, got {text!r}")
        lo, hi = number(parts[0]), number(parts[1])
        count = _int_in(2)(parts[2])
        if hi <= lo:
            raise SpecError(f"grid needs hi > lo, got {text!r}")
        return tuple(float(v) for v in np.linspace(lo, hi, count))
    if "," in text:
        return tuple(number(p.strip()) for p in text.split(","))
    return (number(text),)


def _parse_bracket(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise SpecError(f"bracket must be lo:hi, got {text!r}")
    number = _float_in(0.0)
    lo, hi = number(parts[0]), number(parts[1])
    if hi <= lo:
        raise SpecError(f"bracket needs hi > lo, got {text!r}")
    return lo, hi


_SEED = _int_in(0, MAX_SEED)


# --- option tables -------------------------------------------------------


@dataclass(frozen=True)
class Option:
    parse: Callable[[str], object]
    required: bool = False
    default: object = None
    help: str = ""


_VARIANT_BY_NAME = {
    # "paper" keeps the plus sign of the originally printed equation;
    # "corrected" flips it to match the hole-density balance
    "paper": densities.PLUS_VARIANT,
    "corrected": densities.CORRECTED,
}

OPTION_TABLES: dict[str, dict[str, Option]] = {
    "drive": {
        "env": Option(_parse_env, required=True, help="toppling environment"),
        "n": Option(_int_in(1), required=True, help="interval end index (sites 0..n)"),
        "burn": Option(_int_in(0), help="burn-in additions (default 10*n*(n+2))"),
        "sample": Option(_int_in(1), default=20_000, help="sampled additions per trial"),
        "trials": Option(_int_in(1), default=2),
        "stride": Option(_int_in(1), help="sampling stride (default sample/1000)"),
    },
    "fixed-energy": {
        "env": Option(_parse_env, required=True),
        "n": Option(_int_in(1), required=True, help="cycle index (sites 0..n)"),
        "rho": Option(_float_in(0.0), required=True, help="initial Poisson density"),
        "trials": Option(_int_in(1), default=10),
        "budget": Option(_int_in(1), default=100_000, help="parallel steps per orbit"),
    },
    "staircase": {
        "env": Option(_parse_env, required=True),
        "n": Option(_int_in(1), required=True),
        "rho-grid": Option(_parse_rho_grid, required=True, help="lo:hi:count or comma list"),
        "trials": Option(_int_in(1), default=10),
        "budget": Option(_int_in(1), default=100_000, help="parallel steps per orbit"),
    },
    "threshold": {
        "env": Option(_parse_env, required=True),
        "n": Option(_int_in(1), required=True),
        "trials": Option(_int_in(2), default=40, help="trials per bisection probe"),
        "budget": Option(_int_in(1), help="toppling budget (default c*m*log(m))"),
        "bracket": Option(_parse_bracket, default=(0.05, 1.5), help="bisection bracket lo:hi"),
        "rho-tol": Option(_float_in(0.0, strict_lo=True), default=0.01),
    },
    "window": {
        "env": Option(_parse_env, required=True),
        "n": Option(_int_in(1), required=True, help="half-width (sites -n..n)"),
        "rho": Option(_float_in(0.0), required=True),
        "t-max": Option(_int_in(1), default=10_000),
        "boundary": Option(_choice("periodic", "dissipative"), default="periodic"),
        "audit-margin": Option(_int_in(0), default=0, help="sites excluded at each end"),
        "stride": Option(_int_in(1), help="pattern snapshot stride (default t-max/100)"),
    },
    "solve-densities": {
        "f-r": Option(_float_in(0.0), required=True, help="fraction of r sites"),
        "variant": Option(_choice("paper", "corrected"), default="corrected"),
        "tol": Option(_float_in(0.0, strict_lo=True), default=1e-10),
    },
    "urn": {
        "n": Option(_int_in(2), required=True, help="number of sites"),
        "rho": Option(_float_in(0.0), required=True),
        "budget-factor": Option(
            _float_in(0.0, strict_lo=True), default=40.0, help="budget = factor*n*log(n+1)"
        ),
        "trials": Option(_int_in(1), default=10),
    },
}

_SVG_COMMANDS = ("staircase",)


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    params: dict
    seed: int
    seed_given: bool
    out: Path | None
    svg: Path | None

    def canonical_lines(self) -> list[str]:
        lines = [f"command={self.command}", f"seed={self.seed}"]
        for key in sorted(self.params):
            lines.append(f"{key}={_canonical_value(self.params[key])}")
        return lines

    def spec_hash(self) -> str:
        # output locations are deliberately left out: the hash names the
        # experiment, and the manifest records where its files landed
        text = "\n".join(self.canonical_lines())
        return hashlib.sha256(text.encode()).hexdigest()


def _canonical_value(value) -> str:
    if isinstance(value, EnvironmentSpec):
        return value.describe()
    if isinstance(value, tuple):
        return ",".join(_canonical_value(v) for v in value)
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def build_spec(
    command: str,
    raw: dict[str, tuple[str, int | None]],
    *,
    seed: tuple[str, int | None] | None,
    out: str | None,
    svg: str | None,
) -> ExperimentSpec:
    """Validate raw string parameters against the command's option table.

    ``raw`` maps option name to (text value, source line or None); line
    numbers ride along so config-file errors can point at their line.
    """
    if command not in OPTION_TABLES:
        raise SpecError(f"unknown command {command!r} (choose from {', '.join(COMMANDS)})")
    table = OPTION_TABLES[command]
    params: dict = {}
    for key, (text, line) in raw.items():
        if key not in table:
            raise SpecError(
                f"unknown key {key!r} for {command} (allowed: {', '.join(sorted(table))})",
                line,
            )
        try:
            params[key] = table[key].parse(text)
        except SpecError as exc:
            raise SpecError(f"{key}: {exc}", line if exc.line is None else exc.line) from None
    for key, option in table.items():
        if key in params:
            continue
        if option.required:
            raise SpecError(f"{command} requires {key}")
        if option.default is not None:
            params[key] = option.default
    if svg is not None and command not in _SVG_COMMANDS:
        raise SpecError(f"svg output is only supported for: {', '.join(_SVG_COMMANDS)}")
    seed_given = seed is not None
    if seed_given:
        text, line = seed
        try:
            seed_value = _SEED(text)
        except SpecError as exc:
            raise SpecError(f"seed: {exc}", line) from None
    else:
        seed_value = secrets.randbelow(MAX_SEED)
    return ExperimentSpec(
        command,
        params,
        seed_value,
        seed_given,
        Path(out) if out else None,
        Path(svg) if svg else None,
    )


# --- config files --------------------------------------------------------

_FILE_SECTIONS = ("experiment", "params")


def parse_config_file(path: Path) -> ExperimentSpec:
    """INI-style spec: an [experiment] section (command, seed, out, svg)
    plus a [params] section holding the command's own options."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from None
    section = None
    seen: dict[tuple[str, str], int] = {}
    experiment: dict[str, tuple[str, int]] = {}
    params: dict[str, tuple[str, int]] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _FILE_SECTIONS:
                raise SpecError(
                    f"unknown section [{section}] (expected {' and '.join(_FILE_SECTIONS)})",
                    lineno,
                )
            continue
        if "=" not in line:
            raise SpecError(f"expected key = value, got {line!r}", lineno)
        if section is None:
            raise SpecError("key outside of any section", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise SpecError("empty key", lineno)
        if (section, key) in seen:
            raise SpecError(f"duplicate key {key!r} (first on line {seen[section, key]})", lineno)
        seen[section, key] = lineno
        (experiment if section == "experiment" else params)[key] = (value, lineno)

    allowed = ("command", "seed", "out", "svg")
    for key, (_, lineno) in experiment.items():
        if key not in allowed:
            raise SpecError(
                f"unknown key {key!r} in [experiment] (allowed: {', '.join(allowed)})", lineno
            )
    if "command" not in experiment:
        raise SpecError("[experiment] must set command")
    command_text, command_line = experiment["command"]
    if command_text not in COMMANDS:
        raise SpecError(
            f"unknown command {command_text!r} (choose from {', '.join(COMMANDS)})", command_line
        )
    return build_spec(
        command_text,
        params,
        seed=experiment.get("seed"),
        out=experiment.get("out", (None, None))[0],
        svg=experiment.get("svg", (None, None))[0],
    )


# --- deterministic output ------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _worker_cap() -> int:
    raw = os.environ.get("SANDPILE_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise SpecError(f"SANDPILE_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise SpecError(f"SANDPILE_THREADS must be >= 1, got {cap}")
        return cap
    return os.cpu_count() or 1


def _run_units(units: list[Callable[[], object]]) -> tuple[dict[int, object], list[dict]]:
    """Run work units, possibly concurrently; results keyed by unit index
    so merge order never depends on completion order."""
    results: dict[int, object] = {}
    errors: list[dict] = []
    cap = min(_worker_cap(), len(units))
    if cap <= 1:
        for index, unit in enumerate(units):
            try:
                results[index] = unit()
            except Exception as exc:
                errors.append({"unit": index, "error": f"{type(exc).__name__}: {exc}"})
        return results, errors
    with ThreadPoolExecutor(max_workers=cap) as pool:
        futures = {index: pool.submit(unit) for index, unit in enumerate(units)}
        for index, future in futures.items():
            try:
                results[index] = future.result()
            except Exception as exc:
                errors.append({"unit": index, "error": f"{type(exc).__name__}: {exc}"})
    return results, errors


# --- svg scatter ---------------------------------------------------------


def staircase_svg(points: list[tuple[float, float]], n: int) -> str:
    """Self-contained scatter of activity (vertical) against rho
    (horizontal); byte-deterministic for identical inputs."""
    width, height = 640, 440
    left, right, top, bottom = 70, 20, 30, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    xs = [p[0] for p in points]
    lo, hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1.0

    def px(x: float) -> float:
        return left + (x - lo) / (hi - lo) * plot_w

    def py(y: float) -> float:
        return top + (1.0 - min(max(y, 0.0), 1.0)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">activity vs rho (n={n})</text>',
    ]
    axis = 'stroke="black" stroke-width="1"'
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" {axis}/>')
    parts.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" {axis}/>'
    )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(tick)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" {axis}/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{tick:g}</text>'
        )
    for tick in np.linspace(lo, hi, 6):
        x = px(float(tick))
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 4}" {axis}/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 18}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{tick:.3g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">rho</text>'
    )
    for x, y in points:
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- command runners -----------------------------------------------------
# Each returns (csv_header, rows, report_lines, per_unit_seeds).


def _run_drive(spec: ExperimentSpec):
    p = spec.params
    env: EnvironmentSpec = p["env"]
    n, sample, trials = p["n"], p["sample"], p["trials"]
    burn = p.get("burn")
    if burn is None:
        burn = driven.default_burn_in(n)
    stride = p.get("stride") or max(1, sample // 1000)
    trial_seeds = [derive_seed(spec.seed, 0xC11, t) for t in range(trials)]

    def unit(t: int) -> Callable[[], object]:
        def work():
            # burn-in rides in front of the sampled window; the series
            # keeps only the sampled part
            rows = driven.occupied_series(
                env, n, burn + sample, stride=stride, trials=1, seed=trial_seeds[t]
            )
            return [(t, tt - burn, occ) for (_, tt, occ) in rows if tt > burn]

        return work

    results, errors = _run_units([unit(t) for t in range(trials)])
    rows: list[tuple] = []
    for t in sorted(results):
        rows.extend(results[t])
    report = [f"drive: {len(rows)} rows from {len(results)}/{trials} trials"]
    if results:
        tail = [r[2] for r in rows[-max(1, len(rows) // trials // 4) :]]
        report.append(f"late occupied fraction ~ {np.mean(tail):.6f}")
    return ["trial", "t", "occupied_fraction"], rows, report, trial_seeds, errors


def _run_fixed_energy(spec: ExperimentSpec):
    from .lattice import sample_config, sample_environment
    from .topology import Topology

    p = spec.params
    env_spec: EnvironmentSpec = p["env"]
    n, rho, trials, budget = p["n"], p["rho"], p["trials"], p["budget"]
    topology = Topology.cycle(n)
    trial_seeds = [derive_seed(spec.seed, 0xFE, t) for t in range(trials)]

    def unit(t: int) -> Callable[[], object]:
        def work():
            ts = trial_seeds[t]
            config = sample_config(topology, rho, derive_seed(ts, 2))
            if env_spec.quenched:
                env = None
                if env_spec.kind != "all_s":
                    env = sample_environment(topology, env_spec, derive_seed(ts, 1))
                return fixed_energy.run_until_periodic(config, env, budget_steps=budget)
            return fixed_energy.run_until_periodic(
                config, seed=derive_seed(ts, 3), budget_steps=budget
            )

        return work

    results, errors = _run_units([unit(t) for t in range(trials)])
    rows = []
    outcomes: dict[str, int] = {}
    for t in sorted(results):
        r = results[t]
        outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
        rows.append(
            (
                t,
                r.outcome,
                r.steps,
                r.period,
                r.entry_time,
                r.mean_activity,
                r.toppling_total,
                r.quasi_stationary,
            )
        )
    report = [
        "fixed-energy outcomes: "
        + ", ".join(f"{k}={v}" for k, v in sorted(outcomes.items()))
    ]
    header = [
        "trial",
        "outcome",
        "steps",
        "period",
        "entry_time",
        "mean_activity",
        "toppling_total",
        "quasi_stationary",
    ]
    return header, rows, report, trial_seeds, errors


def _run_staircase(spec: ExperimentSpec):
    p = spec.params
    env: EnvironmentSpec = p["env"]
    n, trials, budget = p["n"], p["trials"], p["budget"]
    grid = p["rho-grid"]
    point_seeds = [derive_seed(spec.seed, 0x5CA1, k) for k in range(len(grid))]

    def unit(k: int) -> Callable[[], object]:
        def work():
            return fixed_energy.activity_density(
                env, grid[k], n, trials=trials, budget_steps=budget, seed=point_seeds[k]
            )

        return work

    results, errors = _run_units([unit(k) for k in range(len(grid))])
    rows = []
    means = []
    for k in sorted(results):
        point = results[k]
        means.append((point.rho, point.activity))
        for t, value in enumerate(point.per_trial):
            rows.append((point.rho, t, float(value), point.stderr, point.censored_fraction))
    report = [f"staircase: {len(means)}/{len(grid)} points, {trials} trials each"]
    header = ["rho", "trial", "activity", "stderr", "censored_fraction"]
    return header, rows, report, point_seeds, errors, means


def _run_threshold(spec: ExperimentSpec):
    p = spec.params
    env: EnvironmentSpec = p["env"]
    estimate = fixed_energy.threshold_density(
        env,
        p["n"],
        bracket=p["bracket"],
        rho_tol=p["rho-tol"],
        trials_per_probe=p["trials"],
        budget=p.get("budget"),
        seed=spec.seed,
    )
    rows = [
        (
            probe.rho,
            probe.successes,
            probe.trials,
            probe.p_hat,
            probe.wilson_low,
            probe.wilson_high,
            probe.ambiguous,
        )
        for probe in estimate.probes
    ]
    report = [
        f"threshold estimate {estimate.value:.4f} "
        f"(bisection interval {estimate.low:.4f}..{estimate.high:.4f}, "
        f"{len(estimate.probes)} probes)"
    ]
    header = ["rho", "successes", "trials", "p_hat", "wilson_low", "wilson_high", "ambiguous"]
    return header, rows, report, [spec.seed], []


def _run_window(spec: ExperimentSpec):
    p = spec.params
    t_max = p["t-max"]
    stride = p.get("stride") or max(1, t_max // 100)
    result = infinite_volume.window_run(
        p["env"],
        p["rho"],
        p["n"],
        t_max,
        boundary=p["boundary"],
        seed=spec.seed,
        pattern_stride=stride,
        pattern_margin=p["audit-margin"],
    )
    snapshots = dict(result.pattern_rows)
    patterns = list(infinite_volume.DECAYING_PATTERNS)
    rows = []
    for t, alpha in enumerate(result.alpha):
        snap = snapshots.get(t)
        rows.append(
            (t, float(alpha), *(snap.get(q) if snap else None for q in patterns))
        )
    status = (
        f"stabilized at step {result.stabilized_at}"
        if result.stabilized_at is not None
        else f"still active after {len(result.alpha)} steps"
    )
    report = [
        f"window: {status}; time-averaged activity {result.time_average():.4f}",
        "late pattern densities: "
        + ", ".join(f"{q}={result.late_pattern_density(q):.2e}" for q in patterns),
    ]
    header = ["t", "active_fraction"] + [f"pattern_{q}" for q in patterns]
    return header, rows, report, [spec.seed], []


def _run_solve_densities(spec: ExperimentSpec):
    p = spec.params
    report_obj = densities.density_report(
        p["f-r"], p["tol"], variant=_VARIANT_BY_NAME[p["variant"]]
    )
    rows = [
        ("f_r", report_obj.f_r),
        ("rho_stationary", report_obj.rho_stationary),
        ("rho_transition", report_obj.rho_transition),
        ("rho_transition_plus_variant", report_obj.rho_transition_plus_variant),
        ("hole_at_transition", report_obj.hole_at_transition),
        ("excess_at_transition", report_obj.excess_at_transition),
        ("residual", report_obj.residual),
    ]
    return ["quantity", "value"], rows, report_obj.lines(), [spec.seed], []


def _run_urn(spec: ExperimentSpec):
    p = spec.params
    n, rho, trials = p["n"], p["rho"], p["trials"]
    budget = int(p["budget-factor"] * n * np.log(n + 1))
    trial_seeds = [derive_seed(spec.seed, 0x0E, t) for t in range(trials)]

    def unit(t: int) -> Callable[[], object]:
        def work():
            return urn.simulate_kn_manna(n, rho, budget=budget, seed=trial_seeds[t])

        return work

    results, errors = _run_units([unit(t) for t in range(trials)])
    rows = []
    stopped = 0
    moves = []
    for t in sorted(results):
        run = results[t]
        stopped += run.stopped
        if run.stopped:
            moves.append(run.moves)
        rows.append((t, run.stopped, run.topplings, run.moves, run.g0, run.m))
    report = [f"urn: {stopped}/{len(results)} runs stopped within budget {budget}"]
    if moves:
        report.append(f"mean moves to stop {np.mean(moves):.1f}")
    header = ["trial", "stopped", "topplings", "moves", "g0", "m"]
    return header, rows, report, trial_seeds, errors


_RUNNERS = {
    "drive": _run_drive,
    "fixed-energy": _run_fixed_energy,
    "staircase": _run_staircase,
    "threshold": _run_threshold,
    "window": _run_window,
    "solve-densities": _run_solve_densities,
    "urn": _run_urn,
}


# --- orchestration -------------------------------------------------------


def run(spec: ExperimentSpec) -> int:
    started = time.monotonic()
    outcome = _RUNNERS[spec.command](spec)
    header, rows, report, unit_seeds, errors = outcome[:5]
    svg_points = outcome[5] if len(outcome) > 5 else None

    outputs: list[dict] = []
    if spec.out is not None:
        write_csv(spec.out, header, rows)
        outputs.append(
            {"path": str(spec.out), "sha256": _sha256(spec.out), "rows": len(rows)}
        )
    if spec.svg is not None:
        if svg_points is None:
            raise SpecError(f"{spec.command} does not produce an svg")
        spec.svg.write_text(staircase_svg(svg_points, spec.params["n"]))
        outputs.append({"path": str(spec.svg), "sha256": _sha256(spec.svg)})

    for line in report:
        print(line)
    if outputs:
        manifest = {
            "command": spec.command,
            "tool_version": __version__,
            "spec_hash": spec.spec_hash(),
            "spec": spec.canonical_lines(),
            "seed": spec.seed,
            "seed_source": "given" if spec.seed_given else "auto",
            "unit_seeds": [int(s) for s in unit_seeds],
            "outputs": outputs,
            "wall_time_s": round(time.monotonic() - started, 3),
        }
        if errors:
            manifest["errors"] = errors
        manifest_path = Path(str(spec.out or spec.svg) + ".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
        print(f"manifest: {manifest_path}")
    if errors:
        for entry in errors:
            print(f"unit {entry['unit']} failed: {entry['error']}", file=sys.stderr)
        return 2
    return 0


def _add_command_parsers(subparsers) -> None:
    for command, table in OPTION_TABLES.items():
        sub = subparsers.add_parser(command, help=f"{command} experiment")
        for key, option in table.items():
            sub.add_argument(f"--{key}", dest=key, metavar="V", help=option.help or None)
        sub.add_argument("--seed", metavar="V", help="master seed (auto if omitted)")
        sub.add_argument("--out", metavar="CSV", help="output csv path")
        if command in _SVG_COMMANDS:
            sub.add_argument("--svg", metavar="SVG", help="scatter plot path")


def parse_args(argv: list[str]) -> ExperimentSpec:
    parser = argparse.ArgumentParser(
        prog="sandlab", description="sandpile experiment runner"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_command_parsers(subparsers)
    run_parser = subparsers.add_parser("run", help="run an experiment config file")
    run_parser.add_argument("config", metavar="FILE")
    namespace = parser.parse_args(argv)
    if namespace.command == "run":
        return parse_config_file(Path(namespace.config))
    table = OPTION_TABLES[namespace.command]
    raw = {
        key: (getattr(namespace, key), None)
        for key in table
        if getattr(namespace, key) is not None
    }
    seed = (namespace.seed, None) if namespace.seed is not None else None
    return build_spec(
        namespace.command,
        raw,
        seed=seed,
        out=namespace.out,
        svg=getattr(namespace, "svg", None),
    )


def main(argv: list[str] | None = None) -> int:
    try:
        spec = parse_args(sys.argv[1:] if argv is None else argv)
        return run(spec)
    except SpecError as exc:
        where = f"line {exc.line}: " if exc.line is not None else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
