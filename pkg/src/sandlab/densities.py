"""Closed-form densities and the transition-density equation.

For directed environments (labels s and r only, r-fraction f_r) the driven
stationary expected height is

    rho_s(f_r) = 1 - f_r / 2.

For restricted directed environments started from i.i.d. Poisson(rho)
heights, stabilizability hinges on a balance between excess particle
pairs and parity holes.  Under Poisson(rho):

    parity_zero_probability(rho) = (1 + exp(-2 rho)) / 2
    hole_probability(rho, f_r)   = (1 - f_r)/4 * (1 + exp(-2 rho))^2
    excess_pair_mean(rho)        = (rho - (1 - exp(-2 rho))/2) / 2

and the transition density rho_tr is the unique root of

    excess_pair_mean(rho) = hole_probability(rho, f_r).

The excess-pair mean is E[(eta - eta mod 2)/2]: writing out the Poisson
expectation gives the ``1 - exp(-2 rho)`` form above ("corrected"); the
same expression also circulates with the inner sign flipped
("plus_variant", a sign slip: it is negative at rho = 0, where the true
mean is 0, and at f_r = 1, where holes cannot exist, it puts the root near
0.64 instead of 0).  Both variants are exposed; the corrected form is the
default everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CORRECTED = "corrected"
PLUS_VARIANT = "plus_variant"
_VARIANTS = (CORRECTED, PLUS_VARIANT)

_BRACKET_HI = 4.0


def stationary_density(f_r: float) -> float:
    """Driven stationary expected height for a directed environment."""
    _check_fraction("f_r", f_r)
    return 1.0 - f_r / 2.0


def parity_zero_probability(rho: float) -> float:
    """P(Poisson(rho) is even)."""
    _check_density(rho)
    return 0.5 * (1.0 + math.exp(-2.0 * rho))


def hole_probability(rho: float, f_r: float) -> float:
    """Probability that a given site is an s-site whose both neighbors
    hold an even particle count (a parity hole)."""
    _check_density(rho)
    _check_fraction("f_r", f_r)
    e = math.exp(-2.0 * rho)
    return (1.0 - f_r) / 4.0 * (1.0 + e) ** 2


def excess_pair_mean(rho: float, variant: str = CORRECTED) -> float:
    """E[(eta - eta mod 2)/2] for eta ~ Poisson(rho); see module docstring
    for the plus_variant sign slip."""
    _check_density(rho)
    _check_variant(variant)
    e = math.exp(-2.0 * rho)
    inner = (1.0 - e) if variant == CORRECTED else (1.0 + e)
    return 0.5 * (rho - 0.5 * inner)


def transition_balance(rho: float, f_r: float, variant: str = CORRECTED) -> float:
    """Excess-pair mean minus hole probability; rho_tr is its root."""
    return excess_pair_mean(rho, variant) - hole_probability(rho, f_r)


def transition_density(
    f_r: float,
    variant: str = CORRECTED,
    tol: float = 1e-10,
    check_unique: bool = True,
) -> float:
    """Solve transition_balance(rho, f_r) = 0 for rho by bisection.

    The balance is negative at rho = 0 (or exactly zero when f_r = 1 in
    the corrected variant) and positive for large rho, so a root exists in
    [0, 4]; ``check_unique`` additionally scans the bracket for multiple
    sign changes and raises if the root is not unique at that resolution.
    """
    _check_fraction("f_r", f_r)
    _check_variant(variant)
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    def g(rho: float) -> float:
        return transition_balance(rho, f_r, variant)

    lo, hi = 0.0, _BRACKET_HI
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return 0.0
    if glo > 0.0 or ghi < 0.0:
        raise ValueError(f"no sign change for f_r={f_r} on [{lo}, {hi}]")
    if check_unique:
        _assert_single_crossing(g, lo, hi, max(tol, 1e-3))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _assert_single_crossing(g, lo: float, hi: float, resolution: float) -> None:
    steps = max(8, int(math.ceil((hi - lo) / resolution)))
    xs = [lo + (hi - lo) * i / steps for i in range(steps + 1)]
    signs = [g(x) > 0.0 for x in xs]
    crossings = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    if crossings != 1:
        raise ValueError(f"expected exactly one sign change, found {crossings}")


@dataclass(frozen=True)
class DensityReport:
    """Solved densities for one directed environment."""

    f_r: float
    rho_stationary: float
    rho_transition: float
    rho_transition_plus_variant: float
    hole_at_transition: float
    excess_at_transition: float
    residual: float

    def lines(self) -> list[str]:
        return [
            f"f_r                     {self.f_r:.6f}",
            f"rho_stationary          {self.rho_stationary:.6f}",
            f"rho_transition          {self.rho_transition:.6f}",
            f"  (plus-sign variant)   {self.rho_transition_plus_variant:.6f}",
            f"hole prob at rho_tr     {self.hole_at_transition:.6f}",
            f"excess mean at rho_tr   {self.excess_at_transition:.6f}",
            f"balance residual        {self.residual:.3e}",
        ]


def density_report(
    f_r: float, tol: float = 1e-10, variant: str = CORRECTED
) -> DensityReport:
    """Solve both equation variants; the diagnostics (hole probability,
    excess mean, residual) are evaluated at the root of ``variant``."""
    rho_tr = transition_density(f_r, CORRECTED, tol)
    rho_tr_plus = transition_density(f_r, PLUS_VARIANT, tol)
    at = rho_tr if variant == CORRECTED else rho_tr_plus
    return DensityReport(
        f_r=f_r,
        rho_stationary=stationary_density(f_r),
        rho_transition=rho_tr,
        rho_transition_plus_variant=rho_tr_plus,
        hole_at_transition=hole_probability(at, f_r),
        excess_at_transition=excess_pair_mean(at, variant),
        residual=transition_balance(at, f_r, variant),
    )


def _check_density(rho: float) -> None:
    if not (rho >= 0.0 and math.isfinite(rho)):
        raise ValueError(f"density must be finite and >= 0, got {rho}")


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def _check_variant(variant: str) -> None:
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}, got {variant!r}")
