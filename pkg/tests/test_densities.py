import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sandlab import densities
from sandlab.lattice import sample_config
from sandlab.topology import Topology

# roots of the transition-density equation, frozen from high-precision
# bisection runs (mpmath, 50 digits) so regressions show up immediately
TRANSITION_ROOTS = {
    (3 / 4, densities.CORRECTED): 0.556333631315652,
    (3 / 4, densities.PLUS_VARIANT): 0.786083184502786,
    (1.0, densities.CORRECTED): 0.0,
    (1.0, densities.PLUS_VARIANT): 0.639232271380024,
    (2 / 3, densities.CORRECTED): 0.6329205197689589,
    (2 / 3, densities.PLUS_VARIANT): 0.8308512699150015,
}


def test_stationary_density_endpoints():
    assert densities.stationary_density(0.0) == 1.0
    assert densities.stationary_density(1.0) == 0.5
    assert math.isclose(densities.stationary_density(0.75), 0.625)


def test_stationary_density_rejects_out_of_range():
    with pytest.raises(ValueError):
        densities.stationary_density(1.5)


def test_parity_zero_probability_limits():
    assert densities.parity_zero_probability(0.0) == 1.0
    assert math.isclose(
        densities.parity_zero_probability(1.0), 0.5676676416183064, rel_tol=1e-12
    )
    assert math.isclose(densities.parity_zero_probability(50.0), 0.5, rel_tol=1e-9)


def test_parity_zero_probability_monte_carlo():
    config = sample_config(Topology.interval(10**6), 1.0, seed=3)
    frac_even = np.mean(config.heights % 2 == 0)
    sigma = 0.5 / math.sqrt(config.topology.num_sites)
    assert abs(frac_even - densities.parity_zero_probability(1.0)) < 5 * sigma


def test_hole_probability_values():
    assert math.isclose(densities.hole_probability(0.0, 0.75), 0.25)
    # large rho: parity is a fair coin, so the hole chance tends to (1-f_r)/4
    assert math.isclose(densities.hole_probability(60.0, 0.75), 0.25 / 4, rel_tol=1e-9)
    assert math.isclose(densities.hole_probability(60.0, 1.0), 0.0, abs_tol=1e-12)


def test_excess_pair_mean_at_zero():
    assert densities.excess_pair_mean(0.0, densities.CORRECTED) == 0.0
    assert math.isclose(densities.excess_pair_mean(0.0, densities.PLUS_VARIANT), -0.5)


def test_excess_pair_mean_monte_carlo():
    # E(x) = (eta - eta mod 2) / 2 averaged over iid Poisson heights
    config = sample_config(Topology.interval(10**6), 1.0, seed=5)
    h = config.heights
    sample_mean = np.mean((h - (h % 2)) / 2)
    sigma = np.std((h - (h % 2)) / 2) / math.sqrt(h.size)
    assert abs(sample_mean - densities.excess_pair_mean(1.0)) < 5 * sigma


def test_transition_density_frozen_roots():
    for (f_r, variant), expected in TRANSITION_ROOTS.items():
        got = densities.transition_density(f_r, variant)
        assert got == pytest.approx(expected, abs=1e-9), (f_r, variant)


def test_transition_density_residual_small():
    root = densities.transition_density(0.75, densities.CORRECTED, tol=1e-12)
    assert abs(densities.transition_balance(root, 0.75, densities.CORRECTED)) < 1e-10


def test_transition_density_rejects_bad_variant():
    with pytest.raises(ValueError):
        densities.transition_density(0.75, "original")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.55, 0.99))
def test_corrected_root_decreases_in_f_r(f_r):
    lo = densities.transition_density(f_r, densities.CORRECTED)
    hi = densities.transition_density(min(f_r + 0.01, 1.0), densities.CORRECTED)
    assert hi <= lo + 1e-12


def test_density_report_fields():
    report = densities.density_report(0.75)
    assert report.f_r == 0.75
    assert math.isclose(report.rho_stationary, 0.625)
    assert report.rho_transition == pytest.approx(0.556333631315652, abs=1e-9)
    assert report.rho_transition_plus_variant == pytest.approx(0.786083184502786, abs=1e-9)
    assert report.rho_transition < report.rho_stationary
    assert abs(report.residual) < 1e-9
    assert math.isclose(
        report.hole_at_transition, densities.hole_probability(report.rho_transition, 0.75)
    )
    assert any("transition" in line for line in report.lines())


def test_density_report_variant_switch():
    report = densities.density_report(0.75, variant=densities.PLUS_VARIANT)
    at = report.rho_transition_plus_variant
    assert math.isclose(report.hole_at_transition, densities.hole_probability(at, 0.75))
    assert abs(densities.transition_balance(at, 0.75, densities.PLUS_VARIANT)) < 1e-9


def test_hole_matches_parity_profile_monte_carlo():
    # hole = (1 - f_r) * p0(rho)^2: both flanking parities even and the
    # site's label not r, checked against an iid sample at the transition
    f_r = 0.75
    rho = densities.transition_density(f_r, densities.CORRECTED)
    config = sample_config(Topology.interval(10**6), rho, seed=11)
    frac_even = np.mean(config.heights % 2 == 0)
    predicted = densities.hole_probability(rho, f_r)
    sigma_even = 0.5 / math.sqrt(config.topology.num_sites)
    sigma = 2 * frac_even * sigma_even * (1 - f_r)
    assert abs(frac_even**2 * (1 - f_r) - predicted) < 5 * sigma
