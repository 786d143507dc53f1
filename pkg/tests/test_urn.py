import math

import numpy as np
import pytest

from sandlab import densities, urn


def test_initial_green_fraction_values():
    assert urn.initial_green_fraction(0.0) == 0.0
    assert math.isclose(urn.initial_green_fraction(1.0), 0.5 * (1 - math.exp(-2)))
    # a ball is green when its site parity is odd
    for rho in (0.3, 1.0, 2.5):
        assert math.isclose(
            urn.initial_green_fraction(rho), 1 - densities.parity_zero_probability(rho)
        )


def test_initial_green_fraction_monte_carlo():
    rho, m = 1.2, 200_000
    rng = np.random.default_rng(8)
    odd = np.mean(rng.poisson(rho, m) % 2 == 1)
    sigma = 0.5 / math.sqrt(m)
    assert abs(odd - urn.initial_green_fraction(rho)) < 5 * sigma


def test_urn_state_moves_flip_colors():
    state = urn.UrnState(np.array([True, False, True, False]), target=2)
    assert state.green == 2
    state.move(1)
    assert state.green == 3
    assert not state.stopped
    state.move(0)
    assert state.green == 2
    assert state.stopped  # green count equals the target again


def test_urn_matches_complete_graph_dynamics():
    # supercritical runs never stop, so cap the coupled walk per trial
    for trial in range(12):
        assert urn.urn_equivalence_check(100, 1.1, seed=trial, max_topplings=5_000)


def test_equivalence_also_holds_subcritical():
    for trial in range(20):
        assert urn.urn_equivalence_check(60, 0.3, seed=1000 + trial)


def test_overfull_run_never_stops():
    run = urn.simulate_kn_manna(200, 2.0, budget=100_000, seed=5)
    assert run.m > run.n  # more balls than sites: no stable snapshot exists
    assert not run.stopped
    assert run.moves == 2 * run.topplings


def test_empty_run_stops_immediately():
    run = urn.simulate_kn_manna(100, 0.0, seed=1)
    assert run.stopped
    assert run.topplings == 0
    assert run.m == 0


def test_g_series_recording():
    run = urn.simulate_kn_manna(300, 1.5, budget=5_000, seed=7, record_stride=100)
    assert not run.stopped
    assert run.record_stride == 100
    assert run.g_series.size == 5_000 // 100
    # the green count random-walks around half the sites
    late = run.g_series[run.g_series.size // 2 :]
    assert abs(late.mean() / run.n - 0.5) < 0.1


def test_stop_probability_extremes():
    assert urn.stop_probability(400, 0.05, trials=10, seed=3) == 1.0
    assert urn.stop_probability(2000, 0.6, trials=10, seed=3) == 0.0


def test_stopping_time_scaling_is_linear():
    ns = (1_000, 10_000, 100_000)
    sizes, means, slope = urn.stopping_time_scaling(0.4, ns, trials=5, seed=2)
    assert tuple(sizes) == ns
    assert np.all(np.diff(means) > 0)
    assert 0.9 < slope < 1.3
    # moves per site stay near a constant fraction of n
    assert 0.2 < means[-1] / ns[-1] < 0.7


def test_supercritical_scaling_raises():
    with pytest.raises(RuntimeError):
        urn.stopping_time_scaling(0.8, (500, 1000), trials=2, seed=4)


def test_sink_density_two_sites():
    assert urn.sink_density_two_sites_exact() == 0.75
    est = urn.sink_stationary_density(2, 4_000, trials=4, seed=6)
    # snapshot frame: conditioning on a stable snapshot biases upward
    assert abs(est.snapshot_mean - 0.75) < 0.05
    # move frame: plain Ehrenfest balance, one half at every size
    assert abs(est.mean - 0.5) < 0.05


def test_sink_density_zero_additions():
    est = urn.sink_stationary_density(50, 0, trials=2, seed=1)
    assert est.mean == 0.0


def test_sink_density_move_frame_half():
    est = urn.sink_stationary_density(128, 20_000, trials=4, seed=11)
    assert est.stderr > 0
    assert abs(est.mean - 0.5) < max(5 * est.stderr, 0.01)
    # finite-size snapshot bias is upward and visible at this size
    assert est.snapshot_mean > est.mean


@pytest.mark.slow
def test_sink_density_move_frame_half_large():
    est = urn.sink_stationary_density(1_000, 1_000_000, trials=2, seed=12)
    assert abs(est.mean - 0.5) < max(3 * est.stderr, 2e-3)
