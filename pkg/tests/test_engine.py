import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sandlab.engine import (
    LabelStack,
    check_abelian,
    default_budget,
    parallel_step,
    stabilize,
    topple,
)
from sandlab.lattice import (
    LABEL_L,
    LABEL_S,
    EnvironmentSpec,
    HeightConfig,
    TopplingEnvironment,
    all_s_environment,
    sample_config,
    sample_environment,
)
from sandlab.topology import Topology


def _config(topo, heights):
    return HeightConfig(topo, np.array(heights, dtype=np.int64))


I2 = Topology.interval(2)


def test_topple_s_rule():
    out = topple(_config(I2, (0, 2, 0)), None, 1)
    assert tuple(out.heights) == (1, 0, 1)


def test_topple_r_rule_at_left_end():
    env = TopplingEnvironment.from_chars(I2, "r s s".split())
    out = topple(_config(I2, (2, 0, 0)), env, 0)
    assert tuple(out.heights) == (0, 2, 0)


def test_topple_classical_boundary_loss():
    out = topple(_config(I2, (2, 0, 0)), None, 0)
    assert tuple(out.heights) == (0, 1, 0)
    assert out.total == 1


def test_topple_stable_site_rejected():
    with pytest.raises(ValueError):
        topple(_config(I2, (1, 1, 0)), None, 0)


def test_stabilize_interval_trace():
    # (2,1,1) drains one particle over each end; the final configuration
    # and odometer are forced by the abelian property
    result = stabilize(_config(I2, (2, 1, 1)), all_s_environment(I2))
    assert result.stable
    assert tuple(result.config.heights) == (1, 1, 0)
    assert tuple(result.odometer) == (1, 1, 1)
    assert result.lost_left == 1
    assert result.lost_right == 1
    assert result.lost == 2


def test_stabilize_stable_input_is_noop():
    config = _config(I2, (1, 0, 1))
    result = stabilize(config, all_s_environment(I2))
    assert tuple(result.config.heights) == (1, 0, 1)
    assert result.topplings == 0
    assert not result.odometer.any()


def test_stabilize_conserves_on_cycle():
    topo = Topology.cycle(30)
    config = sample_config(topo, 0.8, seed=9)
    result = stabilize(config, all_s_environment(topo))
    assert result.stable
    assert result.config.total == config.total
    assert result.lost == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 24), st.integers(0, 2**31), st.data())
def test_cycle_below_capacity_stabilizes_with_idle_site(n, seed, data):
    # any cycle configuration with fewer particles than sites stabilizes
    # and leaves at least one site untouched
    topo = Topology.cycle(n)
    m = topo.num_sites
    total = data.draw(st.integers(0, m - 1))
    rng = np.random.default_rng(seed)
    heights = np.bincount(rng.integers(0, m, size=total), minlength=m)
    result = stabilize(HeightConfig(topo, heights), all_s_environment(topo))
    assert result.stable
    assert (result.odometer == 0).any()
    assert result.config.total == total


def test_budget_cap_reports_unstable():
    topo = Topology.cycle(50)
    config = sample_config(topo, 3.0, seed=2)
    result = stabilize(config, all_s_environment(topo), budget=10)
    assert not result.stable
    assert result.topplings <= 10


def test_budget_resume_matches_single_run():
    topo = Topology.interval(40)
    config = sample_config(topo, 2.0, seed=8)
    env = all_s_environment(topo)
    full = stabilize(config, env)
    capped = stabilize(config, env, budget=50)
    resumed = stabilize(capped.config, env, budget=None)
    assert resumed.stable
    assert np.array_equal(resumed.config.heights, full.config.heights)
    assert np.array_equal(capped.odometer + resumed.odometer, full.odometer)


def test_default_budget_grows():
    assert default_budget(10) < default_budget(100) < default_budget(10_000)


# --- parallel step ---


def test_parallel_step_fixed_point():
    config = _config(I2, (1, 1, 1))
    assert np.array_equal(parallel_step(config).heights, config.heights)


def test_parallel_step_all_unstable_interior_unchanged():
    topo = Topology.cycle(9)
    config = HeightConfig(topo, np.full(10, 2))
    out = parallel_step(config)
    assert np.array_equal(out.heights, config.heights)


def test_parallel_step_conserves_on_cycle():
    topo = Topology.cycle(40)
    config = sample_config(topo, 1.7, seed=3)
    assert parallel_step(config).total == config.total


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31))
def test_parallel_step_mirror_pair(n, seed):
    # step and the height reflection eta -> 3 - eta commute on cycles
    topo = Topology.cycle(n)
    rng = np.random.default_rng(seed)
    heights = rng.integers(0, 4, size=topo.num_sites)
    config = HeightConfig(topo, heights)
    mirrored = HeightConfig(topo, 3 - heights)
    left = parallel_step(mirrored).heights
    right = 3 - parallel_step(config).heights
    assert np.array_equal(left, right)


# --- abelian property ---


def test_abelian_classical_interval():
    config = sample_config(Topology.interval(20), 1.5, seed=1)
    assert check_abelian(config, n_orders=50, seed=4)


def test_abelian_quenched_restricted():
    topo = Topology.interval(20)
    env = sample_environment(topo, EnvironmentSpec.restricted(0.25), seed=6)
    config = sample_config(topo, 1.5, seed=7)
    assert check_abelian(config, env, n_orders=50, seed=5)


def test_abelian_single_unstable_site():
    config = _config(I2, (0, 3, 0))
    assert check_abelian(config, n_orders=10, seed=0)


def test_abelian_with_committed_stacks():
    # with the per-site label sequences fixed up front, the annealed
    # model is abelian too
    config = sample_config(Topology.interval(15), 1.4, seed=13)
    assert check_abelian(config, stack_seed=99, n_orders=25, seed=14)


# --- label stacks and annealed stabilization ---


def test_label_stack_deterministic():
    topo = Topology.interval(12)
    a = LabelStack(topo, seed=5)
    b = LabelStack(topo, seed=5)
    for site in range(13):
        assert a.peek(site) == b.peek(site)
        for _ in range(40):
            assert a.pop(site) == b.pop(site)


def test_label_stack_frequencies():
    stack = LabelStack(Topology.interval(1), seed=17)
    labels = np.array([stack.pop(0) for _ in range(30_000)])
    f_s = np.mean(labels == LABEL_S)
    f_l = np.mean(labels == LABEL_L)
    assert abs(f_s - 0.5) < 0.02
    assert abs(f_l - 0.25) < 0.02


def test_stack_stabilize_conserves_on_cycle():
    topo = Topology.cycle(24)
    config = sample_config(topo, 0.5, seed=3)
    assert config.total < topo.num_sites  # otherwise no stable target exists
    stack = LabelStack(topo, seed=8)
    result = stabilize(config, stack=stack)
    assert result.stable
    assert result.config.total == config.total


def test_annealed_seeded_stabilize_deterministic():
    topo = Topology.interval(60)
    config = sample_config(topo, 1.8, seed=21)
    a = stabilize(config, seed=33)
    b = stabilize(config, seed=33)
    assert np.array_equal(a.config.heights, b.config.heights)
    assert a.topplings == b.topplings


def test_stabilize_requires_single_label_source():
    topo = Topology.interval(5)
    config = sample_config(topo, 1.0, seed=0)
    env = all_s_environment(topo)
    with pytest.raises(ValueError):
        stabilize(config, env, seed=3)


def test_complete_graph_stabilize_parks_particles():
    topo = Topology.complete(40)
    config = sample_config(topo, 0.5, seed=10)
    result = stabilize(config, seed=11)
    assert result.stable
    assert result.config.total == config.total
    assert result.config.heights.max() <= 1


def test_complete_graph_overfull_never_stops():
    topo = Topology.complete(30)
    config = HeightConfig(topo, np.full(30, 2))
    result = stabilize(config, seed=1, budget=200_000)
    assert not result.stable
