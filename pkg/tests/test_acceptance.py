"""Acceptance suite: one test per release criterion, each printing a
single [PASS] line with the measured numbers when it holds.

Every run below is seeded, so the suite is deterministic; statistical
bounds were sized so the frozen seeds pass with a wide margin.
"""

import itertools
import math
import time

import numpy as np

from sandlab import densities, driven, urn
from sandlab import fixed_energy as fe
from sandlab import infinite_volume as iv
from sandlab.engine import check_abelian, parallel_step, stabilize
from sandlab.lattice import (
    EnvironmentSpec,
    HeightConfig,
    all_s_environment,
    sample_config,
    sample_environment,
)
from sandlab.topology import Topology


def _report(n, text):
    print(f"\n[PASS] criterion {n}: {text}")


def test_criterion_01_classical_interval_density():
    t0 = time.time()
    est = driven.estimate_stationary_density(
        EnvironmentSpec.all_s(), 20, 25_000, trials=4, seed=101
    )
    target = 21 / 22
    assert est.within(target, 3.0)
    _report(
        1,
        f"classical driven I_20 density {est.mean:.6f} within 3 stderr of "
        f"{target:.6f} (stderr {est.stderr:.2e}, {time.time() - t0:.1f}s)",
    )


def test_criterion_02_quenched_directed_density():
    t0 = time.time()
    est = driven.estimate_stationary_density(
        EnvironmentSpec.iid_directed(0.75),
        1000,
        300_000,
        burn_in=100_000,
        trials=12,
        seed=7,
    )
    assert est.within(0.625, 3.0)
    _report(
        2,
        f"driven f_r=3/4 density {est.mean:.5f} within 3 stderr of 0.625 "
        f"(stderr {est.stderr:.1e}, {time.time() - t0:.1f}s)",
    )


def test_criterion_03_flip_lemma_exhaustive():
    t0 = time.time()
    checked = 0
    for n in range(1, 13):
        topo = Topology.interval(n)
        env = driven.flip_environment(topo)
        for config in driven.flip_states(topo):
            for site in range(topo.num_sites):
                predicted = driven.lemma_flip(config, site)
                actual = driven.drive_step(config, env, site).config
                assert np.array_equal(predicted.heights, actual.heights), (n, site)
                checked += 1
    _report(3, f"flip lemma exact on {checked} cases, n <= 12 ({time.time() - t0:.2f}s)")


def test_criterion_04_parity_table_exhaustive():
    t0 = time.time()
    rows_seen = set()
    for a, c in itertools.product(range(4), repeat=2):
        for b in range(2, 8):
            actual = iv.local_parity_stabilize((a, b, c))
            predicted = iv.parity_table_prediction((a, b, c))
            assert np.array_equal(actual, predicted), (a, b, c)
            rows_seen.add((a % 2, b % 2, c % 2))
    assert len(rows_seen) == 8
    _report(4, f"parity table reproduces all 8 rows over 96 triples ({time.time() - t0:.2f}s)")


def test_criterion_05_transition_density_root():
    root = densities.transition_density(0.75, densities.CORRECTED)
    assert abs(root - 0.556) < 0.001
    _report(5, f"solver root at f_r=3/4 is {root:.6f} = 0.556 +- 0.001")


def test_criterion_06_threshold_matches_solver():
    t0 = time.time()
    est = fe.threshold_density(
        EnvironmentSpec.restricted(0.25),
        4000,
        bracket=(0.3, 0.9),
        rho_tol=0.005,
        trials_per_probe=40,
        seed=0,
    )
    root = densities.transition_density(0.75, densities.CORRECTED)
    assert abs(est.value - root) < 0.02
    _report(
        6,
        f"fixed-energy threshold {est.value:.4f} vs solver root {root:.4f} "
        f"(diff {abs(est.value - root):.4f} < 0.02, {time.time() - t0:.1f}s)",
    )


def test_criterion_07_classical_staircase():
    t0 = time.time()
    targets = {0.5: 0.0, 1.5: 0.5, 2.5: 1.0}
    measured = {}
    for rho, target in targets.items():
        point = fe.activity_density(EnvironmentSpec.all_s(), rho, 1000, trials=10, seed=13)
        assert abs(point.activity - target) < 0.03, (rho, point.activity)
        measured[rho] = point.activity
    _report(
        7,
        "classical staircase on C_1000: "
        + ", ".join(f"rho={r} -> {a:.3f}" for r, a in measured.items())
        + f" ({time.time() - t0:.1f}s)",
    )


def test_criterion_08_window_runs():
    t0 = time.time()
    low = iv.window_run(EnvironmentSpec.all_s(), 0.5, 10_000, 3000, seed=81)
    assert low.stabilized_at is not None
    assert low.alpha[-1] == 0.0

    high = iv.window_run(EnvironmentSpec.all_s(), 2.5, 10_000, 3000, seed=82)
    assert high.stabilized_at is None
    assert high.alpha[-500:].mean() > 0.99

    mid = iv.window_run(
        EnvironmentSpec.all_s(), 1.5, 10_000, 6000, seed=83, pattern_stride=500
    )
    tail = mid.alpha[-2000:]
    assert abs(tail.mean() - 0.5) < 0.02
    _, late_patterns = mid.pattern_rows[-1]
    for key in ("01", "10", "111"):
        assert late_patterns[key] < 1e-3, (key, late_patterns[key])
    _report(
        8,
        f"window n=10^4: alpha(0.5)->0 at t={low.stabilized_at}, "
        f"alpha(2.5) tail {high.alpha[-500:].mean():.3f}, "
        f"alpha(1.5) time-avg {tail.mean():.4f}, late patterns "
        + ", ".join(f"{k}={v:.1e}" for k, v in late_patterns.items())
        + f" ({time.time() - t0:.1f}s)",
    )


def test_criterion_09_property_suites():
    t0 = time.time()
    rng = np.random.default_rng(90)

    # abelianness: random small instances, random label sources
    for i in range(1000):
        n = int(rng.integers(3, 12))
        topo = Topology.interval(n)
        config = HeightConfig(topo, rng.poisson(1.3, topo.num_sites))
        mode = i % 3
        if mode == 0:
            assert check_abelian(config, n_orders=3, seed=i)
        elif mode == 1:
            env = sample_environment(topo, EnvironmentSpec.iid_directed(0.6), seed=i)
            assert check_abelian(config, env, n_orders=3, seed=i)
        else:
            assert check_abelian(config, stack_seed=i, n_orders=3, seed=i)

    # conservation on cycles
    for i in range(100):
        topo = Topology.cycle(int(rng.integers(3, 40)))
        total = int(rng.integers(0, topo.num_sites))
        heights = np.bincount(
            rng.integers(0, topo.num_sites, size=total), minlength=topo.num_sites
        )
        result = stabilize(HeightConfig(topo, heights), all_s_environment(topo))
        assert result.stable and result.config.total == total

    # mirror commutation of the parallel step
    for i in range(1000):
        topo = Topology.cycle(int(rng.integers(2, 50)))
        config = HeightConfig(topo, rng.integers(0, 4, topo.num_sites))
        left = parallel_step(iv.mirror(config)).heights
        right = iv.mirror(parallel_step(config)).heights
        assert np.array_equal(left, right)

    # forbidden sub-configuration detector on the two canonical words
    assert iv.is_fsc((0, 0))
    assert iv.is_fsc((0, 1, 1, 0))
    assert not iv.is_fsc((1, 1))

    _report(
        9,
        "1000 abelian instances, 100 cycle conservation runs, 1000 mirror "
        f"commutations, FSC on 00/0110 all hold ({time.time() - t0:.1f}s)",
    )


def test_criterion_10_manna_threshold_trend():
    t0 = time.time()
    probes = [
        fe.stabilization_probability(
            EnvironmentSpec.annealed(), 0.9, n, trials=150, budget=20_000_000, seed=42
        )
        for n in (250, 500, 1000)
    ]
    p_hats = [p.p_hat for p in probes]
    assert p_hats[0] < p_hats[1] < p_hats[2]
    # the rise is outside the smallest size's point estimate
    assert probes[2].wilson_low > p_hats[0]
    assert p_hats[2] > 0.9

    profile = fe.toppling_count_profile(
        EnvironmentSpec.annealed(), (0.5, 0.95), (400,), trials=20, seed=7
    )
    calm, hot = profile
    assert hot.mean_topplings > 50 * calm.mean_topplings
    assert calm.censored_fraction == 0.0
    assert hot.censored_fraction > 0.2
    _report(
        10,
        "Manna stabilization probability at rho=0.9 rises "
        + " -> ".join(f"{p:.3f}" for p in p_hats)
        + f" over n=250/500/1000; toppling blow-up {calm.mean_topplings:.0f} -> "
        f"{hot.mean_topplings:.0f} with censoring {hot.censored_fraction:.2f} "
        f"at rho=0.95 (exact rho_th=1 is an n->infinity statement; the "
        f"monotone trend substitutes; {time.time() - t0:.0f}s)",
    )


def test_criterion_11_urn_scalings():
    t0 = time.time()
    sizes, means, slope = urn.stopping_time_scaling(0.4, (1_000, 10_000, 100_000), trials=5, seed=2)
    assert 0.9 < slope < 1.3

    stop_p = urn.stop_probability(10_000, 0.6, trials=20, seed=5)
    assert stop_p < 0.1

    est = urn.sink_stationary_density(512, 100_000, trials=12, seed=11)
    assert abs(est.mean - 0.5) <= 3 * est.stderr
    _report(
        11,
        f"urn: toppling scaling slope {slope:.3f} in [0.9, 1.3]; "
        f"stop probability {stop_p:.2f} < 0.1 at rho=0.6, n=10^4; "
        f"sink density {est.mean:.5f} +- {est.stderr:.1e} covers 0.5 "
        f"({time.time() - t0:.0f}s)",
    )


def test_criterion_12_predictor_vs_oracle():
    t0 = time.time()
    topo = Topology.window(10_000, "periodic")
    env = sample_environment(topo, EnvironmentSpec.restricted(0.25), seed=121)
    agreements = {}
    for rho, cseed in ((0.40, 122), (0.70, 123)):
        config = sample_config(topo, rho, seed=cseed)
        pred = iv.predict_stabilizable(config, env)
        assert pred.stabilizable is not None
        oracle = iv.stabilizability_oracle(config, env, base_budget=32_000_000)
        agreement = iv.oracle_agreement(oracle, bool(pred.stabilizable), margin=50)
        assert agreement >= 0.99, (rho, agreement)
        agreements[rho] = agreement
    _report(
        12,
        "predictor vs oracle interior agreement "
        + ", ".join(f"{a:.4f} at rho={r}" for r, a in agreements.items())
        + f" ({time.time() - t0:.1f}s)",
    )
