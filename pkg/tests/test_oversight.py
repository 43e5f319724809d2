import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexheg_sim.oversight import (
    BatchScenario,
    EntityKind,
    EntityRecord,
    EntityStatus,
    InspectionPlan,
    MalformedLog,
    MissingRateForKind,
    PowerLog,
    RegistryError,
    assign_randomly,
    audit_power_log,
    compare_detection,
    detection_probability,
    flag_missing,
    inspections_to_csv,
    registry_from_json,
    registry_to_json,
    sample_population,
    schedule_inspections,
    simulate_batch_smuggling,
    whole_batch_capture_rate,
)
from flexheg_sim.rng import SplitMix64, derive

DEV, DC, FAB = EntityKind.FLEXHEG_DEVICE, EntityKind.DATA_CENTER, EntityKind.FAB_FACILITY


# -- sampling -----------------------------------------------------------------


def test_detection_probability_values():
    assert detection_probability(0.001, 1000) == pytest.approx(0.63230, abs=1e-5)
    assert detection_probability(0.3, 0) == 0
    assert detection_probability(1.0, 5) == 1
    assert detection_probability(0.0, 5) == 0
    with pytest.raises(ValueError):
        detection_probability(1.5, 1)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 5000), st.integers(0, 5000))
def test_detection_probability_monotone(p, q, n, m):
    p, q = sorted((p, q))
    n, m = sorted((n, m))
    assert detection_probability(p, n) <= detection_probability(q, m) + 1e-15
    assert detection_probability(p, n) == pytest.approx(1 - (1 - p) ** n, abs=1e-12)


def test_sample_population_edges():
    assert sample_population(SplitMix64(1), 50, 0.0) == frozenset()
    assert sample_population(SplitMix64(1), 50, 1.0) == frozenset(range(50))
    r = SplitMix64(1)
    sample_population(r, 50, 0.5)
    assert r.counter == 50


def test_sample_population_binomial_moments():
    n, p, runs = 100_000, 0.001, 1000
    sizes = np.array([len(sample_population(SplitMix64(derive(3, k)), n, p)) for k in range(runs)])
    mean, var = n * p, n * p * (1 - p)
    assert abs(sizes.mean() - mean) < 3 * math.sqrt(var / runs)
    assert abs(sizes.var(ddof=1) - var) < 0.15 * var


def test_batch_smuggling_values():
    est = simulate_batch_smuggling(5, BatchScenario(1000, 1000, 0.001), 100_000)
    assert est == pytest.approx(0.632, abs=0.01)
    assert simulate_batch_smuggling(5, BatchScenario(1000, 0, 0.5), 100) == 0.0
    trials = 20_000
    est = simulate_batch_smuggling(5, BatchScenario(10, 10, 0.5), trials)
    q = 1 - 0.5**10
    assert abs(est - q) < 4 * math.sqrt(q * (1 - q) / trials)


@pytest.mark.parametrize("p,n", [(0.001, 1000), (0.01, 50), (0.1, 5), (0.5, 3), (0.002, 200)])
def test_monte_carlo_consistency_grid(p, n):
    cmp = compare_detection(p, n, 20_000, seed=17)
    assert cmp.abs_error < 4 * cmp.stderr


def test_batch_matches_scalar_replay():
    seed, scen = 9, BatchScenario(40, 40, 0.05)
    scalar = 0
    for t in range(300):
        r = SplitMix64(derive(seed, t))
        scalar += any(r.random() < 0.05 for _ in range(40))
    assert simulate_batch_smuggling(seed, scen, 300) == scalar / 300


def test_batch_scenario_validation():
    with pytest.raises(ValueError):
        BatchScenario(10, 11, 0.1)
    with pytest.raises(ValueError):
        BatchScenario(10, 1, 0.1, batch_sizes=(3, 3))


# -- assignment ---------------------------------------------------------------


def test_single_customer_gets_everything():
    got = assign_randomly(SplitMix64(1), list("abcdef"), 1)
    assert sorted(got[0]) == list("abcdef")


def test_assignment_is_balanced_partition():
    got = assign_randomly(SplitMix64(2), list(range(11)), 3)
    assert [len(v) for v in got.values()] == [4, 4, 3]
    assert sorted(itertools.chain(*got.values())) == list(range(11))


def test_whole_batch_capture_hypergeometric():
    blocks = list(itertools.combinations(range(10), 5))
    exact = Fraction(sum({0, 1, 2} <= set(b) for b in blocks), len(blocks))
    assert exact == Fraction(21, 252) == Fraction(1, 12)
    rate = whole_batch_capture_rate(4, 10, 3, 2, 100_000)
    assert abs(rate - 1 / 12) < 3 * math.sqrt((1 / 12) * (11 / 12) / 100_000)
    assert whole_batch_capture_rate(4, 10, 6, 2, 100) == 0.0


def test_vector_capture_matches_scalar_assignment():
    hits = 0
    for t in range(500):
        got = assign_randomly(SplitMix64(derive(8, t)), list(range(10)), 2)
        hits += {0, 1, 2} <= set(got[0])
    assert whole_batch_capture_rate(8, 10, 3, 2, 500) == hits / 500


def test_assignment_marginals_uniform():
    devices, customers, runs = 9, 3, 6000
    counts = np.zeros((devices, customers))
    for t in range(runs):
        for c, members in assign_randomly(SplitMix64(derive(21, t)), list(range(devices)), customers).items():
            for dev in members:
                counts[dev, c] += 1
    expected = runs / customers
    chi2 = ((counts - expected) ** 2 / expected).sum()
    # 9 devices x (3-1) dof = 18; chi-square critical value at alpha=0.001 is 42.31
    assert chi2 < 42.31


# -- registry and inspections -------------------------------------------------


def registry():
    return [
        EntityRecord("d1", DEV, "lab", "dc-1"),
        EntityRecord("d2", DEV, "lab", "dc-1"),
        EntityRecord("dc-1", DC, "lab", "region"),
        EntityRecord("fab-1", FAB, "foundry", "region", EntityStatus.DESTROYED),
    ]


def test_registry_json_roundtrip_and_destroyed_terminal():
    reg = registry()
    assert registry_from_json(registry_to_json(reg)) == reg
    with pytest.raises(RegistryError):
        reg[3].with_status(EntityStatus.PRESENT)


def test_schedule_rate_zero_and_one():
    plan0 = InspectionPlan(rates={DEV: 0.0, DC: 0.0, FAB: 0.0})
    assert schedule_inspections(SplitMix64(1), registry(), plan0, (0, 10)) == []
    plan1 = InspectionPlan(rates={DEV: 1.0, DC: 1.0, FAB: 1.0})
    events = schedule_inspections(SplitMix64(1), registry(), plan1, (0, 10))
    assert sorted(e.entity_id for e in events) == ["d1", "d2", "dc-1"]
    assert all(0 <= e.tick < 10 for e in events) and events == sorted(events)
    assert inspections_to_csv(events).splitlines()[0] == "tick,entity_id,kind,goal,outcome"


def test_schedule_errors():
    with pytest.raises(MissingRateForKind):
        schedule_inspections(SplitMix64(1), registry(), InspectionPlan(rates={DEV: 1.0}), (0, 10))
    with pytest.raises(ValueError):
        schedule_inspections(SplitMix64(1), [], InspectionPlan(), (5, 5))


def test_schedule_per_kind_binomial():
    reg = [EntityRecord(f"d{i}", DEV) for i in range(200)] + [EntityRecord(f"c{i}", DC) for i in range(40)]
    plan = InspectionPlan(rates={DEV: 0.1, DC: 0.5})
    runs = 300
    counts = {DEV: [], DC: []}
    for k in range(runs):
        events = schedule_inspections(SplitMix64(derive(12, k)), reg, plan, (0, 100))
        for kind in counts:
            counts[kind].append(sum(e.kind is kind for e in events))
    for kind, n, p in ((DEV, 200, 0.1), (DC, 40, 0.5)):
        mean = np.mean(counts[kind])
        assert abs(mean - n * p) < 3 * math.sqrt(n * p * (1 - p) / runs)


def test_flag_missing_state_machine():
    reg = registry()
    updated, referrals = flag_missing(reg, ["d1", "d2", "dc-1"])
    assert referrals == [] and updated == reg
    updated, referrals = flag_missing(reg, ["d1"])
    assert referrals == ["d2"]
    assert updated[1].status is EntityStatus.MISSING and updated[2].status is EntityStatus.PRESENT
    again, referrals = flag_missing(updated, ["d1", "d2"])
    assert referrals == [] and again[1].status is EntityStatus.PRESENT
    assert again[3].status is EntityStatus.DESTROYED


# -- power logs ---------------------------------------------------------------


def test_power_audit_examples():
    assert audit_power_log(PowerLog(((0, 500),)), 500, 100) == []
    assert audit_power_log(PowerLog(((0, 100), (1100, 1200))), 1200, 100) == [(100, 1100)]
    log = PowerLog(((0, 10), (60, 70), (220, 230), (530, 600)))
    assert audit_power_log(log, 600, 100) == [(70, 220), (230, 530)]


def test_power_audit_explanations_and_trailing_gap():
    log = PowerLog(((0, 10), (200, 300)), {10: "maintenance"})
    assert audit_power_log(log, 300, 50) == []
    assert audit_power_log(PowerLog(((0, 10),)), 500, 100) == [(10, 500)]
    assert audit_power_log(PowerLog(((0, 10), (10, 20))), 20, 0) == []


@given(st.lists(st.tuples(st.integers(1, 300), st.integers(1, 300)), max_size=10), st.integers(0, 200))
def test_power_audit_filter_oracle(pairs, limit):
    intervals, t = [], 0
    for gap, length in pairs:
        intervals.append((t + gap, t + gap + length))
        t += gap + length
    log = PowerLog(tuple(intervals))
    gaps = [(a[1], b[0]) for a, b in zip(intervals, intervals[1:])]
    assert audit_power_log(log, t, limit) == [g for g in gaps if g[1] - g[0] > limit]


def test_malformed_logs():
    with pytest.raises(MalformedLog):
        PowerLog(((5, 5),))
    with pytest.raises(MalformedLog):
        PowerLog(((0, 10), (5, 20)))
