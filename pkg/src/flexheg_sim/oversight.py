"""Production sampling, device assignment, registry inspections and audits.

Randomness comes from :mod:`flexheg_sim.rng`. Monte Carlo trial ``t`` under
master seed ``s`` uses the stream ``derive(s, t)``, and device ``i`` within
a trial consumes output ``i`` of that stream, so the vectorised estimators
here replay exactly what the scalar functions would do trial by trial.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import SplitMix64, derive_array, outputs_array, uniforms_array


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {p}")


# -- production sampling ------------------------------------------------------


def detection_probability(p: float, n: int) -> float:
    """Chance that independent sampling at rate ``p`` catches at least one of ``n``."""
    _check_prob("p", p)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return 0.0
    if p == 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p))


def sample_population(rng: SplitMix64, population: int, p: float) -> frozenset[int]:
    """Indices picked by one Bernoulli(p) draw each; consumes ``population`` outputs."""
    _check_prob("p", p)
    u = uniforms_array(rng.key, np.arange(rng.counter, rng.counter + population, dtype=np.uint64))
    rng.counter += population
    return frozenset(np.flatnonzero(u < p).tolist())


@dataclass(frozen=True)
class BatchScenario:
    """``compromised`` devices hidden among ``population``; they sit at indices ``0..n-1``.

    Placement is irrelevant under independent sampling; assignment checks
    use it to name the compromised batch.
    """

    population: int
    compromised: int
    sampling_rate: float
    batch_sizes: tuple[int, ...] = ()
    customers: int = 1

    def __post_init__(self) -> None:
        _check_prob("sampling_rate", self.sampling_rate)
        if not 0 <= self.compromised <= self.population:
            raise ValueError("compromised must lie in [0, population]")
        if self.customers < 1:
            raise ValueError("need at least one customer")
        sizes = tuple(self.batch_sizes) or (self.population,)
        if any(s <= 0 for s in sizes) or sum(sizes) != self.population:
            raise ValueError(f"batch sizes {sizes} do not partition {self.population} devices")
        object.__setattr__(self, "batch_sizes", sizes)


def simulate_batch_smuggling(
    seed: int, scenario: BatchScenario, trials: int, *, chunk: int = 2000
) -> float:
    """Fraction of trials in which at least one compromised device is sampled."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n, p = scenario.compromised, scenario.sampling_rate
    if n == 0:
        return 0.0
    counters = np.arange(n, dtype=np.uint64)[None, :]
    caught = 0
    for start in range(0, trials, chunk):
        keys = derive_array(seed, np.arange(start, min(start + chunk, trials), dtype=np.uint64))
        u = uniforms_array(keys[:, None], counters)
        caught += int(np.count_nonzero((u < p).any(axis=1)))
    return caught / trials


@dataclass(frozen=True)
class MonteCarloComparison:
    p: float
    n: int
    trials: int
    seed: int
    analytic: float
    estimate: float

    @property
    def stderr(self) -> float:
        q = self.analytic
        return math.sqrt(q * (1.0 - q) / self.trials)

    @property
    def abs_error(self) -> float:
        return abs(self.estimate - self.analytic)


def compare_detection(p: float, n: int, trials: int, seed: int) -> MonteCarloComparison:
    scenario = BatchScenario(population=max(n, 1), compromised=n, sampling_rate=p)
    return MonteCarloComparison(
        p, n, trials, seed, detection_probability(p, n), simulate_batch_smuggling(seed, scenario, trials)
    )


# -- assignment ---------------------------------------------------------------


def _block_bounds(count: int, customers: int) -> list[tuple[int, int]]:
    base, extra = divmod(count, customers)
    bounds, start = [], 0
    for c in range(customers):
        size = base + (1 if c < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def assign_randomly(rng: SplitMix64, devices: Sequence, customers: int) -> dict[int, list]:
    """Uniformly random balanced split of ``devices`` among ``customers``.

    Devices are shuffled by sorting on one 64-bit draw each (ties by
    position); customer ``c`` takes the ``c``-th contiguous block, and the
    first ``len(devices) % customers`` customers get one extra device.
    """
    if customers < 1:
        raise ValueError("customers must be >= 1")
    n = len(devices)
    keys = outputs_array(rng.key, np.arange(rng.counter, rng.counter + n, dtype=np.uint64))
    rng.counter += n
    order = np.argsort(keys, kind="stable")
    shuffled = [devices[i] for i in order]
    return {c: shuffled[a:b] for c, (a, b) in enumerate(_block_bounds(n, customers))}


def whole_batch_capture_rate(
    seed: int, devices: int, compromised: int, customers: int, trials: int, *, customer: int = 0, chunk: int = 20000
) -> float:
    """Monte Carlo frequency that ``customer`` receives all compromised devices."""
    a, b = _block_bounds(devices, customers)[customer]
    if compromised == 0:
        return 1.0
    if compromised > b - a:
        return 0.0
    counters = np.arange(devices, dtype=np.uint64)[None, :]
    hits = 0
    for start in range(0, trials, chunk):
        keys = derive_array(seed, np.arange(start, min(start + chunk, trials), dtype=np.uint64))
        order = np.argsort(outputs_array(keys[:, None], counters), axis=1, kind="stable")
        block = order[:, a:b]
        hits += int(np.count_nonzero((block < compromised).sum(axis=1) == compromised))
    return hits / trials


# -- registry -----------------------------------------------------------------


class EntityKind(enum.Enum):
    FLEXHEG_DEVICE = "FlexHEGDevice"
    NON_FLEXHEG_CHIP = "NonFlexHEGChip"
    DATA_CENTER = "DataCenter"
    FAB_FACILITY = "FabFacility"
    MANUFACTURING_EQUIPMENT = "ManufacturingEquipment"


class EntityStatus(enum.Enum):
    PRESENT = "Present"
    MISSING = "Missing"
    TAMPER_SUSPECTED = "TamperSuspected"
    DESTROYED = "Destroyed"


INSPECTION_GOALS: dict[EntityKind, str] = {
    EntityKind.FLEXHEG_DEVICE: "owner still holds device; no tamper evidence",
    EntityKind.NON_FLEXHEG_CHIP: "owner still holds chip; not part of an unregistered cluster",
    EntityKind.DATA_CENTER: "no unregistered AI-capable clusters on site",
    EntityKind.FAB_FACILITY: "no unregistered AI-capable chips on production lines",
    EntityKind.MANUFACTURING_EQUIPMENT: "equipment at registered site on registered line",
}


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class EntityRecord:
    entity_id: str
    kind: EntityKind
    registered_owner: str = ""
    registered_location: str = ""
    status: EntityStatus = EntityStatus.PRESENT

    def with_status(self, status: EntityStatus) -> EntityRecord:
        if self.status is EntityStatus.DESTROYED and status is not EntityStatus.DESTROYED:
            raise RegistryError(f"{self.entity_id} is destroyed")
        return replace(self, status=status)


def registry_to_json(registry: Sequence[EntityRecord]) -> str:
    return json.dumps(
        [
            {
                "entity_id": r.entity_id,
                "kind": r.kind.value,
                "registered_owner": r.registered_owner,
                "registered_location": r.registered_location,
                "status": r.status.value,
            }
            for r in registry
        ],
        indent=2,
    )


def registry_from_json(text: str) -> list[EntityRecord]:
    return [
        EntityRecord(
            d["entity_id"],
            EntityKind(d["kind"]),
            d.get("registered_owner", ""),
            d.get("registered_location", ""),
            EntityStatus(d.get("status", "Present")),
        )
        for d in json.loads(text)
    ]


class MissingRateForKind(KeyError):
    pass


@dataclass(frozen=True)
class InspectionPlan:
    sampling_rate: float = 0.001
    rates: Mapping[EntityKind, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _check_prob("sampling_rate", self.sampling_rate)
        for kind, rate in self.rates.items():
            _check_prob(f"rate for {kind.value}", rate)


@dataclass(frozen=True, order=True)
class InspectionEvent:
    tick: int
    entity_id: str
    kind: EntityKind = field(compare=False)
    goal: str = field(compare=False)
    outcome: str = field(default="scheduled", compare=False)


def schedule_inspections(
    rng: SplitMix64,
    registry: Sequence[EntityRecord],
    plan: InspectionPlan,
    period: tuple[int, int],
) -> list[InspectionEvent]:
    """Select each live entity with its kind's rate; selected ones get a uniform tick in ``period``.

    Every live entity consumes one draw for selection, and selected ones
    one more for the tick, in registry order. Destroyed entities are skipped.
    """
    start, end = period
    if end <= start:
        raise ValueError(f"empty inspection period {period}")
    for record in registry:
        if record.kind not in plan.rates:
            raise MissingRateForKind(record.kind.value)
    events = []
    for record in registry:
        if record.status is EntityStatus.DESTROYED:
            continue
        if rng.random() < plan.rates[record.kind]:
            tick = start + rng.randbelow(end - start)
            events.append(InspectionEvent(tick, record.entity_id, record.kind, INSPECTION_GOALS[record.kind]))
    return sorted(events)


INSPECTION_CSV_COLUMNS = ("tick", "entity_id", "kind", "goal", "outcome")


def inspections_to_csv(events: Iterable[InspectionEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INSPECTION_CSV_COLUMNS)
    for e in events:
        writer.writerow((e.tick, e.entity_id, e.kind.value, e.goal, e.outcome))
    return buf.getvalue()


def flag_missing(
    registry: Sequence[EntityRecord], responses: Iterable[str]
) -> tuple[list[EntityRecord], list[str]]:
    """Mark silent flexHEG devices Missing and return them for license denial.

    Devices that answer are restored to Present if they had been Missing.
    Returns the updated registry and the sorted referral list.
    """
    answered = set(responses)
    updated, referrals = [], []
    for record in registry:
        if record.kind is EntityKind.FLEXHEG_DEVICE and record.status is not EntityStatus.DESTROYED:
            if record.entity_id in answered:
                if record.status is EntityStatus.MISSING:
                    record = record.with_status(EntityStatus.PRESENT)
            else:
                record = record.with_status(EntityStatus.MISSING)
                referrals.append(record.entity_id)
        updated.append(record)
    return updated, sorted(referrals)


# -- power logs ---------------------------------------------------------------


class MalformedLog(ValueError):
    pass


@dataclass(frozen=True)
class PowerLog:
    """Sorted, disjoint ``(on_tick, off_tick)`` intervals.

    ``explanations`` maps the tick at which a power-off began to the
    reason given for it; any text counts as an explanation.
    """

    intervals: tuple[tuple[int, int], ...] = ()
    explanations: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        intervals = tuple((int(a), int(b)) for a, b in self.intervals)
        for on, off in intervals:
            if off <= on:
                raise MalformedLog(f"interval ({on}, {off}) is empty or reversed")
        for (_, prev_off), (nxt_on, _) in zip(intervals, intervals[1:]):
            if nxt_on < prev_off:
                raise MalformedLog(f"interval starting {nxt_on} overlaps one ending {prev_off}")
        object.__setattr__(self, "intervals", intervals)

    def off_periods(self, until: int) -> list[tuple[int, int]]:
        gaps = [(off, on) for (_, off), (on, _) in zip(self.intervals, self.intervals[1:])]
        if self.intervals and self.intervals[-1][1] < until:
            gaps.append((self.intervals[-1][1], until))
        return [(a, min(b, until)) for a, b in gaps if a < until]


def audit_power_log(log: PowerLog, inspection_tick: int, max_unexplained: int) -> list[tuple[int, int]]:
    """Off periods before ``inspection_tick`` longer than ``max_unexplained`` with no explanation."""
    return [
        (a, b)
        for a, b in log.off_periods(inspection_tick)
        if b - a > max_unexplained and not log.explanations.get(a)
    ]
