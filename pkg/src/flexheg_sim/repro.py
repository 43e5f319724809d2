"""Executable acceptance suite: ten checks with fixed tolerances and budgets."""

from __future__ import annotations

import contextlib
import functools
import io
import itertools
import math
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

from . import oversight as ov
from . import stability as st
from .protocol import (
    AllApprovers,
    ApproverPolicy,
    FirmwareUpdate,
    Ruleset,
    detect_equivocation,
    raw_sign,
    verify_update_approval,
)
from .traces import detector_conflicts, pairwise_conflicts, random_artifact_set, run_trace

SEED = 20240917


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:>2} {self.name:<28} {self.seconds:7.2f}s/{self.budget:>4.0f}s  {self.detail}"


def check_threshold() -> tuple[bool, str]:
    t = st.pwd_threshold(1.5, 0.1).bound
    return t is not None and abs(t - 0.740741) <= 1e-6, f"pwd_threshold(1.5, 0.1) = {t:.7f}"


def check_threshold_low_doom() -> tuple[bool, str]:
    t = st.pwd_threshold(1.5, 0.05).bound
    return t is not None and abs(t - 0.701754) <= 1e-6, f"pwd_threshold(1.5, 0.05) = {t:.7f}"


def check_compensation() -> tuple[bool, str]:
    v = st.min_stable_pdoom(2.0, 0.75)
    return abs(v - 1 / 3) <= 1e-4, f"min_stable_pdoom(2, 0.75) = {v:.6f}"


def check_sampling(trials: int = 100_000) -> tuple[bool, str]:
    cmp = ov.compare_detection(0.001, 1000, trials, SEED)
    ok = abs(cmp.analytic - 0.63230) <= 1e-5 and cmp.abs_error <= 0.01
    return ok, f"analytic {cmp.analytic:.6f}, Monte Carlo {cmp.estimate:.5f} over {trials} trials"


def check_boundary(pwd: float = 0.9) -> tuple[bool, str]:
    u_grid = st.linspace(1.0, 3.0, 40)
    d_grid = st.linspace(0.0, 0.9, 25)
    curve = dict(st.boundary_curve(pwd, u_grid))
    above = below = wrong = 0
    for u_w, p_doom in itertools.product(u_grid, d_grid):
        stable = st.is_stable(st.StabilityParams(u_w, p_doom, pwd))
        if p_doom > curve[u_w]:
            above += 1
            wrong += not stable
        elif p_doom < curve[u_w]:
            below += 1
            wrong += stable
    return wrong == 0, f"{above} points above, {below} below, {wrong} misclassified"


def honest_traces(count: int = 10_000, max_events: int = 100) -> tuple:
    """Shared by the trace and equivocation checks so traces are generated once."""
    return _honest_traces(count, max_events)


@functools.lru_cache(maxsize=2)
def _honest_traces(count: int, max_events: int) -> tuple:
    return tuple(run_trace(SEED, i, max_events) for i in range(count))


def check_traces(count: int = 10_000, max_events: int = 100) -> tuple[bool, str]:
    events = violations = 0
    first = ""
    for r in honest_traces(count, max_events):
        events += r.events
        if r.violations:
            violations += len(r.violations)
            first = first or r.violations[0]
    detail = f"{count} traces, {events} events, {violations} violations"
    return violations == 0, detail + (f"; first: {first}" if first else "")


def check_equivocation(honest: int = 10_000, adversarial: int = 1_000) -> tuple[bool, str]:
    flagged = sum(1 for r in honest_traces(honest) if detect_equivocation(r.artifacts))
    mismatched = conflicts = 0
    for i in range(adversarial):
        arts = random_artifact_set(SEED, i)
        got = detector_conflicts(detect_equivocation(arts))
        conflicts += len(got)
        mismatched += got != pairwise_conflicts(arts)
    ok = flagged == 0 and mismatched == 0
    return ok, (
        f"{flagged}/{honest} honest transcripts flagged; "
        f"{mismatched}/{adversarial} adversarial sets differ from oracle ({conflicts} conflicts)"
    )


def check_veto() -> tuple[bool, str]:
    names = ("A", "B", "C")
    policy = ApproverPolicy(names, AllApprovers())
    update = FirmwareUpdate(1, 1, Ruleset("r", frozenset()), 10)
    wrong = []
    for r in range(len(names) + 1):
        for subset in itertools.combinations(names, r):
            signed = update.with_signatures({n: raw_sign(n, update) for n in subset})
            if bool(verify_update_approval(signed, policy)) != (len(subset) == len(names)):
                wrong.append(subset)
    return not wrong, f"8 subsets, misclassified: {wrong or 'none'}"


def check_assignment(trials: int = 100_000) -> tuple[bool, str]:
    devices, compromised, customers = 10, 3, 2
    blocks = list(itertools.combinations(range(devices), devices // customers))
    exact = Fraction(sum(1 for b in blocks if set(range(compromised)) <= set(b)), len(blocks))
    rate = ov.whole_batch_capture_rate(SEED, devices, compromised, customers, trials)
    sigma = math.sqrt(float(exact) * (1 - float(exact)) / trials)
    ok = exact == Fraction(1, 12) and abs(rate - float(exact)) <= 3 * sigma
    return ok, f"exact {exact}, Monte Carlo {rate:.5f} (3 sigma = {3 * sigma:.5f})"


def check_determinism() -> tuple[bool, str]:
    from .cli import main
    from .scenario import example_path

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for run in ("a", "b"):
            out = Path(tmp) / run
            with contextlib.redirect_stdout(io.StringIO()):
                code = main(["protocol", "run", str(example_path("ecosystem")), "--seed", "99", "--out", str(out)])
            if code != 0:
                return False, f"protocol run exited {code}"
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outs[0] == outs[1]
    return same, f"{len(outs[0])} files, byte-identical: {same}"


CHECKS: tuple[tuple[int, str, float, Callable[[], tuple[bool, str]]], ...] = (
    (1, "threshold_u1.5_d0.1", 1, check_threshold),
    (2, "threshold_u1.5_d0.05", 1, check_threshold_low_doom),
    (3, "compensating_doom", 1, check_compensation),
    (4, "sampling_detection", 10, check_sampling),
    (5, "stability_boundary", 1, check_boundary),
    (6, "protocol_traces", 60, check_traces),
    (7, "anti_equivocation", 30, check_equivocation),
    (8, "approver_veto", 1, check_veto),
    (9, "hypergeometric_assignment", 10, check_assignment),
    (10, "report_determinism", 10, check_determinism),
)


def run_check(number: int) -> CheckResult:
    num, name, budget, fn = CHECKS[number - 1]
    start = time.perf_counter()
    passed, detail = fn()
    elapsed = time.perf_counter() - start
    return CheckResult(num, name, passed and elapsed <= budget, detail, elapsed, budget)


def run_all() -> list[CheckResult]:
    return [run_check(n) for n, *_ in CHECKS]
