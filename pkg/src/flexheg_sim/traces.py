"""Randomized protocol traces with independent oracles.

A trace drives one device through seeded installs, extensions, clock
advances, licenses and workloads, signing every artifact through honest
transcript-checked approvers. A shadow model tracks expiry and lockdown
separately from the protocol code, and a direct grant-fit check decides
what each workload should get. Any disagreement is reported as a violation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from itertools import combinations

from .protocol import (
    ApproverPolicy,
    CapabilityGrant,
    ExtensionCertificate,
    FirmwareUpdate,
    LicenseAuthority,
    Mode,
    ProtocolError,
    Ruleset,
    SignerDevice,
    Threshold,
    WorkloadClass,
    WorkloadDescriptor,
    advance_clock,
    apply_license,
    approver_sign_extension,
    approver_sign_update,
    canonical_encode,
    evaluate_workload,
    extend_lifetime,
    install_update,
    issue_license,
    provision_device,
    raw_sign,
    verify_payload,
)
from .protocol.model import default_baseline
from .rng import SplitMix64, derive

APPROVERS = ("A", "B", "C")
AUTHORITY = "L"
_LIMITS = (None, 4, 8, 64, 1024)
_FLOPS = (None, 10**20, 10**22, 10**24)


@dataclass
class TraceResult:
    events: int = 0
    allows: int = 0
    installs: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)


def _pick(rng: SplitMix64, options):
    return options[rng.randbelow(len(options))]


def random_grant(rng: SplitMix64) -> CapabilityGrant:
    return CapabilityGrant(
        WorkloadClass(1 + rng.randbelow(4)),
        flop_limit=_pick(rng, _FLOPS),
        cluster_size_limit=_pick(rng, _LIMITS),
        bandwidth_limit=_pick(rng, (None, 10**9, 10**11)),
        irrevocable=rng.bernoulli(0.2),
    )


def random_ruleset(rng: SplitMix64, tag: str) -> Ruleset:
    grants = frozenset(random_grant(rng) for _ in range(rng.randbelow(4)))
    return Ruleset(tag, grants, requires_license=rng.bernoulli(0.25))


def random_workload(rng: SplitMix64) -> WorkloadDescriptor:
    return WorkloadDescriptor(
        WorkloadClass(1 + rng.randbelow(4)),
        total_flop=_pick(rng, (0, 10**19, 10**21, 10**23, 10**25)),
        cluster_size=_pick(rng, (1, 4, 8, 16, 512, 4096)),
        bandwidth=_pick(rng, (0, 10**8, 10**10, 10**12)),
        authorized=rng.bernoulli(0.3),
    )


def fits(grant: CapabilityGrant, w: WorkloadDescriptor, flop_waived: bool) -> bool:
    """Direct limit comparison, written independently of the protocol code."""
    if grant.workload_class != w.workload_class:
        return False
    for limit, used, waived in (
        (grant.flop_limit, w.total_flop, flop_waived),
        (grant.cluster_size_limit, w.cluster_size, False),
        (grant.bandwidth_limit, w.bandwidth, False),
    ):
        if limit is not None and not waived and used > limit:
            return False
    return True


@dataclass
class _Shadow:
    """Mode bookkeeping kept apart from the device state machine."""

    has_baseline: bool
    clock: int = 0
    expiry: int = None
    locked: bool = False
    grants: frozenset = frozenset()
    carried: frozenset = frozenset()
    requires_license: bool = False
    license_expiry: int = None

    @property
    def active(self) -> bool:
        return not self.locked and self.expiry is not None and self.clock < self.expiry

    def expected_mode(self) -> Mode:
        if self.locked:
            return Mode.LOCKED_DOWN
        return Mode.ACTIVE if self.active else Mode.BASELINE_FALLBACK

    def tick(self, dt: int) -> None:
        was_active = self.active
        self.clock += dt
        if was_active and not self.active and not self.has_baseline:
            self.locked = True


def run_trace(seed: int, index: int, max_events: int = 100) -> TraceResult:
    rng = SplitMix64(derive(seed, index))
    baseline = default_baseline() if rng.bernoulli(0.7) else None
    rule = Threshold(2, 3) if rng.bernoulli(0.3) else None
    policy = ApproverPolicy(
        APPROVERS,
        **({"update_rule": rule} if rule else {}),
        baseline=baseline,
        license_authorities=(AUTHORITY,),
    )
    signers = {a: SignerDevice(a) for a in APPROVERS}
    authority = LicenseAuthority(AUTHORITY)
    device = provision_device("dev", policy)
    shadow = _Shadow(has_baseline=baseline is not None)
    result = TraceResult()
    known_updates: list[FirmwareUpdate] = []
    window_end = 0

    def sign_all(artifact, sign):
        sigs = {}
        for name in APPROVERS:
            if rng.bernoulli(0.9):
                try:
                    sigs[name], signers[name] = sign(signers[name], artifact)
                except ProtocolError:
                    pass
        return artifact.with_signatures(sigs)

    n_events = 1 + rng.randbelow(max_events)
    for step in range(n_events):
        result.events += 1
        roll = rng.randbelow(100)
        before_mode = device.mode
        if roll < 20:
            serial = max(s.next_serial for s in signers.values())
            issued = device.clock if rng.bernoulli(0.5) else max(device.clock, window_end)
            update = FirmwareUpdate(
                serial, serial, random_ruleset(rng, f"r{serial}"), 1 + rng.randbelow(60), issued
            )
            update = sign_all(update, approver_sign_update)
            if update.signatures:
                result.artifacts.append(update)
                window_end = max(window_end, update.window[1])
            known_updates.append(update)
            try:
                device = install_update(device, update, policy)
            except ProtocolError:
                pass
            else:
                result.installs.append(update.serial)
                shadow.expiry = shadow.clock + update.lifetime
                shadow.carried = shadow.carried | frozenset(g for g in shadow.grants if g.irrevocable)
                shadow.grants = update.ruleset.grants
                shadow.requires_license = update.ruleset.requires_license
        elif roll < 25 and known_updates:
            old = _pick(rng, known_updates)
            try:
                device = install_update(device, old, policy)
            except ProtocolError:
                pass
            else:
                result.installs.append(old.serial)
                shadow.expiry = shadow.clock + old.lifetime
                shadow.carried = shadow.carried | frozenset(g for g in shadow.grants if g.irrevocable)
                shadow.grants = old.ruleset.grants
                shadow.requires_license = old.ruleset.requires_license
        elif roll < 35 and device.installed is not None:
            serial = max(s.next_serial for s in signers.values())
            new_expiry = device.installed.expiry + 1 + rng.randbelow(40)
            ext = ExtensionCertificate(
                serial, device.installed.serial, new_expiry, min(device.clock, new_expiry - 1)
            )
            ext = sign_all(ext, approver_sign_extension)
            if ext.signatures:
                result.artifacts.append(ext)
                window_end = max(window_end, ext.window[1])
            try:
                device = extend_lifetime(device, ext, policy)
            except ProtocolError:
                pass
            else:
                shadow.expiry = new_expiry
        elif roll < 55:
            dt = rng.randbelow(30)
            device = advance_clock(device, dt)
            shadow.tick(dt)
        elif roll < 62:
            try:
                lic = issue_license(authority, "dev", 1 + rng.randbelow(50), device.clock, policy)
                device = apply_license(device, lic, policy.license_authorities)
                shadow.license_expiry = lic.expiry
            except ProtocolError:
                pass
        else:
            w = random_workload(rng)
            decision = evaluate_workload(device, w)
            expected = _expected_allow(shadow, baseline, w)
            if decision.allowed != expected:
                result.violations.append(f"step {step}: {w} got {decision.label()}, oracle says {expected}")
            if decision.allowed:
                result.allows += 1
                if not shadow.active and (baseline is None or decision.grant not in baseline.grants):
                    result.violations.append(f"step {step}: post-expiry Allow outside baseline")
        if device.mode is not shadow.expected_mode():
            result.violations.append(f"step {step}: mode {device.mode.name}, shadow {shadow.expected_mode().name}")
        if before_mode is Mode.LOCKED_DOWN and device.mode is not Mode.LOCKED_DOWN:
            result.violations.append(f"step {step}: left LockedDown")
    if any(b <= a for a, b in zip(result.installs, result.installs[1:])):
        result.violations.append(f"installed serials not increasing: {result.installs}")
    return result


def _expected_allow(shadow: _Shadow, baseline, w: WorkloadDescriptor) -> bool:
    if shadow.locked:
        return False
    if not shadow.active:
        return baseline is not None and any(fits(g, w, False) for g in baseline.grants)
    if shadow.requires_license and (shadow.license_expiry is None or shadow.clock >= shadow.license_expiry):
        return False
    waived = w.workload_class is WorkloadClass.TRAINING and w.authorized
    return any(fits(g, w, waived) for g in shadow.grants | shadow.carried)


# -- adversarial artifact sets ------------------------------------------------


def random_artifact_set(seed: int, index: int, max_size: int = 8) -> list:
    """Up to ``max_size`` artifacts signed with bypassed transcripts.

    Serials and windows are drawn from small ranges so collisions are common;
    some signatures are corrupted and some artifacts are exact duplicates.
    """
    rng = SplitMix64(derive(seed, index))
    out = []
    for _ in range(1 + rng.randbelow(max_size)):
        if out and rng.bernoulli(0.1):
            out.append(_pick(rng, out))
            continue
        serial = 1 + rng.randbelow(6)
        start = rng.randbelow(40)
        if rng.bernoulli(0.5):
            art = FirmwareUpdate(serial, 1 + rng.randbelow(3), Ruleset(f"r{rng.randbelow(2)}", frozenset()),
                                 1 + rng.randbelow(30), start)
        else:
            art = ExtensionCertificate(serial, 1 + rng.randbelow(6), start + 1 + rng.randbelow(30), start)
        sigs = {}
        for name in APPROVERS[:2]:
            if rng.bernoulli(0.7):
                sig = raw_sign(name, art)
                if rng.bernoulli(0.15):
                    sig = bytes([sig[0] ^ 1]) + sig[1:]
                sigs[name] = sig
        out.append(art.with_signatures(sigs))
    return out


def pairwise_conflicts(artifacts) -> set:
    """Exhaustive O(n^2) reference: ``{(signer, digest_a, digest_b, kinds)}``."""
    distinct: dict[str, dict[bytes, object]] = {}
    for art in artifacts:
        payload = canonical_encode(art)
        for name, sig in art.signatures.items():
            if verify_payload(name, payload, sig):
                distinct.setdefault(name, {})[payload] = art
    found = set()
    for name, by_payload in distinct.items():
        for (pa, a), (pb, b) in combinations(sorted(by_payload.items(), key=lambda kv: kv[0]), 2):
            kinds = []
            live_a, live_b = a.window, b.window
            if a.designates != b.designates and max(live_a[0], live_b[0]) < min(live_a[1], live_b[1]):
                kinds.append("overlapping_windows")
            if a.serial == b.serial:
                kinds.append("duplicate_serial")
            if kinds:
                da, db = sorted((hashlib.sha256(pa).hexdigest(), hashlib.sha256(pb).hexdigest()))
                found.add((name, da, db, tuple(kinds)))
    return found


def detector_conflicts(conflicts) -> set:
    return {
        (c.signer, *sorted((c.first.digest, c.second.digest)), tuple(k.value for k in c.kinds))
        for c in conflicts
    }


__all__ = [
    "TraceResult",
    "run_trace",
    "random_artifact_set",
    "pairwise_conflicts",
    "detector_conflicts",
    "fits",
]
