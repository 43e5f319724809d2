import itertools
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexheg_sim.protocol import (
    AlreadyExpired,
    ApprovalInvalid,
    ApproverPolicy,
    CapabilityGrant,
    DeviceLockedDown,
    DeviceMismatch,
    DenyReason,
    ExtensionCertificate,
    FirmwareUpdate,
    InsufficientSignatures,
    LandmarkResponse,
    LicenseAuthority,
    LocationConfig,
    Mode,
    NonMonotoneExpiry,
    RatchetViolation,
    RenewalDenied,
    RollbackRejected,
    Ruleset,
    UnauthorizedIssuer,
    UnknownDevice,
    WorkloadClass,
    WorkloadDescriptor,
    WrongTarget,
    advance_clock,
    apply_license,
    check_ratchet,
    default_baseline,
    deny_renewal,
    enforce_location,
    evaluate_workload,
    extend_lifetime,
    install_update,
    issue_license,
    produce_attestation,
    provision_device,
    raw_sign,
    sign_landmark_response,
    verify_attestation,
    verify_denial,
    verify_location,
)
from flexheg_sim.traces import fits

NAMES = ("A", "B", "C")
T, FT, INF, NON = WorkloadClass.TRAINING, WorkloadClass.FINE_TUNING, WorkloadClass.INFERENCE, WorkloadClass.NON_AI


def policy(**kw):
    return ApproverPolicy(NAMES, **kw)


def approved(serial, lifetime=100, grants=(), requires_license=False, names=NAMES):
    u = FirmwareUpdate(serial, serial, Ruleset(f"r{serial}", frozenset(grants), requires_license), lifetime)
    return u.with_signatures({n: raw_sign(n, u) for n in names})


def ext(serial, target, new_expiry, names, issued_at=0):
    e = ExtensionCertificate(serial, target, new_expiry, issued_at)
    return e.with_signatures({n: raw_sign(n, e) for n in names})


def running(serial=3, lifetime=100, **pol):
    p = policy(**pol)
    return install_update(provision_device("d", p), approved(serial, lifetime), p), p


# -- install ------------------------------------------------------------------


def test_fresh_device_state():
    d = provision_device("d", policy())
    assert d.mode is Mode.BASELINE_FALLBACK and d.installed is None and d.rollback_floor == 0


def test_install_successor():
    d, p = running(3)
    d = install_update(d, approved(4), p)
    assert d.mode is Mode.ACTIVE and d.installed.serial == 4 == d.rollback_floor


def test_rollback_rejected():
    d, p = running(4)
    with pytest.raises(RollbackRejected):
        install_update(d, approved(3), p)
    with pytest.raises(RollbackRejected):
        install_update(d, approved(4), p)


def test_install_from_fallback_sets_new_expiry():
    d, p = running(3, lifetime=10, baseline=default_baseline())
    d = advance_clock(d, 15)
    assert d.mode is Mode.BASELINE_FALLBACK
    d = install_update(d, approved(5, lifetime=30), p)
    assert d.mode is Mode.ACTIVE and d.expiry == 45


def test_install_needs_approval_and_lockdown_is_absorbing():
    d, p = running(3, lifetime=10)
    with pytest.raises(ApprovalInvalid):
        install_update(d, approved(4, names=("A", "B")), p)
    d = advance_clock(d, 10)
    assert d.mode is Mode.LOCKED_DOWN
    with pytest.raises(DeviceLockedDown):
        install_update(d, approved(9), p)
    assert advance_clock(d, 1000).mode is Mode.LOCKED_DOWN


def test_ratchet_mode_rejects_less_permissive():
    p = policy(ratchet=True)
    big = CapabilityGrant(T, flop_limit=10**25)
    small = CapabilityGrant(T, flop_limit=10**24)
    d = install_update(provision_device("d", p), approved(1, grants=[big]), p)
    with pytest.raises(RatchetViolation):
        install_update(d, approved(2, grants=[small]), p)
    assert install_update(d, approved(2, grants=[big, small]), p).installed.serial == 2


def test_irrevocable_grants_carry_forward():
    p = policy()
    keep = CapabilityGrant(NON, irrevocable=True)
    d = install_update(provision_device("d", p), approved(1, grants=[keep]), p)
    d = install_update(d, approved(2, grants=[CapabilityGrant(INF)]), p)
    assert evaluate_workload(d, WorkloadDescriptor(NON)).allowed


# -- clock --------------------------------------------------------------------


def test_advance_clock_expiry_boundaries():
    d, _ = running(1, lifetime=100)
    d = advance_clock(d, 50)
    assert advance_clock(d, 49).mode is Mode.ACTIVE
    assert advance_clock(d, 50).mode is Mode.LOCKED_DOWN
    d2, _ = running(1, lifetime=100, baseline=default_baseline())
    assert advance_clock(advance_clock(d2, 50), 50).mode is Mode.BASELINE_FALLBACK


def test_advance_clock_rejects_negative():
    d, _ = running()
    with pytest.raises(ValueError):
        advance_clock(d, -1)


@given(st.lists(st.integers(0, 40), max_size=20), st.booleans())
def test_active_implies_before_expiry(steps, baseline):
    d, _ = running(1, lifetime=100, baseline=default_baseline() if baseline else None)
    for dt in steps:
        d = advance_clock(d, dt)
        if d.mode is Mode.ACTIVE:
            assert d.clock < d.expiry
        assert d.installed.serial == d.rollback_floor


# -- extensions ---------------------------------------------------------------


def test_extension_quorum_two_thirds():
    d, p = running(4, lifetime=100, extension_fraction=Fraction(2, 3))
    assert extend_lifetime(d, ext(5, 4, 150, ("A", "B")), p).expiry == 150
    with pytest.raises(InsufficientSignatures):
        extend_lifetime(d, ext(5, 4, 150, ("A",)), p)


def test_extension_error_order():
    d, p = running(4, lifetime=100)
    with pytest.raises(WrongTarget):
        extend_lifetime(d, ext(5, 3, 150, NAMES), p)
    with pytest.raises(NonMonotoneExpiry):
        extend_lifetime(d, ext(5, 4, 100, NAMES), p)
    lapsed = advance_clock(d, 100)
    with pytest.raises(AlreadyExpired):
        extend_lifetime(lapsed, ext(5, 4, 150, NAMES), p)


def test_single_approver_extension_quorum_is_configurable():
    d, p = running(4, extension_fraction=Fraction(1, 3))
    assert extend_lifetime(d, ext(5, 4, 150, ("C",)), p).expiry == 150


# -- workloads ----------------------------------------------------------------


def test_locked_down_denies_everything():
    d, _ = running(1, lifetime=1)
    d = advance_clock(d, 1)
    for cls in WorkloadClass:
        assert evaluate_workload(d, WorkloadDescriptor(cls)).reason is DenyReason.LOCKED_DOWN


def test_baseline_cluster_limit():
    d = provision_device("d", policy(baseline=default_baseline()))
    assert evaluate_workload(d, WorkloadDescriptor(INF, cluster_size=4)).allowed
    assert evaluate_workload(d, WorkloadDescriptor(INF, cluster_size=9)).reason is DenyReason.CLUSTER_TOO_LARGE
    assert evaluate_workload(d, WorkloadDescriptor(T)).reason is DenyReason.NO_MATCHING_GRANT


def test_training_flop_limit_and_authorization_waiver():
    p = policy()
    d = install_update(provision_device("d", p), approved(1, grants=[CapabilityGrant(T, flop_limit=10**24)]), p)
    w = WorkloadDescriptor(T, total_flop=2 * 10**24)
    assert evaluate_workload(d, w).reason is DenyReason.FLOP_LIMIT_EXCEEDED
    assert evaluate_workload(d, replace(w, authorized=True)).allowed


def test_waiver_does_not_apply_in_fallback():
    base = Ruleset("b", frozenset([CapabilityGrant(T, flop_limit=10)]))
    d = provision_device("d", policy(baseline=base))
    w = WorkloadDescriptor(T, total_flop=11, authorized=True)
    assert evaluate_workload(d, w).reason is DenyReason.FLOP_LIMIT_EXCEEDED


GRID_LIMITS = (None, 4, 8)
WORKLOADS = [
    WorkloadDescriptor(c, total_flop=f, cluster_size=s, bandwidth=b, authorized=a)
    for c, f, s, b, a in itertools.product(WorkloadClass, (0, 6), (1, 6, 9), (0, 6), (False, True))
]


@pytest.mark.parametrize("mode", ["active", "fallback"])
def test_workload_grid_matches_fit_oracle(mode):
    grants = [
        CapabilityGrant(c, f, s, b)
        for c, f, s, b in itertools.product((T, INF), GRID_LIMITS, GRID_LIMITS, GRID_LIMITS)
    ]
    for i in range(0, len(grants), 7):
        chosen = frozenset(grants[i : i + 3])
        if mode == "active":
            p = policy()
            d = install_update(provision_device("d", p), approved(1, grants=chosen), p)
        else:
            d = provision_device("d", policy(baseline=Ruleset("b", chosen)))
        for w in WORKLOADS:
            waived = mode == "active" and w.workload_class is T and w.authorized
            expected = any(fits(g, w, waived) for g in chosen)
            decision = evaluate_workload(d, w)
            assert decision.allowed == expected, (chosen, w)
            if decision.allowed:
                assert decision.grant in chosen


def test_deny_reason_from_closest_grant():
    p = policy()
    grants = [CapabilityGrant(INF, cluster_size_limit=4, bandwidth_limit=1), CapabilityGrant(INF, bandwidth_limit=1)]
    d = install_update(provision_device("d", p), approved(1, grants=grants), p)
    decision = evaluate_workload(d, WorkloadDescriptor(INF, cluster_size=8, bandwidth=5))
    assert decision.reason is DenyReason.BANDWIDTH_TOO_HIGH


# -- ratchet ------------------------------------------------------------------


SMALL_GRANTS = [CapabilityGrant(T, f) for f in (None, 1, 2)] + [CapabilityGrant(INF)]
SMALL_RULESETS = [
    Ruleset("x", frozenset(c)) for r in range(3) for c in itertools.combinations(SMALL_GRANTS, r)
]


def permits(ruleset, w):
    return any(fits(g, w, False) for g in ruleset.grants)


PROBES = [WorkloadDescriptor(c, total_flop=f) for c in (T, INF) for f in (0, 1, 2, 3)]


def test_ratchet_examples():
    old = Ruleset("o", frozenset([CapabilityGrant(T, 10**24), CapabilityGrant(INF, cluster_size_limit=8)]))
    assert check_ratchet(old, old)
    assert check_ratchet(old, Ruleset("n", old.grants | {CapabilityGrant(NON)}))
    assert not check_ratchet(old, Ruleset("n", frozenset([CapabilityGrant(T, 10**24)])))
    raised = frozenset([CapabilityGrant(T, 10**25), CapabilityGrant(INF, cluster_size_limit=8)])
    assert check_ratchet(old, Ruleset("n", raised))


def test_ratchet_reflexive_transitive_and_sound():
    for a in SMALL_RULESETS:
        assert check_ratchet(a, a)
    for a, b, c in itertools.product(SMALL_RULESETS, repeat=3):
        if check_ratchet(a, b) and check_ratchet(b, c):
            assert check_ratchet(a, c)
    for a, b in itertools.product(SMALL_RULESETS, repeat=2):
        if check_ratchet(a, b):
            # anything the old ruleset permits, the new one permits too
            assert all(permits(b, w) for w in PROBES if permits(a, w))


# -- licenses -----------------------------------------------------------------


def licensed_device(duration=50):
    p = policy(license_authorities=("L",))
    d = install_update(provision_device("d", p), approved(1, grants=[CapabilityGrant(INF)], requires_license=True), p)
    lic = issue_license(LicenseAuthority("L"), "d", duration, d.clock, p)
    return apply_license(d, lic, p.license_authorities), p


def test_license_lifecycle():
    d, p = licensed_device(50)
    w = WorkloadDescriptor(INF)
    assert evaluate_workload(d, w).allowed
    assert evaluate_workload(advance_clock(d, 50), w).reason is DenyReason.LICENSE_MISSING_OR_EXPIRED
    bare = replace(d, license=None)
    assert evaluate_workload(bare, w).reason is DenyReason.LICENSE_MISSING_OR_EXPIRED


def test_deny_renewal_blocks_reissue():
    p = policy(license_authorities=("L",))
    record, authority = deny_renewal(LicenseAuthority("L"), ["d2", "d1"], 7)
    assert record.device_ids == ("d1", "d2") and verify_denial(record)
    with pytest.raises(RenewalDenied) as err:
        issue_license(authority, "d1", 10, 8, p)
    assert err.value.record_id == record.record_id
    assert issue_license(authority, "d3", 10, 8, p).expiry == 18


def test_license_binding_and_issuer_checks():
    d, p = licensed_device()
    other = issue_license(LicenseAuthority("L"), "other", 10, 0, p)
    with pytest.raises(DeviceMismatch):
        apply_license(d, other, p.license_authorities)
    with pytest.raises(UnauthorizedIssuer):
        issue_license(LicenseAuthority("M"), "d", 10, 0, p)
    forged = replace(issue_license(LicenseAuthority("L"), "d", 10, 0, p), signature=b"\x00" * 32)
    with pytest.raises(UnauthorizedIssuer):
        apply_license(d, forged, p.license_authorities)


# -- location -----------------------------------------------------------------


def located(enforce=True):
    d, _ = running()
    return replace(d, location_config=LocationConfig({"LM1", "LM2"}, 100, enforce))


def test_location_checks():
    d = located()
    good = sign_landmark_response(LandmarkResponse("LM1", "d", 50, 0))
    assert verify_location(d, [good])
    assert not verify_location(d, [sign_landmark_response(LandmarkResponse("LM9", "d", 50, 0))])
    assert not verify_location(d, [LandmarkResponse("LM1", "d", 50, 0)])
    far = sign_landmark_response(LandmarkResponse("LM1", "d", 150, 0))
    ok, after = enforce_location(d, [far])
    assert not ok and after.mode is Mode.LOCKED_DOWN
    ok, after = enforce_location(located(enforce=False), [far])
    assert not ok and after.mode is Mode.ACTIVE


def test_location_requires_config():
    d, _ = running()
    with pytest.raises(ValueError):
        verify_location(d, [])


# -- attestation --------------------------------------------------------------


def test_attestation_roundtrip_and_tamper():
    d, p = running(4)
    d = install_update(d, approved(5), p)
    att = produce_attestation(d)
    registry = {"d": d.key_identity}
    assert att.serial == 5 and verify_attestation(att, registry)
    assert not verify_attestation(replace(att, serial=4), registry)
    with pytest.raises(UnknownDevice):
        verify_attestation(att, {})


@given(st.lists(st.tuples(st.sampled_from(["install", "tick"]), st.integers(1, 30)), max_size=15))
def test_attestation_reflects_replayed_state(ops):
    p = policy(baseline=default_baseline())
    d = provision_device("d", p)
    serial = 0
    for op, arg in ops:
        if op == "install":
            serial += arg
            d = install_update(d, approved(serial, 20), p)
        else:
            d = advance_clock(d, arg)
    att = produce_attestation(d)
    assert (att.serial, att.clock, att.mode) == (serial, d.clock, d.mode)
