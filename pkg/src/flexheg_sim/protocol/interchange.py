"""JSON interchange for rulesets and signed artifacts.

Field names mirror the dataclasses. Signatures are lowercase hex keyed by
signer identity; unbounded limits are ``null``; extension fractions are
strings like ``"2/3"``.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Any, Optional

from .model import (
    AllApprovers,
    ApproverPolicy,
    Attestation,
    CapabilityGrant,
    ExtensionCertificate,
    FirmwareUpdate,
    LocationConfig,
    Mode,
    OperatingLicense,
    Ruleset,
    Threshold,
    WorkloadClass,
    WorkloadDescriptor,
)

CLASS_NAMES = {
    WorkloadClass.TRAINING: "Training",
    WorkloadClass.FINE_TUNING: "FineTuning",
    WorkloadClass.INFERENCE: "Inference",
    WorkloadClass.NON_AI: "NonAI",
}
CLASS_BY_NAME = {v: k for k, v in CLASS_NAMES.items()}
MODE_NAMES = {Mode.ACTIVE: "Active", Mode.BASELINE_FALLBACK: "BaselineFallback", Mode.LOCKED_DOWN: "LockedDown"}
MODE_BY_NAME = {v: k for k, v in MODE_NAMES.items()}


def as_int(value: Any) -> int:
    """Exact integer from a JSON number, so that ``1e24`` means 10**24."""
    if isinstance(value, bool):
        raise TypeError("expected a number, got a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        exact = Decimal(repr(value))
        if exact != exact.to_integral_value():
            raise ValueError(f"{value!r} is not integral")
        return int(exact)
    if isinstance(value, str):
        return int(Decimal(value))
    raise TypeError(f"expected an integer, got {value!r}")


def _opt_int(value: Any) -> Optional[int]:
    return None if value is None else as_int(value)


def grant_to_json(g: CapabilityGrant) -> dict:
    return {
        "workload_class": CLASS_NAMES[g.workload_class],
        "flop_limit": g.flop_limit,
        "cluster_size_limit": g.cluster_size_limit,
        "bandwidth_limit": g.bandwidth_limit,
        "irrevocable": g.irrevocable,
    }


def grant_from_json(d: dict) -> CapabilityGrant:
    return CapabilityGrant(
        CLASS_BY_NAME[d["workload_class"]],
        _opt_int(d.get("flop_limit")),
        _opt_int(d.get("cluster_size_limit")),
        _opt_int(d.get("bandwidth_limit")),
        bool(d.get("irrevocable", False)),
    )


def ruleset_to_json(r: Ruleset) -> dict:
    return {
        "ruleset_id": r.ruleset_id,
        "grants": [grant_to_json(g) for g in r.sorted_grants()],
        "requires_license": r.requires_license,
    }


def ruleset_from_json(d: dict) -> Ruleset:
    return Ruleset(
        d["ruleset_id"],
        frozenset(grant_from_json(g) for g in d.get("grants", [])),
        bool(d.get("requires_license", False)),
    )


def _sigs_to_json(sigs) -> dict:
    return {k: sigs[k].hex() for k in sorted(sigs)}


def _sigs_from_json(d: Optional[dict]) -> dict:
    return {k: bytes.fromhex(v) for k, v in (d or {}).items()}


def update_to_json(u: FirmwareUpdate) -> dict:
    return {
        "serial": u.serial,
        "version": u.version,
        "ruleset": ruleset_to_json(u.ruleset),
        "lifetime": u.lifetime,
        "issued_at": u.issued_at,
        "signatures": _sigs_to_json(u.signatures),
    }


def update_from_json(d: dict) -> FirmwareUpdate:
    return FirmwareUpdate(
        as_int(d["serial"]),
        as_int(d["version"]),
        ruleset_from_json(d["ruleset"]),
        as_int(d["lifetime"]),
        as_int(d.get("issued_at", 0)),
        _sigs_from_json(d.get("signatures")),
    )


def extension_to_json(e: ExtensionCertificate) -> dict:
    return {
        "serial": e.serial,
        "target_serial": e.target_serial,
        "new_expiry": e.new_expiry,
        "issued_at": e.issued_at,
        "signatures": _sigs_to_json(e.signatures),
    }


def extension_from_json(d: dict) -> ExtensionCertificate:
    return ExtensionCertificate(
        as_int(d["serial"]),
        as_int(d["target_serial"]),
        as_int(d["new_expiry"]),
        as_int(d.get("issued_at", 0)),
        _sigs_from_json(d.get("signatures")),
    )


def license_to_json(lic: OperatingLicense) -> dict:
    return {
        "device_id": lic.device_id,
        "expiry": lic.expiry,
        "issuer": lic.issuer,
        "signature": lic.signature.hex(),
    }


def license_from_json(d: dict) -> OperatingLicense:
    return OperatingLicense(d["device_id"], as_int(d["expiry"]), d["issuer"], bytes.fromhex(d.get("signature", "")))


def attestation_to_json(a: Attestation) -> dict:
    return {
        "device_id": a.device_id,
        "serial": a.serial,
        "version": a.version,
        "clock": a.clock,
        "mode": MODE_NAMES[a.mode],
        "signature": a.signature.hex(),
    }


def attestation_from_json(d: dict) -> Attestation:
    return Attestation(
        d["device_id"],
        as_int(d["serial"]),
        as_int(d["version"]),
        as_int(d["clock"]),
        MODE_BY_NAME[d["mode"]],
        bytes.fromhex(d.get("signature", "")),
    )


def policy_to_json(p: ApproverPolicy) -> dict:
    if isinstance(p.update_rule, Threshold):
        rule = {"kind": "threshold", "k": p.update_rule.k}
    else:
        rule = {"kind": "all"}
    return {
        "approvers": list(p.approvers),
        "update_rule": rule,
        "extension_fraction": str(p.extension_fraction),
        "baseline": None if p.baseline is None else ruleset_to_json(p.baseline),
        "ratchet": p.ratchet,
        "license_authorities": list(p.license_authorities),
    }


def policy_from_json(d: dict) -> ApproverPolicy:
    approvers = tuple(d["approvers"])
    rule_d = d.get("update_rule") or {"kind": "all"}
    if rule_d["kind"] == "threshold":
        rule = Threshold(as_int(rule_d["k"]), len(approvers))
    else:
        rule = AllApprovers()
    fraction = d.get("extension_fraction")
    if fraction is not None:
        fraction = Fraction(str(fraction))
    baseline = d.get("baseline")
    return ApproverPolicy(
        approvers,
        rule,
        fraction,
        None if baseline is None else ruleset_from_json(baseline),
        bool(d.get("ratchet", False)),
        tuple(d.get("license_authorities", ())),
    )


def location_from_json(d: Optional[dict]) -> Optional[LocationConfig]:
    if d is None:
        return None
    return LocationConfig(frozenset(d["landmarks"]), as_int(d["max_distance"]), bool(d.get("enforce", True)))


def workload_from_json(d: dict) -> WorkloadDescriptor:
    return WorkloadDescriptor(
        CLASS_BY_NAME[d["workload_class"]],
        as_int(d.get("total_flop", 0)),
        as_int(d.get("cluster_size", 1)),
        as_int(d.get("bandwidth", 0)),
        bool(d.get("authorized", False)),
    )
