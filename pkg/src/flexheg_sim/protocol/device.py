"""Guarantee-processor state transitions.

Every function takes a ``DeviceState`` and returns a new one (or a verdict);
nothing is mutated. Rejected transitions raise a ``ProtocolError`` subclass.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional

from .crypto import SigningKey, sign_payload, verify_payload
from .encoding import canonical_encode
from .errors import (
    AlreadyExpired,
    ApprovalInvalid,
    DeviceLockedDown,
    DeviceMismatch,
    InsufficientSignatures,
    NonMonotoneExpiry,
    RatchetViolation,
    RenewalDenied,
    RollbackRejected,
    UnauthorizedIssuer,
    UnknownDevice,
    WrongTarget,
)
from .model import (
    AllApprovers,
    ApproverPolicy,
    Artifact,
    Attestation,
    CapabilityGrant,
    DenialRecord,
    DeviceState,
    ExtensionCertificate,
    FirmwareUpdate,
    Identity,
    InstalledFirmware,
    LandmarkResponse,
    Mode,
    OperatingLicense,
    Ruleset,
    WorkloadClass,
    WorkloadDescriptor,
)

# -- approval -----------------------------------------------------------------


@dataclass(frozen=True)
class ApprovalVerdict:
    accepted: bool
    valid_signers: tuple[Identity, ...] = ()
    missing_approver: Optional[Identity] = None
    shortfall: int = 0

    def __bool__(self) -> bool:
        return self.accepted

    @property
    def reason(self) -> Optional[str]:
        if self.accepted:
            return None
        if self.missing_approver is not None:
            return f"missing approver {self.missing_approver}"
        return f"{self.shortfall} signature(s) short of quorum"


def valid_signers(artifact: Artifact, approvers: Iterable[Identity]) -> tuple[Identity, ...]:
    """Approvers (in policy order) holding a valid signature over ``artifact``."""
    payload = canonical_encode(artifact)
    sigs = artifact.signatures
    return tuple(a for a in approvers if a in sigs and verify_payload(a, payload, sigs[a]))


def verify_update_approval(update: FirmwareUpdate, policy: ApproverPolicy) -> ApprovalVerdict:
    signers = valid_signers(update, policy.approvers)
    rule = policy.update_rule
    if isinstance(rule, AllApprovers):
        present = set(signers)
        for approver in policy.approvers:
            if approver not in present:
                return ApprovalVerdict(False, signers, missing_approver=approver)
        return ApprovalVerdict(True, signers)
    shortfall = rule.k - len(signers)
    if shortfall > 0:
        return ApprovalVerdict(False, signers, shortfall=shortfall)
    return ApprovalVerdict(True, signers)


# -- ratchet ------------------------------------------------------------------


def _at_least(new: Optional[int], old: Optional[int]) -> bool:
    if new is None:
        return True
    return old is not None and new >= old


def grant_dominates(new: CapabilityGrant, old: CapabilityGrant) -> bool:
    return (
        new.workload_class == old.workload_class
        and _at_least(new.flop_limit, old.flop_limit)
        and _at_least(new.cluster_size_limit, old.cluster_size_limit)
        and _at_least(new.bandwidth_limit, old.bandwidth_limit)
        and (new.irrevocable or not old.irrevocable)
    )


def check_ratchet(old: Ruleset, new: Ruleset) -> bool:
    """True iff ``new`` is at least as permissive as ``old``, grant by grant."""
    return all(any(grant_dominates(n, o) for n in new.grants) for o in old.grants)


# -- install / clock / extend -----------------------------------------------


def install_update(device: DeviceState, update: FirmwareUpdate, policy: ApproverPolicy) -> DeviceState:
    if device.mode is Mode.LOCKED_DOWN:
        raise DeviceLockedDown(f"{device.device_id} is locked down")
    if update.serial <= device.rollback_floor:
        raise RollbackRejected(
            f"{device.device_id}: serial {update.serial} <= rollback floor {device.rollback_floor}"
        )
    verdict = verify_update_approval(update, policy)
    if not verdict:
        raise ApprovalInvalid(f"serial {update.serial}: {verdict.reason}")
    previous = device.installed
    if policy.ratchet and previous is not None and not check_ratchet(previous.ruleset, update.ruleset):
        raise RatchetViolation(
            f"ruleset {update.ruleset.ruleset_id} is less permissive than {previous.ruleset.ruleset_id}"
        )
    carried = device.carried_grants
    if previous is not None:
        carried = carried | previous.ruleset.irrevocable_grants
    return replace(
        device,
        mode=Mode.ACTIVE,
        installed=InstalledFirmware(
            update.serial, update.version, update.ruleset, device.clock + update.lifetime
        ),
        rollback_floor=update.serial,
        carried_grants=carried,
    )


def advance_clock(device: DeviceState, dt: int) -> DeviceState:
    if dt < 0:
        raise ValueError("clock cannot run backwards")
    clock = device.clock + dt
    mode = device.mode
    if mode is Mode.ACTIVE and clock >= device.installed.expiry:
        mode = Mode.BASELINE_FALLBACK if device.baseline is not None else Mode.LOCKED_DOWN
    return replace(device, clock=clock, mode=mode)


def extend_lifetime(
    device: DeviceState, ext: ExtensionCertificate, policy: ApproverPolicy
) -> DeviceState:
    if device.mode is not Mode.ACTIVE:
        raise AlreadyExpired(f"{device.device_id} is {device.mode.name}, extensions need ACTIVE")
    if ext.target_serial != device.installed.serial:
        raise WrongTarget(
            f"extension targets serial {ext.target_serial}, device runs {device.installed.serial}"
        )
    if ext.new_expiry <= device.installed.expiry:
        raise NonMonotoneExpiry(
            f"new expiry {ext.new_expiry} <= current expiry {device.installed.expiry}"
        )
    signers = valid_signers(ext, policy.approvers)
    if len(signers) < policy.extension_quorum:
        raise InsufficientSignatures(
            f"{len(signers)} of {policy.extension_quorum} required extension signatures"
        )
    return replace(device, installed=replace(device.installed, expiry=ext.new_expiry))


# -- workloads ----------------------------------------------------------------


class DenyReason(enum.Enum):
    LOCKED_DOWN = "LockedDown"
    NO_MATCHING_GRANT = "NoMatchingGrant"
    FLOP_LIMIT_EXCEEDED = "FlopLimitExceeded"
    CLUSTER_TOO_LARGE = "ClusterTooLarge"
    BANDWIDTH_TOO_HIGH = "BandwidthTooHigh"
    LICENSE_MISSING_OR_EXPIRED = "LicenseMissingOrExpired"


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: Optional[DenyReason] = None
    grant: Optional[CapabilityGrant] = None

    def __bool__(self) -> bool:
        return self.allowed

    def label(self) -> str:
        return "Allow" if self.allowed else f"Deny({self.reason.value})"


def grant_failures(
    grant: CapabilityGrant, w: WorkloadDescriptor, *, flop_waived: bool = False
) -> list[DenyReason]:
    failures = []
    if not flop_waived and grant.flop_limit is not None and w.total_flop > grant.flop_limit:
        failures.append(DenyReason.FLOP_LIMIT_EXCEEDED)
    if grant.cluster_size_limit is not None and w.cluster_size > grant.cluster_size_limit:
        failures.append(DenyReason.CLUSTER_TOO_LARGE)
    if grant.bandwidth_limit is not None and w.bandwidth > grant.bandwidth_limit:
        failures.append(DenyReason.BANDWIDTH_TOO_HIGH)
    return failures


def match_grants(
    grants: Iterable[CapabilityGrant], w: WorkloadDescriptor, *, flop_waived: bool = False
) -> Decision:
    """Allow if any grant of the workload's class admits it.

    On denial, the reason comes from the closest grant (fewest violated
    limits); ties go to the lowest ``sort_key``.
    """
    best: Optional[tuple[int, tuple, DenyReason]] = None
    for grant in grants:
        if grant.workload_class != w.workload_class:
            continue
        failures = grant_failures(grant, w, flop_waived=flop_waived)
        if not failures:
            return Decision(True, grant=grant)
        key = (len(failures), grant.sort_key(), failures[0])
        if best is None or key[:2] < best[:2]:
            best = key
    if best is None:
        return Decision(False, DenyReason.NO_MATCHING_GRANT)
    return Decision(False, best[2])


def license_valid(device: DeviceState) -> bool:
    lic = device.license
    return (
        lic is not None
        and lic.device_id == device.device_id
        and device.clock < lic.expiry
        and verify_payload(lic.issuer, canonical_encode(lic), lic.signature)
    )


def effective_grants(device: DeviceState) -> frozenset[CapabilityGrant]:
    if device.mode is Mode.ACTIVE:
        return device.installed.ruleset.grants | device.carried_grants
    if device.mode is Mode.BASELINE_FALLBACK and device.baseline is not None:
        return device.baseline.grants
    return frozenset()


def evaluate_workload(device: DeviceState, w: WorkloadDescriptor) -> Decision:
    if device.mode is Mode.LOCKED_DOWN:
        return Decision(False, DenyReason.LOCKED_DOWN)
    if device.mode is Mode.BASELINE_FALLBACK:
        return match_grants(effective_grants(device), w)
    if device.installed.ruleset.requires_license and not license_valid(device):
        return Decision(False, DenyReason.LICENSE_MISSING_OR_EXPIRED)
    waived = w.workload_class is WorkloadClass.TRAINING and w.authorized
    return match_grants(effective_grants(device), w, flop_waived=waived)


# -- operating licenses -------------------------------------------------------


@dataclass(frozen=True)
class LicenseAuthority:
    identity: Identity
    denials: tuple[DenialRecord, ...] = ()

    def denial_for(self, device_id: str) -> Optional[DenialRecord]:
        for record in self.denials:
            if device_id in record.device_ids:
                return record
        return None


def issue_license(
    issuer: LicenseAuthority, device_id: str, duration: int, now: int, policy: ApproverPolicy
) -> OperatingLicense:
    if issuer.identity not in policy.license_authorities:
        raise UnauthorizedIssuer(f"{issuer.identity} is not a configured license authority")
    if duration <= 0:
        raise ValueError("license duration must be positive")
    record = issuer.denial_for(device_id)
    if record is not None:
        raise RenewalDenied(device_id, record.record_id)
    lic = OperatingLicense(device_id, now + duration, issuer.identity)
    return replace(lic, signature=sign_payload(SigningKey(issuer.identity), canonical_encode(lic)))


def deny_renewal(
    issuer: LicenseAuthority, device_ids: Iterable[str], now: int
) -> tuple[DenialRecord, LicenseAuthority]:
    record = DenialRecord(issuer.identity, tuple(sorted(set(device_ids))), now)
    record = replace(
        record, signature=sign_payload(SigningKey(issuer.identity), canonical_encode(record))
    )
    return record, replace(issuer, denials=issuer.denials + (record,))


def verify_denial(record: DenialRecord) -> bool:
    return verify_payload(record.issuer, canonical_encode(record), record.signature)


def apply_license(
    device: DeviceState, lic: OperatingLicense, authorities: Iterable[Identity]
) -> DeviceState:
    if lic.device_id != device.device_id:
        raise DeviceMismatch(f"license for {lic.device_id} offered to {device.device_id}")
    if lic.issuer not in set(authorities):
        raise UnauthorizedIssuer(f"{lic.issuer} is not a license authority")
    if not verify_payload(lic.issuer, canonical_encode(lic), lic.signature):
        raise UnauthorizedIssuer(f"license signature from {lic.issuer} does not verify")
    return replace(device, license=lic)


# -- location -----------------------------------------------------------------


def sign_landmark_response(r: LandmarkResponse) -> LandmarkResponse:
    return replace(r, signature=sign_payload(SigningKey(r.landmark), canonical_encode(r)))


def verify_location(device: DeviceState, responses: Iterable[LandmarkResponse]) -> bool:
    config = device.location_config
    if config is None:
        raise ValueError(f"{device.device_id} has no location configuration")
    for r in responses:
        if (
            r.landmark in config.landmarks
            and r.device_id == device.device_id
            and r.distance <= config.max_distance
            and verify_payload(r.landmark, canonical_encode(r), r.signature)
        ):
            return True
    return False


def enforce_location(device: DeviceState, responses: Iterable[LandmarkResponse]) -> tuple[bool, DeviceState]:
    ok = verify_location(device, responses)
    if not ok and device.location_config.enforce:
        return ok, replace(device, mode=Mode.LOCKED_DOWN)
    return ok, device


# -- attestation --------------------------------------------------------------


def produce_attestation(device: DeviceState) -> Attestation:
    installed = device.installed
    att = Attestation(
        device.device_id,
        0 if installed is None else installed.serial,
        0 if installed is None else installed.version,
        device.clock,
        device.mode,
    )
    return replace(att, signature=sign_payload(SigningKey(device.key_identity), canonical_encode(att)))


def verify_attestation(att: Attestation, registry: Mapping[str, Identity]) -> bool:
    """``registry`` maps device ids to the key identities burned in at assembly."""
    if att.device_id not in registry:
        raise UnknownDevice(att.device_id)
    return verify_payload(registry[att.device_id], canonical_encode(att), att.signature)
