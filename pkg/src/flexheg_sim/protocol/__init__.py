"""Signed-ruleset update protocol for simulated guarantee processors."""

from .crypto import SigningKey, sign_payload, verify_payload
from .device import (
    ApprovalVerdict,
    Decision,
    DenyReason,
    LicenseAuthority,
    advance_clock,
    apply_license,
    check_ratchet,
    deny_renewal,
    effective_grants,
    enforce_location,
    evaluate_workload,
    extend_lifetime,
    install_update,
    issue_license,
    produce_attestation,
    sign_landmark_response,
    verify_attestation,
    verify_denial,
    verify_location,
    verify_update_approval,
)
from .encoding import canonical_encode
from .equivocation import Conflict, ConflictKind, detect_equivocation
from . import errors as _errors
from .errors import *  # noqa: F403
from .model import (
    AllApprovers,
    ApproverPolicy,
    Attestation,
    CapabilityGrant,
    DenialRecord,
    DeviceState,
    ExtensionCertificate,
    FirmwareUpdate,
    LandmarkResponse,
    LocationConfig,
    Mode,
    OperatingLicense,
    Ruleset,
    Threshold,
    WorkloadClass,
    WorkloadDescriptor,
    default_baseline,
    device_key_identity,
    provision_device,
)
from .signer import SignerDevice, approver_sign_extension, approver_sign_update, raw_sign

__all__ = [
    "AllApprovers",
    "ApprovalVerdict",
    "ApproverPolicy",
    "Attestation",
    "CapabilityGrant",
    "Conflict",
    "ConflictKind",
    "Decision",
    "DenialRecord",
    "DenyReason",
    "DeviceState",
    "ExtensionCertificate",
    "FirmwareUpdate",
    "LandmarkResponse",
    "LicenseAuthority",
    "LocationConfig",
    "Mode",
    "OperatingLicense",
    "Ruleset",
    "SignerDevice",
    "SigningKey",
    "Threshold",
    "WorkloadClass",
    "WorkloadDescriptor",
    "advance_clock",
    "apply_license",
    "approver_sign_extension",
    "approver_sign_update",
    "canonical_encode",
    "check_ratchet",
    "default_baseline",
    "deny_renewal",
    "detect_equivocation",
    "device_key_identity",
    "effective_grants",
    "enforce_location",
    "evaluate_workload",
    "extend_lifetime",
    "install_update",
    "issue_license",
    "produce_attestation",
    "provision_device",
    "raw_sign",
    "sign_landmark_response",
    "sign_payload",
    "verify_attestation",
    "verify_denial",
    "verify_location",
    "verify_payload",
    "verify_update_approval",
] + list(_errors.__all__)
