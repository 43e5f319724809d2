"""Value types for the ruleset-update protocol.

All types are frozen dataclasses; state transitions return new values.
Logical time is an integer tick counter.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Union

from .errors import ProtocolError

Identity = str
Tick = int


class WorkloadClass(enum.IntEnum):
    """Workload categories; the integer value is the 1-byte wire tag."""

    TRAINING = 1
    FINE_TUNING = 2
    INFERENCE = 3
    NON_AI = 4


class Mode(enum.IntEnum):
    ACTIVE = 1
    BASELINE_FALLBACK = 2
    LOCKED_DOWN = 3


class ArtifactKind(enum.IntEnum):
    """Domain-separation tag prefixed to every canonical encoding."""

    UPDATE = 1
    EXTENSION = 2
    LICENSE = 3
    ATTESTATION = 4
    DENIAL = 5
    LANDMARK_RESPONSE = 6


def _check_limit(name: str, value: Optional[int]) -> None:
    if value is not None and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True, order=True)
class CapabilityGrant:
    """One permission. ``None`` limits are unbounded."""

    workload_class: WorkloadClass
    flop_limit: Optional[int] = None
    cluster_size_limit: Optional[int] = None
    bandwidth_limit: Optional[int] = None
    irrevocable: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "workload_class", WorkloadClass(self.workload_class))
        _check_limit("flop_limit", self.flop_limit)
        _check_limit("cluster_size_limit", self.cluster_size_limit)
        _check_limit("bandwidth_limit", self.bandwidth_limit)

    def sort_key(self) -> tuple:
        def lim(v: Optional[int]) -> tuple[int, int]:
            return (1, 0) if v is None else (0, v)

        return (
            int(self.workload_class),
            lim(self.flop_limit),
            lim(self.cluster_size_limit),
            lim(self.bandwidth_limit),
            self.irrevocable,
        )


@dataclass(frozen=True)
class Ruleset:
    ruleset_id: str
    grants: frozenset[CapabilityGrant] = frozenset()
    requires_license: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "grants", frozenset(self.grants))

    def sorted_grants(self) -> list[CapabilityGrant]:
        return sorted(self.grants, key=CapabilityGrant.sort_key)

    @property
    def irrevocable_grants(self) -> frozenset[CapabilityGrant]:
        return frozenset(g for g in self.grants if g.irrevocable)


def default_baseline() -> Ruleset:
    """Small-scale fallback: non-AI work unbounded, inference on up to 8 devices."""
    return Ruleset(
        "baseline",
        frozenset(
            {
                CapabilityGrant(WorkloadClass.NON_AI),
                CapabilityGrant(
                    WorkloadClass.INFERENCE, cluster_size_limit=8, bandwidth_limit=100_000_000_000
                ),
            }
        ),
    )


@dataclass(frozen=True)
class AllApprovers:
    pass


@dataclass(frozen=True)
class Threshold:
    k: int
    n: int


UpdateRule = Union[AllApprovers, Threshold]


def majority_fraction(n: int) -> Fraction:
    return Fraction((n + 2) // 2, n)


@dataclass(frozen=True)
class ApproverPolicy:
    """Who may change the rules, and how many of them it takes.

    ``ratchet`` makes installs reject successors that are not at least as
    permissive as the installed ruleset. ``license_authorities`` lists the
    identities allowed to issue operating licenses.
    """

    approvers: tuple[Identity, ...]
    update_rule: UpdateRule = AllApprovers()
    extension_fraction: Optional[Fraction] = None
    baseline: Optional[Ruleset] = None
    ratchet: bool = False
    license_authorities: tuple[Identity, ...] = ()

    def __post_init__(self) -> None:
        approvers = tuple(self.approvers)
        object.__setattr__(self, "approvers", approvers)
        object.__setattr__(self, "license_authorities", tuple(self.license_authorities))
        if not approvers:
            raise ProtocolError("policy needs at least one approver")
        if len(set(approvers)) != len(approvers):
            raise ProtocolError("approver identities must be unique")
        rule = self.update_rule
        if isinstance(rule, Threshold):
            if rule.n != len(approvers):
                raise ProtocolError(f"threshold n={rule.n} but {len(approvers)} approvers")
            if not 1 <= rule.k <= rule.n:
                raise ProtocolError(f"threshold k={rule.k} outside [1, {rule.n}]")
        elif not isinstance(rule, AllApprovers):
            raise ProtocolError(f"unknown update rule {rule!r}")
        fraction = self.extension_fraction
        if fraction is None:
            fraction = majority_fraction(len(approvers))
        fraction = Fraction(fraction)
        if not 0 < fraction <= 1:
            raise ProtocolError(f"extension_fraction must be in (0, 1], got {fraction}")
        object.__setattr__(self, "extension_fraction", fraction)

    @property
    def extension_quorum(self) -> int:
        q = self.extension_fraction * len(self.approvers)
        return -(-q.numerator // q.denominator)


Signatures = Mapping[Identity, bytes]


@dataclass(frozen=True)
class FirmwareUpdate:
    serial: int
    version: int
    ruleset: Ruleset
    lifetime: int
    issued_at: Tick = 0
    signatures: Mapping[Identity, bytes] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.serial <= 0:
            raise ProtocolError("update serial must be positive")
        if self.version <= 0:
            raise ProtocolError("update version must be positive")
        if self.lifetime <= 0:
            raise ProtocolError("update lifetime must be positive")
        object.__setattr__(self, "signatures", dict(self.signatures))

    @property
    def window(self) -> tuple[Tick, Tick]:
        return (self.issued_at, self.issued_at + self.lifetime)

    @property
    def designates(self) -> int:
        """Serial of the firmware this artifact keeps live."""
        return self.serial

    def with_signatures(self, signatures: Signatures) -> FirmwareUpdate:
        return FirmwareUpdate(
            self.serial, self.version, self.ruleset, self.lifetime, self.issued_at, signatures
        )


@dataclass(frozen=True)
class ExtensionCertificate:
    """Prolongs the installed update ``target_serial`` until ``new_expiry``.

    Extensions draw their own ``serial`` from the signer's stream, and are
    live on ``[issued_at, new_expiry)``.
    """

    serial: int
    target_serial: int
    new_expiry: Tick
    issued_at: Tick = 0
    signatures: Mapping[Identity, bytes] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.serial <= 0:
            raise ProtocolError("extension serial must be positive")
        if self.new_expiry <= self.issued_at:
            raise ProtocolError("extension must expire after it is issued")
        object.__setattr__(self, "signatures", dict(self.signatures))

    @property
    def window(self) -> tuple[Tick, Tick]:
        return (self.issued_at, self.new_expiry)

    @property
    def designates(self) -> int:
        return self.target_serial

    def with_signatures(self, signatures: Signatures) -> ExtensionCertificate:
        return ExtensionCertificate(
            self.serial, self.target_serial, self.new_expiry, self.issued_at, signatures
        )


Artifact = Union[FirmwareUpdate, ExtensionCertificate]


@dataclass(frozen=True)
class OperatingLicense:
    device_id: str
    expiry: Tick
    issuer: Identity
    signature: bytes = field(default=b"", compare=False)


@dataclass(frozen=True)
class DenialRecord:
    """Signed statement that renewals for ``device_ids`` are refused."""

    issuer: Identity
    device_ids: tuple[str, ...]
    issued_at: Tick
    signature: bytes = field(default=b"", compare=False)

    @property
    def record_id(self) -> str:
        from .crypto import digest_hex
        from .encoding import canonical_encode

        return digest_hex(canonical_encode(self))[:16]


@dataclass(frozen=True)
class LocationConfig:
    landmarks: frozenset[Identity]
    max_distance: int
    enforce: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "landmarks", frozenset(self.landmarks))


@dataclass(frozen=True)
class LandmarkResponse:
    landmark: Identity
    device_id: str
    distance: int
    tick: Tick
    signature: bytes = field(default=b"", compare=False)


@dataclass(frozen=True)
class InstalledFirmware:
    serial: int
    version: int
    ruleset: Ruleset
    expiry: Tick


@dataclass(frozen=True)
class DeviceState:
    """One guarantee processor.

    A freshly provisioned device has no update (``installed is None``,
    ``rollback_floor == 0``) and runs its baseline until the first install.
    ``carried_grants`` accumulates irrevocable grants from every ruleset
    the device has ever run.
    """

    device_id: str
    clock: Tick = 0
    mode: Mode = Mode.BASELINE_FALLBACK
    installed: Optional[InstalledFirmware] = None
    rollback_floor: int = 0
    baseline: Optional[Ruleset] = None
    carried_grants: frozenset[CapabilityGrant] = frozenset()
    license: Optional[OperatingLicense] = None
    location_config: Optional[LocationConfig] = None
    power_log: tuple[tuple[Tick, Tick], ...] = ()

    @property
    def installed_serial(self) -> int:
        return 0 if self.installed is None else self.installed.serial

    @property
    def expiry(self) -> Optional[Tick]:
        return None if self.installed is None else self.installed.expiry

    @property
    def key_identity(self) -> Identity:
        return device_key_identity(self.device_id)


def device_key_identity(device_id: str) -> Identity:
    return f"device:{device_id}"


def provision_device(
    device_id: str,
    policy: ApproverPolicy,
    *,
    clock: Tick = 0,
    location_config: Optional[LocationConfig] = None,
) -> DeviceState:
    """A device as it leaves assembly, with the policy's baseline burned in."""
    return DeviceState(
        device_id=device_id,
        clock=clock,
        mode=Mode.BASELINE_FALLBACK,
        baseline=policy.baseline,
        location_config=location_config,
    )


@dataclass(frozen=True)
class WorkloadDescriptor:
    workload_class: WorkloadClass
    total_flop: int = 0
    cluster_size: int = 1
    bandwidth: int = 0
    authorized: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "workload_class", WorkloadClass(self.workload_class))
        for name in ("total_flop", "cluster_size", "bandwidth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Attestation:
    device_id: str
    serial: int
    version: int
    clock: Tick
    mode: Mode
    signature: bytes = field(default=b"", compare=False)
