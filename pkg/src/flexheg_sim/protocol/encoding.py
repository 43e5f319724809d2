"""Canonical byte encoding of signed artifacts.

Layout rules (identical across implementations):

* the first byte is the ``ArtifactKind`` tag;
* fields follow in declaration order, signatures excluded;
* integers are 8-byte big-endian unsigned;
* strings are UTF-8, prefixed by a 4-byte big-endian length;
* enums and booleans are single bytes;
* a grant list is a 4-byte count followed by grants in ``sort_key`` order;
* a limit is ``0x00`` (unbounded) or ``0x01`` + a length-prefixed minimal
  big-endian magnitude, because FLOP limits overflow 64 bits.
"""

from __future__ import annotations

import struct
from functools import singledispatch
from typing import Optional

from .model import (
    ArtifactKind,
    Attestation,
    CapabilityGrant,
    DenialRecord,
    ExtensionCertificate,
    FirmwareUpdate,
    LandmarkResponse,
    OperatingLicense,
    Ruleset,
)

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")


def u64(value: int) -> bytes:
    return _U64.pack(value)


def u8(value: int) -> bytes:
    return bytes((value,))


def lp_bytes(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def lp_str(text: str) -> bytes:
    return lp_bytes(text.encode("utf-8"))


def limit(value: Optional[int]) -> bytes:
    if value is None:
        return b"\x00"
    return b"\x01" + lp_bytes(value.to_bytes((value.bit_length() + 7) // 8, "big"))


def encode_grant(grant: CapabilityGrant) -> bytes:
    return b"".join(
        (
            u8(grant.workload_class),
            limit(grant.flop_limit),
            limit(grant.cluster_size_limit),
            limit(grant.bandwidth_limit),
            u8(grant.irrevocable),
        )
    )


def encode_ruleset(ruleset: Ruleset) -> bytes:
    grants = ruleset.sorted_grants()
    parts = [lp_str(ruleset.ruleset_id), _U32.pack(len(grants))]
    parts.extend(encode_grant(g) for g in grants)
    parts.append(u8(ruleset.requires_license))
    return b"".join(parts)


@singledispatch
def canonical_encode(value) -> bytes:
    raise TypeError(f"no canonical encoding for {type(value).__name__}")


@canonical_encode.register
def _(value: FirmwareUpdate) -> bytes:
    return b"".join(
        (
            u8(ArtifactKind.UPDATE),
            u64(value.serial),
            u64(value.version),
            encode_ruleset(value.ruleset),
            u64(value.lifetime),
            u64(value.issued_at),
        )
    )


@canonical_encode.register
def _(value: ExtensionCertificate) -> bytes:
    return b"".join(
        (
            u8(ArtifactKind.EXTENSION),
            u64(value.serial),
            u64(value.target_serial),
            u64(value.new_expiry),
            u64(value.issued_at),
        )
    )


@canonical_encode.register
def _(value: OperatingLicense) -> bytes:
    return b"".join(
        (u8(ArtifactKind.LICENSE), lp_str(value.device_id), u64(value.expiry), lp_str(value.issuer))
    )


@canonical_encode.register
def _(value: Attestation) -> bytes:
    return b"".join(
        (
            u8(ArtifactKind.ATTESTATION),
            lp_str(value.device_id),
            u64(value.serial),
            u64(value.version),
            u64(value.clock),
            u8(value.mode),
        )
    )


@canonical_encode.register
def _(value: DenialRecord) -> bytes:
    parts = [u8(ArtifactKind.DENIAL), lp_str(value.issuer), _U32.pack(len(value.device_ids))]
    parts.extend(lp_str(d) for d in value.device_ids)
    parts.append(u64(value.issued_at))
    return b"".join(parts)


@canonical_encode.register
def _(value: LandmarkResponse) -> bytes:
    return b"".join(
        (
            u8(ArtifactKind.LANDMARK_RESPONSE),
            lp_str(value.landmark),
            lp_str(value.device_id),
            u64(value.distance),
            u64(value.tick),
        )
    )
