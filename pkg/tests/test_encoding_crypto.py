import hashlib
import json
import struct
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexheg_sim.protocol import (
    Attestation,
    CapabilityGrant,
    ExtensionCertificate,
    FirmwareUpdate,
    Mode,
    OperatingLicense,
    Ruleset,
    SigningKey,
    WorkloadClass,
    canonical_encode,
    sign_payload,
    verify_payload,
)
from flexheg_sim.protocol.model import DenialRecord, LandmarkResponse

VECTORS = json.loads((Path(__file__).parent / "fixtures" / "vectors.json").read_text())


def lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def ref_limit(v):
    if v is None:
        return b"\x00"
    return b"\x01" + lp(v.to_bytes((v.bit_length() + 7) // 8, "big"))


def ref_update(u: FirmwareUpdate) -> bytes:
    """Field-by-field reference encoder written from the layout rules."""
    grants = sorted(
        u.ruleset.grants,
        key=lambda g: (
            int(g.workload_class),
            *(((1, 0) if x is None else (0, x)) for x in (g.flop_limit, g.cluster_size_limit, g.bandwidth_limit)),
            g.irrevocable,
        ),
    )
    body = lp(u.ruleset.ruleset_id.encode()) + struct.pack(">I", len(grants))
    for g in grants:
        body += bytes([int(g.workload_class)])
        body += ref_limit(g.flop_limit) + ref_limit(g.cluster_size_limit) + ref_limit(g.bandwidth_limit)
        body += bytes([g.irrevocable])
    body += bytes([u.ruleset.requires_license])
    return b"\x01" + struct.pack(">QQ", u.serial, u.version) + body + struct.pack(">QQ", u.lifetime, u.issued_at)


limits = st.one_of(st.none(), st.integers(0, 10**27))
grants = st.builds(
    CapabilityGrant,
    st.sampled_from(list(WorkloadClass)),
    limits,
    limits,
    limits,
    st.booleans(),
)
rulesets = st.builds(Ruleset, st.text(max_size=8), st.frozensets(grants, max_size=4), st.booleans())
updates = st.builds(
    FirmwareUpdate,
    st.integers(1, 2**63),
    st.integers(1, 2**63),
    rulesets,
    st.integers(1, 2**40),
    st.integers(0, 2**40),
)


def test_golden_update_vector():
    u = FirmwareUpdate(1, 1, Ruleset("r0"), 10, 0)
    assert canonical_encode(u).hex() == VECTORS["encoding"][0]["hex"]


@given(updates)
def test_update_encoding_matches_reference(u):
    assert canonical_encode(u) == ref_update(u)


@given(updates)
def test_encoding_deterministic_and_ignores_signatures(u):
    signed = u.with_signatures({"A": b"\x01" * 32})
    assert canonical_encode(u) == canonical_encode(u) == canonical_encode(signed)


def test_serial_change_changes_bytes():
    a = FirmwareUpdate(1, 1, Ruleset("r0"), 10)
    b = FirmwareUpdate(2, 1, Ruleset("r0"), 10)
    assert canonical_encode(a) != canonical_encode(b)


@given(updates, updates)
def test_update_encoding_injective(a, b):
    if canonical_encode(a) == canonical_encode(b):
        assert a == b


def test_grant_order_does_not_matter():
    g1 = CapabilityGrant(WorkloadClass.TRAINING, flop_limit=10**24)
    g2 = CapabilityGrant(WorkloadClass.INFERENCE)
    a = FirmwareUpdate(1, 1, Ruleset("r", frozenset([g1, g2])), 5)
    b = FirmwareUpdate(1, 1, Ruleset("r", frozenset([g2, g1])), 5)
    assert canonical_encode(a) == canonical_encode(b)


def test_other_artifacts_have_distinct_tags():
    encodings = [
        canonical_encode(FirmwareUpdate(1, 1, Ruleset("r"), 5)),
        canonical_encode(ExtensionCertificate(1, 1, 5)),
        canonical_encode(OperatingLicense("d", 5, "L")),
        canonical_encode(Attestation("d", 1, 1, 0, Mode.ACTIVE)),
        canonical_encode(DenialRecord("L", ("d",), 0)),
        canonical_encode(LandmarkResponse("lm", "d", 3, 0)),
    ]
    assert [e[0] for e in encodings] == [1, 2, 3, 4, 5, 6]


def test_extension_and_license_layout():
    ext = ExtensionCertificate(6, 4, 120, 45)
    assert canonical_encode(ext) == b"\x02" + struct.pack(">QQQQ", 6, 4, 120, 45)
    lic = OperatingLicense("d1", 200, "L")
    assert canonical_encode(lic) == b"\x03" + lp(b"d1") + struct.pack(">Q", 200) + lp(b"L")


def test_unknown_type_rejected():
    with pytest.raises(TypeError):
        canonical_encode(object())


@pytest.mark.parametrize("vec", VECTORS["signatures"], ids=lambda v: f"{v['identity']}-{len(v['payload_hex'])}")
def test_published_signature_vectors(vec):
    payload = bytes.fromhex(vec["payload_hex"])
    sig = sign_payload(SigningKey(vec["identity"]), payload)
    assert sig.hex() == vec["signature_hex"]
    assert verify_payload(vec["identity"], payload, bytes.fromhex(vec["signature_hex"]))


@given(st.text(max_size=10), st.binary(max_size=64))
def test_sign_verify_roundtrip(identity, payload):
    sig = sign_payload(SigningKey(identity), payload)
    assert sig == hashlib.sha256(lp(identity.encode()) + payload).digest()
    assert verify_payload(identity, payload, sig)


@given(st.binary(min_size=1, max_size=64), st.data())
def test_flipped_bit_fails(payload, data):
    sig = sign_payload(SigningKey("A"), payload)
    i = data.draw(st.integers(0, len(payload) * 8 - 1))
    flipped = bytearray(payload)
    flipped[i // 8] ^= 1 << (i % 8)
    assert not verify_payload("A", bytes(flipped), sig)


def test_wrong_identity_and_malformed_signatures_fail():
    sig = sign_payload(SigningKey("A"), b"x")
    assert not verify_payload("B", b"x", sig)
    assert not verify_payload("A", b"x", sig[:-1])
    assert not verify_payload("A", b"x", "not bytes")
