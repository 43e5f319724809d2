"""Deterministic mock signatures.

``signature = SHA-256(len32(identity) || identity || payload)``. This is
forgeable by anyone who knows the identity; it stands in for a real
scheme so that test vectors are reproducible. Swap ``sign_payload`` and
``verify_payload`` for an unforgeable scheme without touching callers.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from .encoding import lp_str


@dataclass(frozen=True)
class SigningKey:
    identity: str


def digest_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _mock_signature(identity: str, payload: bytes) -> bytes:
    return hashlib.sha256(lp_str(identity) + payload).digest()


def sign_payload(key: SigningKey, payload: bytes) -> bytes:
    return _mock_signature(key.identity, payload)


def verify_payload(identity: str, payload: bytes, signature: bytes) -> bool:
    if not isinstance(signature, (bytes, bytearray)) or len(signature) != 32:
        return False
    return hmac.compare_digest(_mock_signature(identity, payload), bytes(signature))
