"""Approver keys held behind an append-only signing transcript.

A signer refuses to produce two artifacts that could keep different
firmware live at the same tick, and never signs a serial at or below one it
has already used (re-signing byte-identical content is idempotent).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .crypto import SigningKey, digest_hex, sign_payload
from .encoding import canonical_encode
from .errors import ConflictingWindow, SerialRegression
from .model import Artifact, ArtifactKind, ExtensionCertificate, FirmwareUpdate, Identity


def windows_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    """Half-open ``[start, end)`` intersection test."""
    return a[0] < b[1] and b[0] < a[1]


@dataclass(frozen=True)
class TranscriptEntry:
    kind: ArtifactKind
    serial: int
    window: tuple[int, int]
    designates: int
    payload_digest: str


@dataclass(frozen=True)
class SignerDevice:
    identity: Identity
    next_serial: int = 1
    transcript: tuple[TranscriptEntry, ...] = ()

    @property
    def key(self) -> SigningKey:
        return SigningKey(self.identity)


def _entry_for(artifact: Artifact, payload: bytes) -> TranscriptEntry:
    kind = ArtifactKind.UPDATE if isinstance(artifact, FirmwareUpdate) else ArtifactKind.EXTENSION
    return TranscriptEntry(kind, artifact.serial, artifact.window, artifact.designates, digest_hex(payload))


def _sign(signer: SignerDevice, artifact: Artifact) -> tuple[bytes, SignerDevice]:
    payload = canonical_encode(artifact)
    entry = _entry_for(artifact, payload)
    for prior in signer.transcript:
        if prior.serial == entry.serial:
            if prior.payload_digest == entry.payload_digest:
                return sign_payload(signer.key, payload), signer
            raise ConflictingWindow(
                f"{signer.identity} already signed different content under serial {entry.serial}"
            )
    if entry.serial < signer.next_serial:
        raise SerialRegression(
            f"{signer.identity} is at serial {signer.next_serial}, refusing {entry.serial}"
        )
    for prior in signer.transcript:
        if prior.designates != entry.designates and windows_overlap(prior.window, entry.window):
            raise ConflictingWindow(
                f"{signer.identity}: serial {entry.serial} window {entry.window} overlaps "
                f"serial {prior.serial} window {prior.window} for different firmware"
            )
    signed = replace(
        signer, next_serial=entry.serial + 1, transcript=signer.transcript + (entry,)
    )
    return sign_payload(signer.key, payload), signed


def approver_sign_update(signer: SignerDevice, update: FirmwareUpdate) -> tuple[bytes, SignerDevice]:
    return _sign(signer, update)


def approver_sign_extension(
    signer: SignerDevice, ext: ExtensionCertificate
) -> tuple[bytes, SignerDevice]:
    return _sign(signer, ext)


def raw_sign(identity: Identity, artifact: Artifact) -> bytes:
    """Sign with no transcript check, as a compromised or unprotected key would."""
    return sign_payload(SigningKey(identity), canonical_encode(artifact))
