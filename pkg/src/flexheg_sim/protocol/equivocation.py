"""Find same-signer artifacts that could keep two firmware versions live."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .crypto import digest_hex, verify_payload
from .encoding import canonical_encode
from .model import Artifact, ArtifactKind, FirmwareUpdate, Identity
from .signer import windows_overlap


class ConflictKind(enum.Enum):
    OVERLAPPING_WINDOWS = "overlapping_windows"
    DUPLICATE_SERIAL = "duplicate_serial"


@dataclass(frozen=True, order=True)
class ArtifactRef:
    kind: ArtifactKind
    serial: int
    designates: int
    window: tuple[int, int]
    digest: str

    @classmethod
    def of(cls, artifact: Artifact) -> ArtifactRef:
        kind = ArtifactKind.UPDATE if isinstance(artifact, FirmwareUpdate) else ArtifactKind.EXTENSION
        return cls(
            kind, artifact.serial, artifact.designates, artifact.window,
            digest_hex(canonical_encode(artifact)),
        )


@dataclass(frozen=True, order=True)
class Conflict:
    signer: Identity
    first: ArtifactRef
    second: ArtifactRef
    kinds: tuple[ConflictKind, ...]

    def describe(self) -> str:
        what = "+".join(k.value for k in self.kinds)
        return (
            f"{self.signer}: {self.first.kind.name.lower()} #{self.first.serial} vs "
            f"{self.second.kind.name.lower()} #{self.second.serial} ({what})"
        )


def _signed_by(artifacts: Iterable[Artifact], signers: Optional[Sequence[Identity]]):
    """Group distinct artifacts by every identity holding a valid signature."""
    by_signer: dict[Identity, dict[str, ArtifactRef]] = defaultdict(dict)
    allowed = None if signers is None else set(signers)
    for artifact in artifacts:
        payload = canonical_encode(artifact)
        ref = None
        for identity, sig in artifact.signatures.items():
            if allowed is not None and identity not in allowed:
                continue
            if not verify_payload(identity, payload, sig):
                continue
            ref = ref or ArtifactRef.of(artifact)
            by_signer[identity][ref.digest] = ref
    return by_signer


def detect_equivocation(
    artifacts: Iterable[Artifact], signers: Optional[Sequence[Identity]] = None
) -> list[Conflict]:
    """Every same-signer pair that conflicts, sorted.

    Two artifacts conflict when their live windows overlap while keeping
    different firmware alive, or when they reuse a serial with different
    content. Byte-identical duplicates collapse to one artifact. Only valid
    signatures count; ``signers`` optionally restricts whose are considered.
    """
    found: list[Conflict] = []
    for signer, refs_by_digest in _signed_by(artifacts, signers).items():
        refs = sorted(refs_by_digest.values(), key=lambda r: (r.window[0], r.window[1], r))
        pairs: dict[tuple[ArtifactRef, ArtifactRef], set[ConflictKind]] = defaultdict(set)

        # sweep: only artifacts still open at ref's start can overlap it
        active: list[ArtifactRef] = []
        for ref in refs:
            active = [a for a in active if a.window[1] > ref.window[0]]
            for other in active:
                if other.designates != ref.designates and windows_overlap(other.window, ref.window):
                    pairs[tuple(sorted((other, ref)))].add(ConflictKind.OVERLAPPING_WINDOWS)
            if ref.window[1] > ref.window[0]:
                active.append(ref)

        by_serial: dict[int, list[ArtifactRef]] = defaultdict(list)
        for ref in refs:
            by_serial[ref.serial].append(ref)
        for group in by_serial.values():
            for i, a in enumerate(group):
                for b in group[i + 1 :]:
                    pairs[tuple(sorted((a, b)))].add(ConflictKind.DUPLICATE_SERIAL)

        for (a, b), kinds in pairs.items():
            found.append(Conflict(signer, a, b, tuple(k for k in ConflictKind if k in kinds)))
    return sorted(found)
