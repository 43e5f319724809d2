from __future__ import annotations


class ProtocolError(Exception):
    """Base class for rejected protocol operations."""


class SerialRegression(ProtocolError):
    pass


class ConflictingWindow(ProtocolError):
    pass


class RollbackRejected(ProtocolError):
    pass


class ApprovalInvalid(ProtocolError):
    pass


class DeviceLockedDown(ProtocolError):
    pass


class RatchetViolation(ProtocolError):
    pass


class InsufficientSignatures(ProtocolError):
    pass


class WrongTarget(ProtocolError):
    pass


class AlreadyExpired(ProtocolError):
    pass


class NonMonotoneExpiry(ProtocolError):
    pass


class UnauthorizedIssuer(ProtocolError):
    pass


class DeviceMismatch(ProtocolError):
    pass


class RenewalDenied(ProtocolError):
    def __init__(self, device_id: str, record_id: str) -> None:
        super().__init__(f"renewal for {device_id} refused by denial record {record_id}")
        self.device_id = device_id
        self.record_id = record_id


class UnknownDevice(ProtocolError):
    pass


__all__ = [
    "ProtocolError",
    "SerialRegression",
    "ConflictingWindow",
    "RollbackRejected",
    "ApprovalInvalid",
    "DeviceLockedDown",
    "RatchetViolation",
    "InsufficientSignatures",
    "WrongTarget",
    "AlreadyExpired",
    "NonMonotoneExpiry",
    "UnauthorizedIssuer",
    "DeviceMismatch",
    "RenewalDenied",
    "UnknownDevice",
]
