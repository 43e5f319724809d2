"""Scenario documents: JSON in, validated ``ScenarioConfig`` out."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Optional

import jsonschema

from ..oversight import EntityKind, EntityRecord, EntityStatus
from ..protocol.errors import ProtocolError
from ..protocol.interchange import policy_from_json, policy_to_json
from ..protocol.model import ApproverPolicy
from ..stability import parse_grid

EVENT_TAGS = (
    "ProposeUpdate",
    "Sign",
    "Install",
    "Extend",
    "AdvanceClock",
    "Workload",
    "InspectionRound",
    "LicenseAction",
    "LocationCheck",
    "TamperInject",
)


class ConfigError(ValueError):
    """One or more problems with a scenario document, each as (JSON pointer, message)."""

    def __init__(self, violations: list[tuple[str, str]]) -> None:
        self.violations = violations
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in violations))


class SchemaViolation(ConfigError):
    pass


class UnknownEventTag(ConfigError):
    pass


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("schema.json").read_text("utf-8"))


_VALIDATOR = jsonschema.Draft202012Validator(load_schema())


@dataclass(frozen=True)
class Event:
    tick: int
    type: str
    data: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"tick": self.tick, "type": self.type, **self.data}


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    owner: str = ""
    site: str = ""
    location: Optional[dict] = None
    power_log: tuple[tuple[int, int], ...] = ()
    power_explanations: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"device_id": self.device_id}
        if self.owner:
            out["owner"] = self.owner
        if self.site:
            out["site"] = self.site
        if self.location is not None:
            out["location"] = self.location
        if self.power_log:
            out["power_log"] = [list(iv) for iv in self.power_log]
        if self.power_explanations:
            out["power_explanations"] = dict(self.power_explanations)
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    policy: ApproverPolicy
    devices: tuple[DeviceSpec, ...]
    events: tuple[Event, ...]
    registry: tuple[EntityRecord, ...] = ()
    inspection_rates: Optional[dict] = None
    max_unexplained: int = 0
    stability: Optional[dict] = None
    oversight: Optional[dict] = None

    def with_seed(self, seed: int) -> ScenarioConfig:
        return replace(self, seed=seed)

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "seed": self.seed,
            "policy": policy_to_json(self.policy),
            "devices": [d.to_json() for d in self.devices],
        }
        if self.registry:
            out["registry"] = [
                {
                    "entity_id": r.entity_id,
                    "kind": r.kind.value,
                    "registered_owner": r.registered_owner,
                    "registered_location": r.registered_location,
                    "status": r.status.value,
                }
                for r in self.registry
            ]
        if self.inspection_rates is not None:
            out["inspection_plan"] = {"rates": dict(self.inspection_rates), "max_unexplained": self.max_unexplained}
        out["events"] = [e.to_json() for e in self.events]
        if self.stability is not None:
            out["stability"] = {k: list(v) for k, v in self.stability.items()}
        if self.oversight is not None:
            out["oversight"] = dict(self.oversight)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _check_references(doc: dict) -> list[tuple[str, str]]:
    problems = []
    device_ids = [d["device_id"] for d in doc["devices"]]
    if len(set(device_ids)) != len(device_ids):
        problems.append(("/devices", "device ids must be unique"))
    known_devices = set(device_ids)
    artifacts: set[str] = set()
    last_tick = 0
    for i, ev in enumerate(doc["events"]):
        where = f"/events/{i}"
        if ev["tick"] < last_tick:
            problems.append((f"{where}/tick", f"event {i} at tick {ev['tick']} precedes tick {last_tick}"))
        last_tick = max(last_tick, ev["tick"])
        kind = ev["type"]
        if kind == "ProposeUpdate":
            if ev["id"] in artifacts:
                problems.append((f"{where}/id", f"artifact id {ev['id']!r} reused"))
            needed = (
                ("serial", "target_serial", "new_expiry")
                if ev.get("kind") == "extension"
                else ("serial", "version", "lifetime", "ruleset")
            )
            for name in needed:
                if name not in ev:
                    problems.append((where, f"ProposeUpdate missing {name!r}"))
            artifacts.add(ev["id"])
        if "artifact" in ev and ev["artifact"] not in artifacts:
            problems.append((f"{where}/artifact", f"unknown artifact {ev['artifact']!r}"))
        refs = [ev["device"]] if "device" in ev else []
        refs += ev.get("devices", [])
        for ref in refs:
            if ref not in known_devices:
                problems.append((where, f"unknown device {ref!r}"))
        if kind == "Sign" and ev["signer"] not in doc["policy"]["approvers"]:
            problems.append((f"{where}/signer", f"{ev['signer']!r} is not an approver"))
        if kind == "LicenseAction":
            if ev["action"] == "issue" and not ("device" in ev and "duration" in ev):
                problems.append((where, "issue needs device and duration"))
            if ev["action"] == "deny" and "devices" not in ev:
                problems.append((where, "deny needs devices"))
        if kind == "TamperInject":
            needs = ("artifact", "signer") if ev["action"] in ("raw_sign", "corrupt_signature") else ("device",)
            for name in needs:
                if name not in ev:
                    problems.append((where, f"{ev['action']} needs {name!r}"))
    return problems


def _axis(value) -> list[float]:
    return parse_grid(value) if isinstance(value, str) else [float(v) for v in value]


def parse_config(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation([("", f"invalid JSON: {exc}")]) from None

    if isinstance(doc, dict) and isinstance(doc.get("events"), list):
        unknown = [
            (f"/events/{i}/type", f"unknown event tag {ev.get('type')!r}")
            for i, ev in enumerate(doc["events"])
            if isinstance(ev, dict) and "type" in ev and ev["type"] not in EVENT_TAGS
        ]
        if unknown:
            raise UnknownEventTag(unknown)

    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise SchemaViolation([(_pointer(e.absolute_path), e.message) for e in errors])

    problems = _check_references(doc)
    try:
        policy = policy_from_json(doc["policy"])
    except (ProtocolError, ValueError, ZeroDivisionError) as exc:
        problems.append(("/policy", str(exc)))
        policy = None
    rates = None
    plan = doc.get("inspection_plan")
    if plan is not None:
        for kind in plan["rates"]:
            if kind not in {k.value for k in EntityKind}:
                problems.append((f"/inspection_plan/rates/{kind}", "unknown entity kind"))
        rates = dict(plan["rates"])
    stability = None
    if "stability" in doc:
        try:
            stability = {k: _axis(v) for k, v in doc["stability"].items()}
        except ValueError as exc:
            problems.append(("/stability", str(exc)))
    if problems:
        raise SchemaViolation(problems)

    devices = tuple(
        DeviceSpec(
            d["device_id"],
            d.get("owner", ""),
            d.get("site", ""),
            d.get("location"),
            tuple(tuple(iv) for iv in d.get("power_log", ())),
            dict(d.get("power_explanations", {})),
        )
        for d in doc["devices"]
    )
    registry = tuple(
        EntityRecord(
            r["entity_id"],
            EntityKind(r["kind"]),
            r.get("registered_owner", ""),
            r.get("registered_location", ""),
            EntityStatus(r.get("status", "Present")),
        )
        for r in doc.get("registry", ())
    )
    events = tuple(
        Event(ev["tick"], ev["type"], {k: v for k, v in ev.items() if k not in ("tick", "type")})
        for ev in doc["events"]
    )
    return ScenarioConfig(
        seed=doc["seed"],
        policy=policy,
        devices=devices,
        events=events,
        registry=registry,
        inspection_rates=rates,
        max_unexplained=(plan or {}).get("max_unexplained", 0),
        stability=stability,
        oversight=doc.get("oversight"),
    )


def example_path(name: str):
    """Path of a bundled example scenario, e.g. ``example_path("expiry")``."""
    return resources.files(__package__).joinpath("examples", f"{name}.json")
