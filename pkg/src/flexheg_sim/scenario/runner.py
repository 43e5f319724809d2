"""Apply a scenario's events in order and collect every outcome.

Protocol errors raised by an event are recorded against that event and the
run continues; attack scenarios are expected to trigger them.

Random streams: inspection round at event index ``i`` uses
``derive(seed, 1, i)``; the oversight Monte Carlo uses ``derive(seed, 2)``
as its master seed.
"""

from __future__ import annotations

import collections
from typing import Any

from .. import oversight as ov
from .. import stability as st
from ..protocol import device as dev
from ..protocol.equivocation import detect_equivocation
from ..protocol.errors import ProtocolError
from ..protocol.interchange import MODE_NAMES, as_int, location_from_json, ruleset_from_json, workload_from_json
from ..protocol.model import (
    ExtensionCertificate,
    FirmwareUpdate,
    LandmarkResponse,
    device_key_identity,
    provision_device,
)
from ..protocol.signer import SignerDevice, approver_sign_extension, approver_sign_update, raw_sign
from ..rng import SplitMix64, derive
from .config import Event, ScenarioConfig
from .report import RunReport

INSPECTION_STREAM = 1
OVERSIGHT_STREAM = 2


class _Run:
    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        self.policy = config.policy
        self.devices: dict[str, Any] = {}
        self.power_logs: dict[str, ov.PowerLog] = {}
        for spec in config.devices:
            self.devices[spec.device_id] = provision_device(
                spec.device_id, self.policy, location_config=location_from_json(spec.location)
            )
            self.power_logs[spec.device_id] = ov.PowerLog(
                spec.power_log, {int(k): v for k, v in spec.power_explanations.items()}
            )
        self.registry: list[ov.EntityRecord] = [
            ov.EntityRecord(s.device_id, ov.EntityKind.FLEXHEG_DEVICE, s.owner, s.site) for s in config.devices
        ] + list(config.registry)
        self.signers = {a: SignerDevice(a) for a in self.policy.approvers}
        self.authorities = {a: dev.LicenseAuthority(a) for a in self.policy.license_authorities}
        self.artifacts: dict[str, Any] = {}
        self.dark: set[str] = set()
        self.now = 0
        self.records: list[dict] = []
        self.allowed = 0
        self.denied: collections.Counter = collections.Counter()
        self.inspections: list[dict] = []
        self.referrals: list[dict] = []
        self.denials: list[dict] = []
        self.power_flags: list[dict] = []

    # -- helpers

    def _sync_clocks(self, tick: int) -> list[str]:
        changes = []
        for device_id, state in self.devices.items():
            if tick > state.clock:
                after = dev.advance_clock(state, tick - state.clock)
                if after.mode is not state.mode:
                    changes.append(f"{device_id}: {MODE_NAMES[state.mode]}->{MODE_NAMES[after.mode]}")
                self.devices[device_id] = after
        self.now = tick
        return changes

    def _artifact(self, ev: Event):
        art = self.artifacts.get(ev.data["artifact"])
        if art is None:
            raise ProtocolError(f"artifact {ev.data['artifact']!r} was never created")
        return art

    def _add_signature(self, art_id: str, signer: str, sig: bytes) -> None:
        art = self.artifacts[art_id]
        self.artifacts[art_id] = art.with_signatures({**art.signatures, signer: sig})

    # -- handlers return (outcome, detail)

    def on_ProposeUpdate(self, i: int, ev: Event):
        d = ev.data
        issued_at = as_int(d.get("issued_at", ev.tick))
        if d.get("kind") == "extension":
            art = ExtensionCertificate(
                as_int(d["serial"]), as_int(d["target_serial"]), as_int(d["new_expiry"]), issued_at
            )
            detail = f"extension #{art.serial} of #{art.target_serial} to {art.new_expiry}"
        else:
            art = FirmwareUpdate(
                as_int(d["serial"]), as_int(d["version"]), ruleset_from_json(d["ruleset"]),
                as_int(d["lifetime"]), issued_at,
            )
            detail = f"update #{art.serial} v{art.version} window {list(art.window)}"
        self.artifacts[d["id"]] = art
        return "ok", detail

    def on_Sign(self, i: int, ev: Event):
        art = self._artifact(ev)
        signer_id = ev.data["signer"]
        sign = approver_sign_update if isinstance(art, FirmwareUpdate) else approver_sign_extension
        sig, self.signers[signer_id] = sign(self.signers[signer_id], art)
        self._add_signature(ev.data["artifact"], signer_id, sig)
        return "ok", f"{signer_id} signed {ev.data['artifact']}"

    def on_Install(self, i: int, ev: Event):
        art = self._artifact(ev)
        if not isinstance(art, FirmwareUpdate):
            raise ProtocolError(f"{ev.data['artifact']} is not an update")
        device_id = ev.data["device"]
        self.devices[device_id] = dev.install_update(self.devices[device_id], art, self.policy)
        state = self.devices[device_id]
        return "ok", f"{device_id} runs #{state.installed.serial} until {state.installed.expiry}"

    def on_Extend(self, i: int, ev: Event):
        art = self._artifact(ev)
        if not isinstance(art, ExtensionCertificate):
            raise ProtocolError(f"{ev.data['artifact']} is not an extension")
        device_id = ev.data["device"]
        self.devices[device_id] = dev.extend_lifetime(self.devices[device_id], art, self.policy)
        return "ok", f"{device_id} expiry now {self.devices[device_id].installed.expiry}"

    def on_AdvanceClock(self, i: int, ev: Event):
        modes = ", ".join(f"{k}={MODE_NAMES[v.mode]}" for k, v in sorted(self.devices.items()))
        return "ok", modes

    def on_Workload(self, i: int, ev: Event):
        decision = dev.evaluate_workload(self.devices[ev.data["device"]], workload_from_json(ev.data["workload"]))
        if decision.allowed:
            self.allowed += 1
            return "allow", decision.label()
        self.denied[decision.reason.value] += 1
        return "deny", decision.label()

    def on_InspectionRound(self, i: int, ev: Event):
        start, end = ev.data.get("period", (ev.tick, ev.tick + 1))
        rates = self.config.inspection_rates or {}
        plan = ov.InspectionPlan(rates={k: rates.get(k.value, 0.0) for k in ov.EntityKind})
        rng = SplitMix64(derive(self.config.seed, INSPECTION_STREAM, i))
        for event in ov.schedule_inspections(rng, self.registry, plan, (start, end)):
            outcome = "ok"
            if event.kind is ov.EntityKind.FLEXHEG_DEVICE:
                if event.entity_id in self.dark:
                    outcome = "absent"
                else:
                    gaps = ov.audit_power_log(
                        self.power_logs.get(event.entity_id, ov.PowerLog()), event.tick, self.config.max_unexplained
                    )
                    if gaps:
                        outcome = "unexplained_power_gaps"
                        for a, b in gaps:
                            self.power_flags.append({"entity_id": event.entity_id, "off": a, "on": b, "event": i})
            self.inspections.append(
                {"tick": event.tick, "entity_id": event.entity_id, "kind": event.kind.value,
                 "goal": event.goal, "outcome": outcome, "event": i}
            )
        responders = [r.entity_id for r in self.registry if r.entity_id not in self.dark]
        self.registry, referred = ov.flag_missing(self.registry, responders)
        detail = f"missing={referred}"
        if referred:
            self.referrals.append({"event": i, "devices": referred})
            if self.authorities:
                authority_id = next(iter(self.authorities))
                record_id = self._deny(authority_id, referred)
                detail += f" denial={record_id}"
        return "ok", detail

    def _deny(self, authority_id: str, device_ids) -> str:
        record, self.authorities[authority_id] = dev.deny_renewal(
            self.authorities[authority_id], device_ids, self.now
        )
        self.denials.append(
            {"record_id": record.record_id, "issuer": record.issuer, "devices": list(record.device_ids),
             "tick": record.issued_at, "signature": record.signature.hex()}
        )
        return record.record_id

    def on_LicenseAction(self, i: int, ev: Event):
        d = ev.data
        authority_id = d.get("authority") or next(iter(self.authorities), None)
        if authority_id is None:
            raise ProtocolError("no license authority configured")
        if authority_id not in self.authorities:
            raise dev.UnauthorizedIssuer(f"{authority_id} is not a configured license authority")
        if d["action"] == "deny":
            return "ok", f"denial={self._deny(authority_id, d['devices'])}"
        lic = dev.issue_license(self.authorities[authority_id], d["device"], d["duration"], self.now, self.policy)
        self.devices[d["device"]] = dev.apply_license(
            self.devices[d["device"]], lic, self.policy.license_authorities
        )
        return "ok", f"{d['device']} licensed until {lic.expiry}"

    def on_LocationCheck(self, i: int, ev: Event):
        device_id = ev.data["device"]
        responses = []
        for r in ev.data["responses"]:
            resp = LandmarkResponse(r["landmark"], device_id, r["distance"], self.now)
            if not r.get("forged", False):
                resp = dev.sign_landmark_response(resp)
            responses.append(resp)
        ok, self.devices[device_id] = dev.enforce_location(self.devices[device_id], responses)
        return ("ok" if ok else "rejected"), f"location verified={ok} mode={MODE_NAMES[self.devices[device_id].mode]}"

    def on_TamperInject(self, i: int, ev: Event):
        d = ev.data
        action = d["action"]
        if action == "raw_sign":
            art = self._artifact(ev)
            self._add_signature(d["artifact"], d["signer"], raw_sign(d["signer"], art))
            return "ok", f"{d['signer']} signed {d['artifact']} outside its transcript"
        if action == "corrupt_signature":
            art = self._artifact(ev)
            sig = art.signatures.get(d["signer"], bytes(32))
            self._add_signature(d["artifact"], d["signer"], bytes([sig[0] ^ 1]) + sig[1:])
            return "ok", f"corrupted {d['signer']} signature on {d['artifact']}"
        device_id = d["device"]
        if action == "go_dark":
            self.dark.add(device_id)
        elif action == "reappear":
            self.dark.discard(device_id)
        elif action == "destroy":
            self.registry = [
                r.with_status(ov.EntityStatus.DESTROYED) if r.entity_id == device_id else r for r in self.registry
            ]
        return "ok", f"{action} {device_id}"

    # -- driver

    def run(self) -> RunReport:
        for i, ev in enumerate(self.config.events):
            transitions = self._sync_clocks(ev.tick)
            try:
                outcome, detail = getattr(self, f"on_{ev.type}")(i, ev)
            except (ProtocolError, ValueError, KeyError) as exc:
                outcome, detail = "rejected", f"{type(exc).__name__}: {exc}"
            record = {"index": i, "tick": ev.tick, "type": ev.type, "outcome": outcome, "detail": detail}
            if transitions:
                record["transitions"] = transitions
            self.records.append(record)
        return self._report()

    def _device_rows(self) -> list[dict]:
        registry = {d: device_key_identity(d) for d in self.devices}
        rows = []
        for device_id, state in sorted(self.devices.items()):
            att = dev.produce_attestation(state)
            inst = state.installed
            rows.append(
                {
                    "device_id": device_id,
                    "mode": MODE_NAMES[state.mode],
                    "clock": state.clock,
                    "serial": att.serial,
                    "version": att.version,
                    "expiry": None if inst is None else inst.expiry,
                    "rollback_floor": state.rollback_floor,
                    "ruleset_id": None if inst is None else inst.ruleset.ruleset_id,
                    "license_expiry": None if state.license is None else state.license.expiry,
                    "attestation": att.signature.hex(),
                    "attestation_valid": dev.verify_attestation(att, registry),
                }
            )
        return rows

    def _report(self) -> RunReport:
        conflicts = detect_equivocation(self.artifacts.values(), self.policy.approvers)
        stability_rows = []
        if self.config.stability is not None:
            g = self.config.stability
            stability_rows = st.sweep(g["u_w"], g["p_doom"], g["p_w_given_d"])
        oversight_row = None
        if self.config.oversight is not None:
            o = self.config.oversight
            scenario = ov.BatchScenario(
                o["population"], o["compromised"], o["sampling_rate"],
                tuple(o.get("batch_sizes", ())), o.get("customers", 1),
            )
            mc_seed = derive(self.config.seed, OVERSIGHT_STREAM)
            oversight_row = {
                "p": scenario.sampling_rate,
                "n": scenario.compromised,
                "trials": o["trials"],
                "analytic": ov.detection_probability(scenario.sampling_rate, scenario.compromised),
                "monte_carlo": ov.simulate_batch_smuggling(mc_seed, scenario, o["trials"]),
            }
        registry_status = {r.entity_id: r.status.value for r in self.registry}
        return RunReport(
            seed=self.config.seed,
            events=self.records,
            devices=self._device_rows(),
            workloads={"allowed": self.allowed, "denied": dict(sorted(self.denied.items()))},
            equivocation=[
                {
                    "signer": c.signer,
                    "first": {"kind": c.first.kind.name.lower(), "serial": c.first.serial, "designates": c.first.designates,
                              "window": list(c.first.window)},
                    "second": {"kind": c.second.kind.name.lower(), "serial": c.second.serial, "designates": c.second.designates,
                               "window": list(c.second.window)},
                    "kinds": [k.value for k in c.kinds],
                }
                for c in conflicts
            ],
            inspections=self.inspections,
            referrals=self.referrals,
            denials=self.denials,
            power_flags=self.power_flags,
            registry=registry_status,
            stability=stability_rows,
            oversight=oversight_row,
        )


def run_scenario(config: ScenarioConfig) -> RunReport:
    return _Run(config).run()
