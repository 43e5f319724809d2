"""Run reports and their on-disk formats.

``report.json`` holds the whole report with sorted keys plus a SHA-256
``checksum`` over the canonical JSON of everything else. CSV files:

* ``events.csv``: index, tick, type, outcome, detail
* ``devices.csv``: device_id, mode, clock, serial, version, expiry,
  rollback_floor, ruleset_id, license_expiry, attestation_valid
* ``inspections.csv``: tick, entity_id, kind, goal, outcome
* ``equivocation.csv``: signer, first_kind, first_serial, second_kind,
  second_serial, kinds
* ``stability.csv``: u_w, p_doom, p_w_given_d, defector_payoff, stable
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..oversight import INSPECTION_CSV_COLUMNS
from ..stability import SWEEP_COLUMNS

EVENT_COLUMNS = ("index", "tick", "type", "outcome", "detail")
DEVICE_COLUMNS = (
    "device_id", "mode", "clock", "serial", "version", "expiry",
    "rollback_floor", "ruleset_id", "license_expiry", "attestation_valid",
)
CONFLICT_COLUMNS = ("signer", "first_kind", "first_serial", "second_kind", "second_serial", "kinds")


class ReportWriteError(OSError):
    pass


@dataclass
class RunReport:
    seed: int
    events: list = field(default_factory=list)
    devices: list = field(default_factory=list)
    workloads: dict = field(default_factory=lambda: {"allowed": 0, "denied": {}})
    equivocation: list = field(default_factory=list)
    inspections: list = field(default_factory=list)
    referrals: list = field(default_factory=list)
    denials: list = field(default_factory=list)
    power_flags: list = field(default_factory=list)
    registry: dict = field(default_factory=dict)
    stability: list = field(default_factory=list)
    oversight: Optional[dict] = None

    def body(self) -> dict:
        return asdict(self)

    @property
    def checksum(self) -> str:
        return hashlib.sha256(canonical_json(self.body()).encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps({**self.body(), "checksum": self.checksum}, indent=2, sort_keys=True) + "\n"


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def csv_files(report: RunReport) -> dict[str, str]:
    conflicts = [
        {
            "signer": c["signer"],
            "first_kind": c["first"]["kind"],
            "first_serial": c["first"]["serial"],
            "second_kind": c["second"]["kind"],
            "second_serial": c["second"]["serial"],
            "kinds": "+".join(c["kinds"]),
        }
        for c in report.equivocation
    ]
    return {
        "events.csv": to_csv(EVENT_COLUMNS, report.events),
        "devices.csv": to_csv(DEVICE_COLUMNS, report.devices),
        "inspections.csv": to_csv(INSPECTION_CSV_COLUMNS, report.inspections),
        "equivocation.csv": to_csv(CONFLICT_COLUMNS, conflicts),
        "stability.csv": to_csv(SWEEP_COLUMNS, report.stability),
    }


def emit_report(report: RunReport, out_dir, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    out = Path(out_dir)
    files: dict[str, str] = {}
    if "json" in formats:
        files["report.json"] = report.to_json()
    if "csv" in formats:
        files.update(csv_files(report))
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(f"cannot create {out}: {exc}") from exc
    for name, text in files.items():
        path = out / name
        try:
            path.write_text(text, encoding="utf-8", newline="")
        except OSError as exc:
            raise ReportWriteError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written
