from .config import (
    ConfigError,
    Event,
    ScenarioConfig,
    SchemaViolation,
    UnknownEventTag,
    example_path,
    load_schema,
    parse_config,
)
from .report import ReportWriteError, RunReport, emit_report
from .runner import run_scenario

__all__ = [
    "ConfigError",
    "Event",
    "ReportWriteError",
    "RunReport",
    "ScenarioConfig",
    "SchemaViolation",
    "UnknownEventTag",
    "emit_report",
    "example_path",
    "load_schema",
    "parse_config",
    "run_scenario",
]
