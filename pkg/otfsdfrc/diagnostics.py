"""Diagnostics collection and output.

Solvers record numerical fallbacks here (regularized slack updates, restored
feasibility, rejected pilot steps, ADMM runs that hit their iteration cap);
experiment stages record validation findings and failures. Each run writes the
collected entries to `diagnostics.json` next to its other artifacts.
"""

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any

DIAGNOSTICS_VERSION = "1.0.0"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


# Run status for the worst severity seen; INFO never degrades a run.
_STATUS = {Severity.ERROR: "error", Severity.WARNING: "warning", Severity.INFO: "success"}
_RANK = {"success": 0, "warning": 1, "error": 2}


@dataclass(frozen=True)
class SolverLocation:
    """Experiment stage plus AO iteration n and ADMM iteration m, where known."""

    stage: str | None = None
    ao_iteration: int | None = None
    admm_iteration: int | None = None

    @classmethod
    def of(
        cls, stage: str | None, ao_iteration: int | None, admm_iteration: int | None
    ) -> "SolverLocation | None":
        if stage is None and ao_iteration is None and admm_iteration is None:
            return None
        return cls(stage, ao_iteration, admm_iteration)

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class Diagnostic:
    severity: Severity
    code: str
    message: str
    location: SolverLocation | None = None
    context: dict[str, Any] = field(default_factory=dict)
    suggestion: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"severity": self.severity.value, "code": self.code, "message": self.message}
        optional = {
            "location": self.location.to_dict() if self.location else None,
            "context": self.context or None,
            "suggestion": self.suggestion,
        }
        doc.update({k: v for k, v in optional.items() if v is not None})
        return doc


class DiagnosticsCollector:
    """Ordered record of what went wrong, or nearly wrong, during one run."""

    def __init__(self):
        self._entries: list[Diagnostic] = []

    @property
    def diagnostics(self) -> list[Diagnostic]:
        return list(self._entries)

    def add(
        self,
        severity: Severity,
        code: str,
        message: str,
        *,
        stage: str | None = None,
        ao_iteration: int | None = None,
        admm_iteration: int | None = None,
        context: dict[str, Any] | None = None,
        suggestion: str | None = None,
    ) -> Diagnostic:
        entry = Diagnostic(
            Severity(severity),
            code,
            message,
            SolverLocation.of(stage, ao_iteration, admm_iteration),
            dict(context or {}),
            suggestion,
        )
        self._entries.append(entry)
        return entry

    def error(self, code: str, message: str, **kwargs) -> Diagnostic:
        return self.add(Severity.ERROR, code, message, **kwargs)

    def warning(self, code: str, message: str, **kwargs) -> Diagnostic:
        return self.add(Severity.WARNING, code, message, **kwargs)

    def info(self, code: str, message: str, **kwargs) -> Diagnostic:
        return self.add(Severity.INFO, code, message, **kwargs)

    def codes(self) -> list[str]:
        return [d.code for d in self._entries]

    def get_status(self) -> str:
        return max((_STATUS[d.severity] for d in self._entries), key=_RANK.__getitem__, default="success")

    def get_summary(self) -> dict[str, int]:
        counts = Counter(d.severity for d in self._entries)
        return {f"{s.value}_count": counts[s] for s in Severity}

    def to_dict(self, tool_version: str = "unknown") -> dict[str, Any]:
        return {
            "version": DIAGNOSTICS_VERSION,
            "status": self.get_status(),
            "tool_version": tool_version,
            "timestamp": datetime.now().isoformat(),
            "diagnostics": [d.to_dict() for d in self._entries],
            "summary": self.get_summary(),
        }

    def write_json(self, path: str | Path, tool_version: str = "unknown") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(tool_version), indent=2, default=str), encoding="utf-8")
        return path


_collector = DiagnosticsCollector()


def get_collector() -> DiagnosticsCollector:
    """The process-global collector that library code records into."""
    return _collector


def reset_collector() -> DiagnosticsCollector:
    """Start a fresh collector (one per run, and in tests)."""
    global _collector
    _collector = DiagnosticsCollector()
    return _collector
