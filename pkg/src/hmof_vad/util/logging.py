"""JSON-lines logging tagged with the current command run and pipeline stage.

Every record carries ``run_id`` (one per CLI command) and ``stage`` (the
orchestrator step it was emitted from, or null). Records about a single
frame carry its index as ``frame``. Event fields passed to ``log_event``
are merged into the top level of the JSON object.
"""

import json
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Any

run_id: ContextVar[str] = ContextVar("run_id", default="root")
current_stage: ContextVar[str | None] = ContextVar("current_stage", default=None)


@contextmanager
def run_id_scope(new_id: str) -> Iterator[str]:
    """Tag records emitted inside the block with ``new_id``."""
    token = run_id.set(new_id)
    try:
        yield new_id
    finally:
        run_id.reset(token)


@contextmanager
def stage_scope(name: str) -> Iterator[str]:
    """Tag records emitted inside the block with a stage name.

    Scopes nest; the innermost name wins and the outer one is restored on exit.
    """
    token = current_stage.set(name)
    try:
        yield name
    finally:
        current_stage.reset(token)


class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "ts": datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            "level": record.levelname,
            "msg": record.getMessage(),
            "logger": record.name,
            "event": getattr(record, "event", "log"),
            "run_id": run_id.get(),
            "stage": current_stage.get(),
        }
        fields = getattr(record, "extra_data", {})
        if "frame" in fields:
            entry["frame"] = int(fields["frame"])
        entry.update((k, v) for k, v in fields.items() if k != "frame")
        if record.exc_info and record.exc_info[0] is not None:
            entry["exc_type"] = record.exc_info[0].__name__
        return json.dumps(entry, default=str)


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is when the record is emitted."""

    def __init__(self) -> None:
        super().__init__(sys.stderr)

    def emit(self, record: logging.LogRecord) -> None:
        self.stream = sys.stderr
        if getattr(self.stream, "closed", False):
            return
        super().emit(record)


def configure_logging(level: str = "INFO") -> None:
    """Send JSON records at ``level`` and above to stderr.

    Replaces any handlers already on the root logger, so repeated calls do
    not duplicate output.
    """
    root = logging.getLogger()
    root.handlers.clear()
    handler = _StderrHandler()
    handler.setFormatter(JsonFormatter())
    root.addHandler(handler)
    root.setLevel(getattr(logging, level))


def log_event(logger: logging.Logger, level: int, msg: str, event: str, **extra: Any) -> None:
    """Log ``msg`` with an event name and extra top-level fields."""
    logger.log(level, msg, extra={"event": event, "extra_data": extra})
