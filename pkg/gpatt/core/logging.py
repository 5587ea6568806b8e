"""
Logging setup and structured diagnostics.

Modules log through ``logging.getLogger(__name__)``. Numerical diagnostics go
through :func:`log_event`, which attaches the event name and its fields to the
record so that the JSON-lines formatter can emit them verbatim.
"""
import json
import logging
import sys
from typing import Any, Optional

from gpatt.core.config import settings

EVENT_ATTR = "gpatt_event"
FIELDS_ATTR = "gpatt_fields"


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class JsonLinesFormatter(logging.Formatter):
    """One JSON object per record: time, level, logger, message and event fields."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
        }
        event = getattr(record, EVENT_ATTR, None)
        if event is not None:
            payload["event"] = event
            payload.update({k: _jsonable(v) for k, v in getattr(record, FIELDS_ATTR, {}).items()})
        else:
            payload["message"] = record.getMessage()
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def log_event(logger: logging.Logger, event: str, level: int = logging.DEBUG, **fields: Any) -> None:
    """Emit a structured diagnostic record."""
    if not logger.isEnabledFor(level):
        return
    text = " ".join(f"{k}={v}" for k, v in fields.items())
    logger.log(level, f"{event} {text}".rstrip(),
               extra={EVENT_ATTR: event, FIELDS_ATTR: fields})


def configure_logging(level: Optional[str] = None, json_lines: Optional[bool] = None) -> None:
    """Install a single stderr handler on the ``gpatt`` logger."""
    json_lines = settings.log_json if json_lines is None else json_lines
    level = level or ("DEBUG" if json_lines else settings.log_level)

    handler = logging.StreamHandler(sys.stderr)
    if json_lines:
        handler.setFormatter(JsonLinesFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))

    root = logging.getLogger("gpatt")
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())
