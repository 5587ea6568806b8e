import json
import logging

import pytest
from pydantic import ValidationError

from gpatt.core.config import Settings
from gpatt.core.errors import ConvergenceError, GPattError, ShapeError
from gpatt.core.logging import EVENT_ATTR, JsonLinesFormatter, log_event


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("GPATT_PCG_TOL", "1e-4")
    monkeypatch.setenv("GPATT_RESTARTS", "7")
    s = Settings(_env_file=None)
    assert s.pcg_tol == 1e-4
    assert s.restarts == 7
    assert s.variance_budget == 5000


def test_settings_validate(monkeypatch):
    monkeypatch.setenv("GPATT_PCG_MAX_ITER", "0")
    with pytest.raises(ValidationError):
        Settings(_env_file=None)


def test_errors_share_a_base():
    assert issubclass(ShapeError, GPattError)
    assert issubclass(ShapeError, ValueError)
    exc = ConvergenceError("stuck", residual_history=[1.0, 0.5])
    assert exc.residual_history == [1.0, 0.5]


def test_log_event_carries_fields(caplog):
    logger = logging.getLogger("gpatt.test")
    with caplog.at_level(logging.DEBUG, logger="gpatt"):
        log_event(logger, "pcg_solve", iterations=12, residual=1e-7)
    record = caplog.records[-1]
    assert getattr(record, EVENT_ATTR) == "pcg_solve"
    payload = json.loads(JsonLinesFormatter().format(record))
    assert payload["event"] == "pcg_solve"
    assert payload["iterations"] == 12
    assert payload["logger"] == "gpatt.test"


def test_plain_records_keep_their_message():
    record = logging.LogRecord("gpatt.x", logging.INFO, __file__, 1, "hello %s", ("there",), None)
    payload = json.loads(JsonLinesFormatter().format(record))
    assert payload["message"] == "hello there"
    assert "event" not in payload
