"""
Tests for the error hierarchy and the central handler
"""
import logging

import numpy as np
import pytest

from utils.errors import (
    ErrorSeverity, EmissionError, ConfigError, InvalidParams, StepTooLarge, GridTooCoarse, UnknownPreset,
    ErrorHandler,
)


class TestErrors:
    """Structured error payloads"""

    def test_config_error_location(self):
        error = ConfigError("unknown key", path="run.toml", line=7, section="physical", key="rabbi")
        assert error.message == "run.toml:7: [physical] rabbi: unknown key"
        assert error.severity == ErrorSeverity.CRITICAL
        assert error.context == {"path": "run.toml", "line": 7, "section": "physical", "key": "rabbi"}

    def test_invalid_params_field(self):
        error = InvalidParams("rabi must be positive", field="rabi")
        assert error.context["field"] == "rabi"
        assert error.severity == ErrorSeverity.LOW

    def test_retry_flags(self):
        assert StepTooLarge("too coarse", change=0.1, step=0.5).retry_possible
        assert GridTooCoarse("too coarse", nodes_across_peak=3).retry_possible

    def test_to_dict(self):
        payload = UnknownPreset("unknown preset 'fig9'", available=["fig2"]).to_dict()
        assert payload["error_code"] == "UNKNOWN_PRESET"
        assert payload["context"]["available"] == ["fig2"]
        assert payload["severity"] == "low"


class TestErrorHandler:
    """Conversion and logging"""

    def setup_method(self):
        self.handler = ErrorHandler(logging.getLogger("test.errors"))

    def test_passes_emission_errors_through(self):
        error = InvalidParams("bad", field="trap")
        assert self.handler.handle_error(error, sweep_point={"xi": 0.5}) is error
        assert error.context["sweep_point"] == {"xi": 0.5}

    def test_converts_linear_algebra_failures(self):
        converted = self.handler.handle_error(np.linalg.LinAlgError("singular"))
        assert converted.error_code == "NUMERICAL_ERROR"
        assert converted.context["original_error_type"] == "LinAlgError"

    def test_converts_value_errors(self):
        assert isinstance(self.handler.handle_error(ValueError("nan")), InvalidParams)

    def test_converts_os_errors(self):
        converted = self.handler.handle_error(OSError("disk full"))
        assert converted.error_code == "OUTPUT_ERROR"
        assert converted.retry_possible

    def test_unknown_errors(self):
        converted = self.handler.handle_error(RuntimeError("boom"))
        assert converted.error_code == "UNKNOWN_ERROR"

    def test_logs_by_severity(self, caplog):
        with caplog.at_level(logging.INFO, logger="test.errors"):
            self.handler.handle_error(ConfigError("broken"))
            self.handler.handle_error(InvalidParams("minor"))
        levels = [record.levelno for record in caplog.records]
        assert logging.CRITICAL in levels
        assert logging.INFO in levels

    def test_base_error_defaults(self):
        error = EmissionError("plain")
        assert error.error_code == "EmissionError"
        assert error.severity == ErrorSeverity.MEDIUM
