"""
Error handling and custom exceptions for the simulator
"""
import traceback
from typing import Optional, Dict, Any, List
from enum import Enum
import logging

import numpy as np


class ErrorSeverity(Enum):
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class EmissionError(Exception):
    """Base simulator error with structured information"""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        severity: ErrorSeverity = ErrorSeverity.MEDIUM,
        context: Optional[Dict[str, Any]] = None,
        user_message: Optional[str] = None,
        retry_possible: bool = False
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.severity = severity
        self.context = context or {}
        self.user_message = user_message or "The computation failed."
        self.retry_possible = retry_possible

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary for logging"""
        return {
            "error_code": self.error_code,
            "message": self.message,
            "severity": self.severity.value,
            "context": self.context,
            "user_message": self.user_message,
            "retry_possible": self.retry_possible,
            "traceback": traceback.format_exc()
        }


class ConfigError(EmissionError):
    """Configuration and spec-file errors"""
    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        section: Optional[str] = None,
        key: Optional[str] = None,
        **kwargs
    ):
        context = kwargs.pop("context", {})
        for name, value in (("path", path), ("line", line), ("section", section), ("key", key)):
            if value is not None:
                context[name] = value
        self.path = path
        self.line = line
        self.section = section
        self.key = key

        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        if section is not None:
            location += f"[{section}] " + (f"{key}: " if key is not None else "")
        elif key is not None:
            location += f"{key}: "

        super().__init__(
            location + message,
            error_code="CONFIG_ERROR",
            severity=ErrorSeverity.CRITICAL,
            context=context,
            user_message="Invalid configuration.",
            **kwargs
        )


class InvalidParams(EmissionError):
    """Physical parameters violating their invariants"""
    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        context = kwargs.pop("context", {})
        if field:
            context["field"] = field
        self.field = field

        super().__init__(
            message,
            error_code="INVALID_PARAMS",
            severity=ErrorSeverity.LOW,
            context=context,
            user_message="Invalid physical parameters.",
            **kwargs
        )


class CriticalDetuning(EmissionError):
    """Shifted detuning exactly at the phase transition"""
    def __init__(self, message: str, delta_tilde: Optional[float] = None, **kwargs):
        context = kwargs.pop("context", {})
        if delta_tilde is not None:
            context["delta_tilde"] = delta_tilde

        super().__init__(
            message,
            error_code="CRITICAL_DETUNING",
            severity=ErrorSeverity.MEDIUM,
            context=context,
            user_message="The shifted detuning vanishes; move the detuning off the transition point.",
            **kwargs
        )


class QuadratureFailure(EmissionError):
    """Adaptive quadrature did not reach the requested accuracy"""
    def __init__(self, message: str, error_estimate: Optional[float] = None, **kwargs):
        context = kwargs.pop("context", {})
        if error_estimate is not None:
            context["error_estimate"] = error_estimate

        super().__init__(
            message,
            error_code="QUADRATURE_FAILURE",
            severity=ErrorSeverity.HIGH,
            context=context,
            user_message="Numerical integration did not converge.",
            **kwargs
        )


class StepTooLarge(EmissionError):
    """Step halving changed the Volterra solution beyond tolerance"""
    def __init__(self, message: str, change: Optional[float] = None, step: Optional[float] = None, **kwargs):
        context = kwargs.pop("context", {})
        if change is not None:
            context["change"] = change
        if step is not None:
            context["step"] = step

        super().__init__(
            message,
            error_code="STEP_TOO_LARGE",
            severity=ErrorSeverity.MEDIUM,
            context=context,
            user_message="Time step too large; use a finer time grid.",
            retry_possible=True,
            **kwargs
        )


class RootSearchFailure(EmissionError):
    """A bracketed pole could not be polished"""
    def __init__(self, message: str, scan_trace: Optional[List[Any]] = None, **kwargs):
        context = kwargs.pop("context", {})
        if scan_trace is not None:
            context["scan_trace"] = scan_trace

        super().__init__(
            message,
            error_code="ROOT_SEARCH_FAILURE",
            severity=ErrorSeverity.HIGH,
            context=context,
            user_message="Pole search failed.",
            **kwargs
        )


class ExtrapolationUnstable(EmissionError):
    """Regularization limit does not settle"""
    def __init__(self, message: str, estimates: Optional[List[complex]] = None, **kwargs):
        context = kwargs.pop("context", {})
        if estimates is not None:
            context["estimates"] = [str(e) for e in estimates]

        super().__init__(
            message,
            error_code="EXTRAPOLATION_UNSTABLE",
            severity=ErrorSeverity.HIGH,
            context=context,
            user_message="The regularized integrals do not converge as the regulator vanishes.",
            **kwargs
        )


class NotPSD(EmissionError):
    """Collective decay matrix with a negative eigenvalue"""
    def __init__(self, message: str, min_eigenvalue: Optional[float] = None, **kwargs):
        context = kwargs.pop("context", {})
        if min_eigenvalue is not None:
            context["min_eigenvalue"] = min_eigenvalue

        super().__init__(
            message,
            error_code="NOT_PSD",
            severity=ErrorSeverity.HIGH,
            context=context,
            user_message="Decay matrix is not positive semidefinite; parameters lie outside Born-Markov validity.",
            **kwargs
        )


class WrongRegime(EmissionError):
    """Operation called outside the regime it is defined for"""
    def __init__(self, message: str, regime: Optional[str] = None, **kwargs):
        context = kwargs.pop("context", {})
        if regime is not None:
            context["regime"] = regime

        super().__init__(
            message,
            error_code="WRONG_REGIME",
            severity=ErrorSeverity.MEDIUM,
            context=context,
            user_message="This quantity is not defined in the current detuning regime.",
            **kwargs
        )


class UnsupportedState(EmissionError):
    """Initial state not handled"""
    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="UNSUPPORTED_STATE",
            severity=ErrorSeverity.LOW,
            user_message="Unsupported initial state.",
            **kwargs
        )


class StateOutOfRange(EmissionError):
    """Spin population left its physical range"""
    def __init__(
        self,
        message: str,
        site: Optional[int] = None,
        value: Optional[float] = None,
        time: Optional[float] = None,
        **kwargs
    ):
        context = kwargs.pop("context", {})
        for name, item in (("site", site), ("value", value), ("time", time)):
            if item is not None:
                context[name] = item

        super().__init__(
            message,
            error_code="STATE_OUT_OF_RANGE",
            severity=ErrorSeverity.HIGH,
            context=context,
            user_message="Semiclassical populations left [-1, 1].",
            **kwargs
        )


class DensityMatrixInvalid(EmissionError):
    """Exact density matrix lost its trace or its positivity"""
    def __init__(
        self,
        message: str,
        trace_defect: Optional[float] = None,
        min_eigenvalue: Optional[float] = None,
        **kwargs
    ):
        context = kwargs.pop("context", {})
        for name, item in (("trace_defect", trace_defect), ("min_eigenvalue", min_eigenvalue)):
            if item is not None:
                context[name] = item

        super().__init__(
            message,
            error_code="DENSITY_MATRIX_INVALID",
            severity=ErrorSeverity.HIGH,
            context=context,
            user_message="Exact evolution drifted out of the physical state space; tighten the tolerances.",
            **kwargs
        )


class DimensionCap(EmissionError):
    """Requested problem larger than the configured cap"""
    def __init__(self, message: str, requested: Optional[int] = None, cap: Optional[int] = None, **kwargs):
        context = kwargs.pop("context", {})
        if requested is not None:
            context["requested"] = requested
        if cap is not None:
            context["cap"] = cap

        super().__init__(
            message,
            error_code="DIMENSION_CAP",
            severity=ErrorSeverity.MEDIUM,
            context=context,
            user_message="Problem size exceeds the configured cap.",
            **kwargs
        )


class GridTooCoarse(EmissionError):
    """Angular grid does not resolve a diffraction peak"""
    def __init__(self, message: str, nodes_across_peak: Optional[int] = None, **kwargs):
        context = kwargs.pop("context", {})
        if nodes_across_peak is not None:
            context["nodes_across_peak"] = nodes_across_peak

        super().__init__(
            message,
            error_code="GRID_TOO_COARSE",
            severity=ErrorSeverity.MEDIUM,
            context=context,
            user_message="Angular grid too coarse; increase the node counts.",
            retry_possible=True,
            **kwargs
        )


class UnknownPreset(EmissionError):
    """Preset name not registered"""
    def __init__(self, message: str, available: Optional[List[str]] = None, **kwargs):
        context = kwargs.pop("context", {})
        if available is not None:
            context["available"] = available

        super().__init__(
            message,
            error_code="UNKNOWN_PRESET",
            severity=ErrorSeverity.LOW,
            context=context,
            user_message="Unknown preset.",
            **kwargs
        )


class ErrorHandler:
    """Centralized error handling"""

    def __init__(self, logger: Optional[logging.Logger] = None):
        self.logger = logger or logging.getLogger(__name__)

    def handle_error(
        self,
        error: Exception,
        context: Optional[Dict[str, Any]] = None,
        sweep_point: Optional[Dict[str, Any]] = None
    ) -> EmissionError:
        """Handle any error and convert to EmissionError"""

        if isinstance(error, EmissionError):
            if sweep_point:
                error.context.setdefault("sweep_point", sweep_point)
            self._log_error(error, context)
            return error

        app_error = self._convert_to_app_error(error, context)
        if sweep_point:
            app_error.context["sweep_point"] = sweep_point
        self._log_error(app_error, context)
        return app_error

    def _convert_to_app_error(
        self,
        error: Exception,
        context: Optional[Dict[str, Any]] = None
    ) -> EmissionError:
        """Convert standard exceptions to EmissionError"""

        error_message = str(error)
        error_context = dict(context or {})
        error_context["original_error_type"] = type(error).__name__

        if isinstance(error, (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)):
            return EmissionError(
                error_message,
                error_code="NUMERICAL_ERROR",
                severity=ErrorSeverity.HIGH,
                context=error_context,
                user_message="Numerical linear algebra failed.",
            )
        elif isinstance(error, OSError):
            return EmissionError(
                error_message,
                error_code="OUTPUT_ERROR",
                severity=ErrorSeverity.HIGH,
                context=error_context,
                user_message="Could not read or write files.",
                retry_possible=True
            )
        elif isinstance(error, ValueError):
            return InvalidParams(error_message, context=error_context)
        else:
            return EmissionError(
                error_message,
                error_code="UNKNOWN_ERROR",
                severity=ErrorSeverity.HIGH,
                context=error_context,
                user_message="An unexpected error occurred.",
            )

    def _log_error(
        self,
        error: EmissionError,
        context: Optional[Dict[str, Any]] = None
    ) -> None:
        """Log error with full context"""

        log_context = {
            "error": error.to_dict(),
            **(context or {}),
        }

        if error.severity == ErrorSeverity.CRITICAL:
            self.logger.critical(f"Critical error: {error.message}", extra=log_context)
        elif error.severity == ErrorSeverity.HIGH:
            self.logger.error(f"High severity error: {error.message}", extra=log_context)
        elif error.severity == ErrorSeverity.MEDIUM:
            self.logger.warning(f"Medium severity error: {error.message}", extra=log_context)
        else:
            self.logger.info(f"Low severity error: {error.message}", extra=log_context)


# Global error handler instance
error_handler = ErrorHandler()
