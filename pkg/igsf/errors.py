# igsf/errors.py
"""
Error codes and exception hierarchy shared by every module.

Each error renders to the same dict shape the CLI prints on stderr:
{"status": "error", "error_code": "E_...", "message": "...", "details": {...}}
"""

from typing import Any, Dict, Optional

E_PARAMETER = "E_PARAMETER"
E_DIMENSION = "E_DIMENSION"
E_NUMERICAL = "E_NUMERICAL"
E_DEGENERATE_WEIGHTS = "E_DEGENERATE_WEIGHTS"
E_CONFIG = "E_CONFIG"
E_BEARING_UNDEFINED = "E_BEARING_UNDEFINED"
E_INTERNAL = "E_INTERNAL"


class IgsfError(Exception):
    code = E_INTERNAL

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None, code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})
        if code is not None:
            self.code = code

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "error",
            "error_code": self.code,
            "message": self.message,
            "details": self.details,
        }


class ParameterError(IgsfError, ValueError):
    code = E_PARAMETER


class DimensionError(ParameterError):
    code = E_DIMENSION


class NumericalError(IgsfError, ArithmeticError):
    """Raised when a factorization or normalization cannot be completed.

    `step` and `mixand` are attached by the filter loops so the CLI can say
    where a run broke down.
    """

    code = E_NUMERICAL

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None,
                 step: Optional[int] = None, mixand: Optional[int] = None):
        super().__init__(message, details)
        self.step = step
        self.mixand = mixand

    def at(self, step: Optional[int] = None, mixand: Optional[int] = None) -> "NumericalError":
        if step is not None and self.step is None:
            self.step = step
        if mixand is not None and self.mixand is None:
            self.mixand = mixand
        return self

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        if self.step is not None:
            out["details"]["step"] = self.step
        if self.mixand is not None:
            out["details"]["mixand"] = self.mixand
        return out


class DegenerateWeightsError(NumericalError):
    code = E_DEGENERATE_WEIGHTS


class ConfigError(IgsfError, ValueError):
    code = E_CONFIG

    def __init__(self, message: str, field: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.field = field
        if field is not None:
            self.details.setdefault("field", field)


class BearingUndefinedError(ParameterError):
    code = E_BEARING_UNDEFINED
