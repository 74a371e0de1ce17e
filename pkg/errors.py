"""
Error types for the jacobi-morse toolkit.

Every numerical failure raises a subclass of JacobiMorseError carrying a
structured payload; the CLI turns these into exit codes and a JSON line
on stderr.
"""

from typing import Any, Optional


class JacobiMorseError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str = "", **payload: Any):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.payload = payload

    def to_dict(self) -> dict:
        """Machine-readable form (payload values that are not JSON-able are repr'd)."""
        details = {}
        for key, value in self.payload.items():
            if isinstance(value, (int, float, str, bool)) or value is None:
                details[key] = value
            elif isinstance(value, (list, tuple)):
                details[key] = [float(v) if isinstance(v, (int, float)) else repr(v) for v in value]
            else:
                details[key] = repr(value)
        return {"error": self.__class__.__name__, "message": self.message, "details": details}


class ConfigError(JacobiMorseError):
    pass


# ========================
# GEOMETRY
# ========================

class DegenerateMetric(JacobiMorseError):
    pass


class OutOfDomain(JacobiMorseError):
    pass


class NonPositiveFactor(JacobiMorseError):
    pass


class GridMismatch(JacobiMorseError):
    pass


class LeftDomain(JacobiMorseError):
    """Integration left the chart domain; `partial` holds the path computed so far."""

    def __init__(self, s_exit: float, partial: Optional[Any] = None):
        super().__init__(f"left the chart domain at parameter {s_exit!r}", s_exit=s_exit)
        self.s_exit = s_exit
        self.partial = partial


class StepUnderflow(JacobiMorseError):
    pass


# ========================
# DYNAMICS / VARIATION
# ========================

class EnergyMismatch(JacobiMorseError):
    pass


class DegenerateFactor(JacobiMorseError):
    pass


class NotAnExtremal(JacobiMorseError):
    pass


class ImproperVariation(JacobiMorseError):
    pass


class ZeroTangent(JacobiMorseError):
    pass


# ========================
# MORSE
# ========================

class FamilyResidual(JacobiMorseError):
    pass


class NoisyAmplitude(JacobiMorseError):
    pass


class TruncationOverflow(JacobiMorseError):
    pass


class TruncationMismatch(JacobiMorseError):
    pass


class Unsupported(JacobiMorseError):
    pass


# ========================
# GARNIER CHART
# ========================

class OutsideChart(JacobiMorseError):
    pass


class ChartBoundary(JacobiMorseError):
    pass


class SingularFactor(JacobiMorseError):
    pass


class OutOfRange(JacobiMorseError):
    def __init__(self, value: float, low: float, high: float):
        super().__init__(f"parameter {value!r} outside [{low!r}, {high!r}]", value=value, low=low, high=high)
        self.value = value


class RootNotConverged(JacobiMorseError):
    pass


class BranchAmbiguity(JacobiMorseError):
    pass


class DegenerateDiagonal(JacobiMorseError):
    pass
