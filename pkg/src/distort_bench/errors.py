"""Exception hierarchy shared across the package."""
from __future__ import annotations


class DistortBenchError(Exception):
    pass


class CocoParseError(DistortBenchError, ValueError):
    """Malformed annotation/results JSON. ``offset`` is a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class IntegrityError(DistortBenchError, ValueError):
    """A record references an id that does not exist (or duplicates one)."""


class GeometryError(DistortBenchError, ValueError):
    pass


class RLELengthError(DistortBenchError, ValueError):
    pass


class RangeError(DistortBenchError, ValueError):
    pass


class ParameterError(DistortBenchError, ValueError):
    pass


class ShapeError(DistortBenchError, ValueError):
    pass


class NoTargetError(DistortBenchError):
    """A local distortion found no eligible object to act on."""


class PlanError(DistortBenchError, ValueError):
    pass


class UndefinedRateError(DistortBenchError, ZeroDivisionError):
    pass


class StatsError(DistortBenchError, ValueError):
    pass
