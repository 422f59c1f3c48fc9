"""Exception hierarchy shared by every subsystem."""

from __future__ import annotations


class PrivspecError(Exception):
    """Base class for all library errors."""


class DimensionError(PrivspecError, ValueError):
    def __init__(self, field: str, value, limit) -> None:
        super().__init__(f"{field}={value!r} outside [0, {limit})")
        self.field = field
        self.value = value
        self.limit = limit


class CapacityError(PrivspecError):
    """A block payload does not fit in the configured block size."""


class OrderingError(PrivspecError, ValueError):
    pass


class FormatError(PrivspecError, ValueError):
    """Bad magic, version, digest or truncated encoding."""


class GeometryError(PrivspecError, ValueError):
    """Vector/matrix dimensions do not conform."""


class ParameterError(PrivspecError, ValueError):
    pass


class IncompletenessError(PrivspecError):
    """Not enough server responses to reconstruct."""


class RobustnessError(PrivspecError):
    def __init__(self, message: str, suspects: tuple[int, ...] = ()) -> None:
        super().__init__(message if not suspects else f"{message}; suspected servers {list(suspects)}")
        self.suspects = suspects


class BackpressureError(PrivspecError):
    """OOP precomputation queue is empty."""


class SessionError(PrivspecError):
    """Unknown or already consumed OOP session."""


class SolverExhausted(PrivspecError):
    pass


class MembershipError(PrivspecError):
    pass


class InputError(PrivspecError, ValueError):
    pass


class StaleBeaconError(PrivspecError):
    pass


class ProximityError(PrivspecError):
    pass


class CircuitError(PrivspecError):
    """Circuit build failure or teardown after an authentication error."""


class SignatureError(PrivspecError):
    """Issuer signature over a puzzle failed to verify."""


class ConfigError(PrivspecError, ValueError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
