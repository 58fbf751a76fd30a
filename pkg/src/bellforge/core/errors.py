from __future__ import annotations


class BellforgeError(Exception):
    """Base class for every error raised by the package."""


class InvariantError(BellforgeError, ValueError):
    """A value failed a named invariant ("not PSD", "trace not 1", ...)."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        self.detail = detail
        super().__init__(f"{invariant}: {detail}" if detail else invariant)


class DimensionMismatch(InvariantError):
    def __init__(self, detail: str = ""):
        super().__init__("dimension mismatch", detail)


class ZeroProbabilityError(InvariantError):
    def __init__(self, detail: str = ""):
        super().__init__("zero success probability", detail)


class LocalBehaviorError(BellforgeError):
    """An operation that needs a nonlocal behavior was handed a local one."""


class NumericalFailure(BellforgeError):
    """Something guaranteed to exist was not found; tolerances are to blame."""


class CapacityError(BellforgeError):
    """Vertex count or composed Hilbert-space dimension over the cap."""


class FormatError(BellforgeError):
    """A file could not be parsed or does not match its schema."""
