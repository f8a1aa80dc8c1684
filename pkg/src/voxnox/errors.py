"""Exception types shared across the package."""


class VoxnoxError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(VoxnoxError):
    """An array did not have the shape an operation requires."""

    def __init__(self, expected, actual, what="array"):
        self.expected = expected
        self.actual = actual
        self.what = what
        super().__init__(f"{what}: expected shape {expected}, got {actual}")


class LatticeFormatError(VoxnoxError):
    """A serialized lattice is malformed; `field` names the offending field."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"lattice field {field!r}: {reason}")


class OneHotTargetError(VoxnoxError):
    """Loss target is not one-hot encoded."""


class CyclicGenomeError(VoxnoxError):
    """A genome's connection graph contains a directed cycle."""


class ConfigError(VoxnoxError):
    """An experiment config is invalid; `field` names the offending field."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"config field {field!r}: {reason}")


class EmptyTrainingSetError(VoxnoxError):
    """A training operation received no data."""
