"""Exception types shared across the package.

The CLI maps these onto exit codes: input/format problems -> 2,
numeric divergence -> 3, internal invariant violations -> 4.
"""


class GigiError(Exception):
    pass


class PreconditionError(GigiError, ValueError):
    """An operation was called with arguments outside its contract."""


class BehindCameraError(PreconditionError):
    """Projection requested for a point with non-positive view-space depth."""


class FormatError(GigiError, ValueError):
    """Malformed file content. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ConfigurationError(GigiError, ValueError):
    """Incomplete or inconsistent configuration (e.g. missing prefiltered maps)."""


class SceneError(GigiError, ValueError):
    """Invalid scene description or camera placement."""


class DivergenceError(GigiError, RuntimeError):
    """Optimization loss exceeded the divergence guard."""


class InvariantError(GigiError, RuntimeError):
    """An internal data invariant was violated."""
