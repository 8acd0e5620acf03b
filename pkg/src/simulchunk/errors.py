"""Exception hierarchy shared by every module."""


class SimulChunkError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SimulChunkError):
    """Malformed input text. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StructuralError(SimulChunkError):
    """Well-formed input that violates a structural invariant (heads, roots, ids)."""


class ValidationError(SimulChunkError):
    """Value-level validation failure (timestamps, scores)."""


class BoundsError(SimulChunkError):
    """An index lies outside the sentence it refers to."""


class DuplicateError(SimulChunkError):
    """The same identifier occurs twice where ids must be unique."""


class JoinError(SimulChunkError):
    """Two inputs that must agree by id or surface form do not."""

    def __init__(self, message, ids=()):
        self.ids = list(ids)
        super().__init__(message)


class IntegrityError(SimulChunkError):
    """A derived structure (segmentation, permutation) is inconsistent."""


class ProtocolError(SimulChunkError):
    """An agent broke the simulator protocol."""


class CausalityError(ProtocolError):
    """An agent touched source content the clock has not reached."""


class ConfigurationError(SimulChunkError):
    """Agent or run configuration does not match the data it is applied to."""


class UndefinedMetricError(SimulChunkError):
    """A metric is undefined for the given input (empty corpus, zero duration)."""


class AssignmentError(SimulChunkError):
    """An emitted token could not be assigned to any reference segment."""
