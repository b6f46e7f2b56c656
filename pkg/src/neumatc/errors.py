"""Exception hierarchy shared by all neumatc modules."""


class NeuMatCError(Exception):
    """Base class for library errors."""


class DimensionError(NeuMatCError, ValueError):
    """Array shapes do not chain or match."""


class DomainError(NeuMatCError, ValueError):
    """Non-finite input or a zero-norm denominator."""


class ArgumentError(NeuMatCError, ValueError):
    """Invalid argument combination (missing rhs, empty candidate set, ...)."""


class FormatError(NeuMatCError):
    """Malformed binary file.

    ``offset`` is the byte offset where parsing failed, or the record index for
    sequence files (``record`` is set instead).
    """

    def __init__(self, message, offset=None, record=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        if record is not None:
            message = f"{message} (record {record})"
        super().__init__(message)
        self.offset = offset
        self.record = record


class UnsupportedVersionError(FormatError):
    pass


class SingularMatrixError(NeuMatCError, ArithmeticError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NotPositiveDefiniteError(NeuMatCError, ArithmeticError):
    def __init__(self, message, minor=None):
        super().__init__(message)
        self.minor = minor


class ConvergenceError(NeuMatCError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolverFailure(NeuMatCError):
    """Target computation failed at one or more parameter points."""

    def __init__(self, failures):
        lines = ", ".join(f"p={p!r}: {err}" for p, err in failures)
        super().__init__(f"solver failed at {len(failures)} point(s): {lines}")
        self.failures = failures


class TrainingDiverged(NeuMatCError, FloatingPointError):
    def __init__(self, epoch, norms):
        super().__init__(f"loss became non-finite at epoch {epoch}; component norms {norms}")
        self.epoch = epoch
        self.norms = norms


class ConfigurationError(NeuMatCError, ValueError):
    pass
