"""Exception types shared across the package.

The CLI maps these onto process exit codes: ParameterError -> 2,
DataError (and subclasses) -> 3, DivergenceError -> 4.
"""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(ValueError):
    """A numerically degenerate input (zero-norm vector, empty column)."""


class OracleError(RuntimeError):
    """A verification oracle produced a non-finite value."""


class DataError(ValueError):
    """A dataset-level problem (missing class, malformed file)."""


class ParseError(DataError):
    """A malformed record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AlignmentError(DataError):
    """Prediction and ground truth cannot be aligned by id."""


class DivergenceError(RuntimeError):
    """Training produced non-finite gradients or parameters."""


class StaleCacheError(RuntimeError):
    """Backward called with activations from an outdated forward pass."""


class MetricUndefinedError(ValueError):
    """The requested metric is undefined for this input."""


class EmptyObjectiveError(ValueError):
    """A contrastive loss with no contributing terms."""
