"""Exception types shared across the package."""


class InstmineError(Exception):
    """Base class for all package errors."""


class DegenerateVector(InstmineError):
    """Vector norm too small to normalize safely."""


class DimensionMismatch(InstmineError):
    """Operands disagree on vector dimension or array shape."""


class InvalidConfig(InstmineError):
    """A configuration object violates its invariants."""


class IndexOutOfRange(InstmineError):
    """View or record index outside the valid range."""


class UnknownId(InstmineError):
    """Image id not present in the bank or dataset."""


class MissingView(InstmineError):
    """A mining strategy needs a feature view that was not supplied."""


class EmptyQuerySet(InstmineError):
    """Mining or loss invoked with an empty query set."""


class InconsistentMining(InstmineError):
    """Positive/negative partitions overlap when assembling a loss context."""


class PoolExhausted(InstmineError):
    """Candidate pool too small to fill a training tuple after deduplication."""


class ParseError(InstmineError):
    """Config file could not be parsed."""


class ValidationError(InstmineError):
    """Config parsed but violates one or more invariants.

    `violations` lists every problem found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvalidInput(InstmineError):
    """Operation input outside its documented domain."""


class IoError(InstmineError):
    """File read/write failed or the file is malformed."""


class StepFailure(InstmineError):
    """A training step aborted; message carries the offending tuple."""
