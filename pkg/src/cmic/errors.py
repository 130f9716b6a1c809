"""Exception hierarchy shared by all cmic modules."""


class CmicError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(CmicError):
    """An argument violates a precondition (non-finite, out of range, ...)."""


class DimensionMismatch(CmicError):
    """Paired arrays disagree on length or class count."""


class EmptyClass(CmicError):
    """A class label has no samples but a per-class statistic was requested."""

    def __init__(self, label: int):
        super().__init__(f"class {label} has no samples")
        self.label = label


class DegenerateSeparation(CmicError):
    """Separation is zero, so the normalized ratio is undefined."""


class DegenerateInput(CmicError):
    """Statistic undefined for this input (e.g. zero variance)."""


class FormatError(CmicError):
    """A file does not conform to its declared format."""


class ConfigError(CmicError):
    """Inconsistent or unknown configuration."""


class NumericalError(CmicError):
    """A non-finite value appeared where the computation requires finiteness."""


class DegenerateBatchWarning(UserWarning):
    """Batch too small for the pairwise separation term to be meaningful."""
