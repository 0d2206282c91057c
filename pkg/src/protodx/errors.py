"""Exception types shared across the package.

The CLI maps these onto exit codes: validation-type errors exit 1,
numeric/runtime failures exit 2.
"""


class ProtodxError(Exception):
    """Base class for package errors."""


class CorpusParseError(ProtodxError, ValueError):
    """Malformed corpus record. Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(ProtodxError, ValueError):
    """Invalid configuration value or combination."""


class InputError(ProtodxError, ValueError):
    """Input violates an operation precondition."""


class CheckpointError(ProtodxError, ValueError):
    """Checkpoint directory is missing, inconsistent, or version-mismatched."""


class NumericError(ProtodxError, RuntimeError):
    """Non-finite values encountered during training or checking."""

    def __init__(self, message: str, step: int | None = None,
                 batch_ids: list[str] | None = None):
        super().__init__(message)
        self.step = step
        self.batch_ids = batch_ids or []


class DegenerateLabelError(ProtodxError, ValueError):
    """A ranking metric was asked for a label with only one class present."""
