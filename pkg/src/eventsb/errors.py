"""Shared exception types.

The CLI maps these onto its exit-code contract: usage errors exit 2
(handled by click), data/format problems exit 3, numerical aborts exit 4,
and refusals (uncertified extractor, mismatched checkpoint) exit 5.
"""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DataFormatError(ValueError):
    """Malformed binary or text input; carries a byte/line position when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ScheduleError(ValueError):
    """Bridge timestep arguments outside the valid schedule."""


class SinkhornError(RuntimeError):
    """Sinkhorn iteration failed to reach the marginal tolerance."""

    def __init__(self, message, row_residual=None, col_residual=None):
        super().__init__(message)
        self.row_residual = row_residual
        self.col_residual = col_residual


class NumericalAbort(RuntimeError):
    """A loss component became non-finite; names the offending component."""

    def __init__(self, component, value=float("nan")):
        super().__init__(f"non-finite value in loss component '{component}': {value}")
        self.component = component


class CertificationError(RuntimeError):
    """Feature extractor failed (or lacks) day/night certification."""


class ConfigMismatchError(RuntimeError):
    """Checkpoint and input configuration disagree; names the field."""

    def __init__(self, field, expected, actual):
        super().__init__(
            f"checkpoint/input mismatch on '{field}': checkpoint has {expected!r}, "
            f"input has {actual!r}"
        )
        self.field = field


class CheckpointError(RuntimeError):
    """Checkpoint could not be written or read; carries path and iteration."""
