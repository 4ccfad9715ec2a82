"""Exception hierarchy shared across the toolkit.

Two broad failure families matter to callers (and to the CLI exit codes):
data problems in user-supplied files or mismatched inputs, and numeric
failures inside estimation routines.
"""


class DiarkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(DiarkitError):
    """Bad input data: unparsable files, mismatched ids or dimensions."""


class FormatError(DataError):
    """A serialized artifact (RTTM, POST, EMB, ...) failed to parse."""


class FusionError(DataError):
    """Posterior tracks cannot be fused (rate/length/id mismatch)."""


class NumericError(DiarkitError):
    """A numeric routine failed or hit degenerate input."""


class TrainingError(NumericError):
    """Model estimation failed (singular scatter, non-PD covariance)."""


class DegenerateDataError(NumericError):
    """Input carries no usable signal (e.g. all scores identical)."""


class DegenerateModelError(NumericError):
    """A fitted model is unusable for the requested operation."""
