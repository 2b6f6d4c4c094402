"""Exception hierarchy shared across the toolkit.

Every error raised by vaebench derives from :class:`VaebenchError`, so callers
(and the CLI) can distinguish toolkit failures from programming errors.
"""


class VaebenchError(Exception):
    """Base class for all toolkit errors."""


# -- dataset discovery / loading ------------------------------------------

class CategoryNotFound(VaebenchError):
    """Requested category directory does not exist (or is not supported)."""


class MaskMissing(VaebenchError):
    """An anomalous test image has no ground-truth mask file."""


class DecodeError(VaebenchError):
    """An image file could not be decoded."""


class LayoutError(VaebenchError):
    """Image and mask dimensions disagree before resizing."""


class EmptySplit(VaebenchError):
    """A batch stream was requested over a split with no entries."""


# -- tensors / models -------------------------------------------------------

class ShapeError(VaebenchError):
    """Tensor shape does not match the operation's contract."""


class NumericError(VaebenchError):
    """Non-finite values where finite ones are required."""


class DivergedError(VaebenchError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


# -- priors ------------------------------------------------------------------

class ParameterError(VaebenchError):
    """Invalid prior hyperparameter (nonpositive range or variance, ...)."""


class SymmetryError(VaebenchError):
    """Correlation kernel is not toroidally symmetric (complex spectrum)."""


class PriorMismatch(VaebenchError):
    """Prior geometry does not match the latent geometry."""


class OracleTooLarge(VaebenchError):
    """Dense covariance oracle requested for an oversized lattice."""


# -- evaluation ---------------------------------------------------------------

class DegenerateLabels(VaebenchError):
    """ROC AUC requested with only one class present."""


class EmptyEvaluation(VaebenchError):
    """No evaluable test images in the category."""


class DuplicateResult(VaebenchError):
    """Two results were supplied for the same (category, model) pair."""


class CheckpointError(VaebenchError):
    """Checkpoint file is unreadable or inconsistent with the request."""
