class ApteError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ApteError, ValueError):
    """Input data is malformed, missing, or violates a precondition."""


class EstimationError(ApteError):
    """A model or estimand cannot be computed from the data at hand."""
