"""Exception hierarchy shared by the wegnerlab modules."""


class WegnerLabError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(WegnerLabError, ValueError):
    pass


class CovarianceParseError(WegnerLabError, ValueError):
    """Raised for malformed covariance or matrix files; carries the line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DegenerateCovarianceError(WegnerLabError):
    """Covariance matrix is not positive definite on the requested box."""

    def __init__(self, message, pivot_index=None, pivot_value=None):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(message)


class MatrixSizeError(WegnerLabError, ValueError):
    pass


class LeadingIndexError(WegnerLabError):
    """No multi-index with a nonzero derivative was found up to the search degree."""

    def __init__(self, message, max_degree):
        self.max_degree = max_degree
        super().__init__(message)


class TailToleranceError(WegnerLabError):
    pass


class FactorizationError(WegnerLabError):
    pass


class PreconditionError(WegnerLabError, ValueError):
    """Hypotheses of a numerical check are not met (distinct from the check failing)."""


class AcceptanceFloorError(WegnerLabError):
    """Rejection sampler accepts too rarely to give a useful estimate."""

    def __init__(self, message, rate):
        self.rate = rate
        super().__init__(message)


class SampleError(WegnerLabError):
    """Failure while processing one Monte Carlo sample."""

    def __init__(self, message, sample_index):
        self.sample_index = sample_index
        super().__init__(f"sample {sample_index}: {message}")
