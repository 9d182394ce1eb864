"""Exception types shared across the toolkit."""


class SurvmissError(Exception):
    """Base class for all toolkit errors."""


class DataError(SurvmissError):
    """Invalid input data: bad tokens, contract violations, schema mismatches."""


class RankDeficiencyError(SurvmissError):
    """Design or information matrix is numerically rank deficient."""


class ConvergenceError(SurvmissError):
    """Iterative fit exhausted its iteration budget without converging."""


class SeparationError(ConvergenceError):
    """Monotone likelihood: the maximizer runs off to infinity."""
