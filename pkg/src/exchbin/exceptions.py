class ExchbinError(Exception):
    """Base class for package errors."""


class DomainError(ExchbinError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ConstraintViolation(ExchbinError, ValueError):
    """Parameters do not define a valid probability distribution."""


class EvaluationError(ExchbinError, ArithmeticError):
    """An objective or sum produced a non-finite value."""


class RankDeficiencyError(ExchbinError, ValueError):
    """A design matrix has fewer distinct rows than columns."""
