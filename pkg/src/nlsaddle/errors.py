"""Exception types shared across the package."""


class NlsaddleError(Exception):
    """Base class for all package errors."""


class DomainError(NlsaddleError, ValueError):
    """Input outside the mathematical domain of an operation."""


class PreconditionError(NlsaddleError, ValueError):
    """A documented precondition (lemma hypothesis, size limit) is violated."""


class SingularityError(DomainError):
    """Evaluation requested exactly on a kernel singularity."""


class ConvergenceError(NlsaddleError, RuntimeError):
    """An iterative evaluation failed to converge within its caps."""


class TableError(NlsaddleError, RuntimeError):
    """Kernel table construction or lookup failed."""


class ConfigError(NlsaddleError, ValueError):
    """Invalid run configuration; carries all field-level violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
