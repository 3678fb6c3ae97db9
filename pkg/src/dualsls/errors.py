"""Shared exception types."""


class ContractViolationError(ValueError):
    """An argument violates a documented precondition (dimensions, ranges, ...)."""


class UnderdeterminedDataError(ValueError):
    """Regressor matrix is rank deficient; carries the observed rank."""

    def __init__(self, rank, required):
        self.rank = rank
        self.required = required
        super().__init__(
            f"regressors are rank deficient: rank {rank} < required {required}"
        )


class InvalidResponseError(ValueError):
    """FIR response pair does not satisfy the realization requirements."""


class InstabilityError(ValueError):
    """A closed loop required to be stable has spectral radius >= 1."""


class BilinearityError(ValueError):
    """Both the multiplier and the uncertainty expression were left symbolic."""


class ProgramValidationError(ValueError):
    """A conic program failed validation; carries the diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid conic program: " + "; ".join(self.diagnostics))


class SolverFailureError(RuntimeError):
    """The conic solver failed in a way that cannot be reported as a status."""


class SynthesisInfeasibleError(RuntimeError):
    """A synthesis program is infeasible; carries solver diagnostics."""

    def __init__(self, message, solution=None):
        self.solution = solution
        super().__init__(message)


class ConfigError(ValueError):
    """Configuration file is invalid; message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class AggregateError(RuntimeError):
    """All Monte Carlo episodes failed; no aggregate can be formed."""
