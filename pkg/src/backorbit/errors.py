"""Exception types and the CLI exit-code map."""


class BackorbitError(Exception):
    """Base class for all library errors."""


class DegenerateMapError(BackorbitError):
    """Map rejected: degree < 2, zero polynomial, or near-zero resultant."""


class SolverFailureError(BackorbitError):
    """Root finder did not converge; carries the worst residuals seen."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class BudgetExceededError(BackorbitError):
    """A d^n-point expansion would exceed the point budget."""


class ContinuationFailureError(BackorbitError):
    """Inverse-branch path lifting failed (likely near a critical value)."""


class PairingError(BackorbitError):
    """An observable was singular or non-finite at a measure atom."""


class QuadratureError(BackorbitError):
    """Requested quadrature tolerance not achieved; carries the bound reached."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class HypothesisRefusalError(BackorbitError):
    """A theorem checker refused to run because its hypotheses fail."""


class ConfigError(BackorbitError):
    """Malformed experiment config."""


# CLI exit codes (documented in the README).
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_REFUSAL = 4
EXIT_NUMERIC = 5
