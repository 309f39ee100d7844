"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AgmonLabError(Exception):
    exit_code = 3


class ConfigError(AgmonLabError, ValueError):
    """Invalid configuration: misaligned grids, unknown variants, bad keys."""

    exit_code = 1


class HypothesisViolation(AgmonLabError):
    """A structural assumption on kernel, potential or distance fails."""

    exit_code = 2


class DomainError(HypothesisViolation):
    """Evaluation outside the admissible strip, or unreachable nodes."""


class NumericalFailure(AgmonLabError):
    """Quadrature, truncation or eigensolver did not meet its tolerance."""

    exit_code = 3

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual
