from __future__ import annotations

from typing import Any


class MVReinsureError(Exception):
    """Base class for mvreinsure errors."""

    exit_code: int = 1


class ConfigError(MVReinsureError):
    """Malformed run configuration or settings."""


class ModelValidationError(MVReinsureError):
    """Problem instance violates one or more model invariants."""

    exit_code = 2

    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SolverError(MVReinsureError):
    """Riccati solver failure."""

    exit_code = 3


class ConvergenceError(SolverError):
    """Iterative minimizer did not converge."""

    def __init__(self, msg: str, residual: float) -> None:
        self.residual = residual
        super().__init__(f"{msg} (residual={residual:.3e})")


class BracketError(SolverError):
    """No bracket found for a one-dimensional minimization."""


class BoundsCertificateError(SolverError):
    """Solution left the certified band [theta, M]."""


class GridConvergenceError(SolverError):
    """Time grid is too coarse to trust the solution."""


class FrontierError(MVReinsureError):
    """Efficient frontier could not be built."""

    exit_code = 4


class InfeasibleTargetError(FrontierError):
    """Target mean below the riskless mean."""


class SimulationError(MVReinsureError):
    """Monte Carlo simulation failure."""


class InadmissibleStrategyError(SimulationError):
    """Strategy produced a control outside the admissible set."""


class ValidationRejectedError(MVReinsureError):
    """Statistical validation rejected the analytic frontier."""

    exit_code = 5

    def __init__(self, msg: str, report: Any = None) -> None:
        self.report = report
        super().__init__(msg)
