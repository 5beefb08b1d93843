"""Exception hierarchy shared across the package."""

from __future__ import annotations

__all__ = [
    "AitSdeError",
    "NonPositiveCoefficient",
    "ExponentOutOfRange",
    "UnsupportedRegime",
    "NonPositiveState",
    "FactorNotDivisor",
    "NoSignChange",
    "MaxIterations",
    "BackstopNoRoot",
    "FlowDomainExit",
    "NoFeasibleTau",
    "DegenerateDesign",
    "ConfigInvalid",
    "ExclusionBudgetExceeded",
]


class AitSdeError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveCoefficient(AitSdeError, ValueError):
    """A model coefficient that must be positive is zero or negative."""


class ExponentOutOfRange(AitSdeError, ValueError):
    """A drift or diffusion exponent is at or below one."""


class UnsupportedRegime(AitSdeError, ValueError):
    """The exponent pair falls in the regime the package does not support."""


class NonPositiveState(AitSdeError, ValueError):
    """A state value that must stay strictly positive is not."""


class FactorNotDivisor(AitSdeError, ValueError):
    """A coarsening factor does not divide the fine step count."""


class NoSignChange(AitSdeError, ArithmeticError):
    """Bracket expansion failed to find opposite residual signs."""


class MaxIterations(AitSdeError, ArithmeticError):
    """The root finder hit its iteration cap without converging."""


class BackstopNoRoot(AitSdeError, ArithmeticError):
    """The implicit backstop equation has no positive root in reach."""


class FlowDomainExit(AitSdeError, ArithmeticError):
    """An exact sub-flow left its domain within the step (finite-time blow-up)."""


class NoFeasibleTau(AitSdeError, ArithmeticError):
    """No step size in (0, 1) satisfies the positivity confidence bound."""


class DegenerateDesign(AitSdeError, ValueError):
    """Rate fitting received a design with no usable spread in the step sizes."""


class ConfigInvalid(AitSdeError, ValueError):
    """An experiment configuration violates its invariants."""


class ExclusionBudgetExceeded(AitSdeError, RuntimeError):
    """Too many paths failed and were excluded for the statistics to be trusted."""
