"""Model functions for the generalized mean-reverting interest-rate SDE.

The original state X follows

    dX = (a_m1/X - a0 + a1*X - a2*X**gamma) dt + b*X**theta dW,   X_0 > 0,

with all five coefficients positive and both exponents strictly above one.
The state change Y = X**(1-theta) turns the multiplicative noise into the
additive constant ``b*(1-theta)`` at the price of a superlinear drift

    dY = f(Y) dt + b*(1-theta) dW,

    f(y) = (theta-1) * ( a2*y**((gamma-theta)/(1-theta)) - a1*y
                         - a_m1*y**((theta+1)/(theta-1))
                         + a0*y**(theta/(theta-1))
                         + 0.5*b**2*theta/y ).

Splitting the linear part out of f gives f(y) = -lam*y + F(y) with
lam = (theta-1)*a1; F collects every non-linear term.  The taming map
F/(1 + tau*F**2) bounds the per-step drift contribution by tau**(-1/2),
which is what lets the explicit schemes in :mod:`aitsde.schemes` survive
the superlinear tails.

Every function here is a pure function of its arguments and accepts either
scalars or numpy arrays for the state.  States must be strictly positive;
fractional powers of non-positive values are rejected with
:class:`~aitsde.errors.NonPositiveState` instead of silently producing NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import (
    ExponentOutOfRange,
    NonPositiveCoefficient,
    NonPositiveState,
    UnsupportedRegime,
)

__all__ = [
    "ModelParams",
    "Regime",
    "LampertiConstants",
    "validate",
    "classify_regime",
    "lamperti_constants",
    "drift_x",
    "drift_x_prime",
    "diffusion_x",
    "diffusion_x_prime",
    "lamperti",
    "lamperti_inv",
    "drift_y",
    "big_F",
    "big_F_prime",
    "big_F_double_prime",
    "tamed_F",
    "tamed_drift_y",
    "tamed_drift_x",
    "negative_moment_admissible",
    "positive_moment_admissible",
    "params_to_dict",
    "params_from_dict",
]

Regime = Literal["NonCritical", "Critical"]

# Relative tolerance for deciding gamma + 1 == 2*theta from float inputs.
_REGIME_RTOL = 1e-12

# Above this magnitude, F**2 would overflow; switch to the asymptotic form
# of the taming quotient, which is exact to ~1e-300 there.
_TAME_OVERFLOW = 1e150


@dataclass(frozen=True)
class ModelParams:
    """The seven constants of the interest-rate model.

    Construction validates positivity of the coefficients, the exponent
    ranges, and that the exponent pair lies in a supported regime
    (gamma + 1 >= 2*theta).
    """

    a_minus1: float
    a0: float
    a1: float
    a2: float
    b: float
    gamma: float
    theta: float

    def __post_init__(self) -> None:
        for name in ("a_minus1", "a0", "a1", "a2", "b"):
            value = getattr(self, name)
            if not value > 0:
                raise NonPositiveCoefficient(f"{name} must be positive, got {value!r}")
        if not self.gamma > 1:
            raise ExponentOutOfRange(f"gamma must exceed 1, got {self.gamma!r}")
        if not self.theta > 1:
            raise ExponentOutOfRange(f"theta must exceed 1, got {self.theta!r}")
        lhs, rhs = self.gamma + 1.0, 2.0 * self.theta
        if lhs < rhs and not _close(lhs, rhs):
            raise UnsupportedRegime(
                f"gamma + 1 = {lhs} < 2*theta = {rhs}: moments of the solution "
                "are not controlled in this regime"
            )


@dataclass(frozen=True)
class LampertiConstants:
    """Linear decay rate and additive noise coefficient of the transformed SDE."""

    lam: float
    noise_coeff: float


def _close(lhs: float, rhs: float) -> bool:
    return abs(lhs - rhs) <= _REGIME_RTOL * max(abs(lhs), abs(rhs))


def validate(
    a_minus1: float,
    a0: float,
    a1: float,
    a2: float,
    b: float,
    gamma: float,
    theta: float,
) -> tuple[ModelParams, Regime]:
    """Validate the seven raw constants and classify the exponent regime."""

    params = ModelParams(a_minus1, a0, a1, a2, b, gamma, theta)
    return params, classify_regime(params)


def classify_regime(p: ModelParams) -> Regime:
    """Return ``"Critical"`` iff gamma + 1 == 2*theta (to relative 1e-12)."""

    if _close(p.gamma + 1.0, 2.0 * p.theta):
        return "Critical"
    return "NonCritical"


def lamperti_constants(p: ModelParams) -> LampertiConstants:
    """Constants of the transformed SDE: lam = (theta-1)*a1, noise b*(1-theta)."""

    return LampertiConstants(lam=(p.theta - 1.0) * p.a1, noise_coeff=p.b * (1.0 - p.theta))


def _require_positive(state, what: str = "state"):
    if np.any(np.asarray(state) <= 0):
        raise NonPositiveState(f"{what} must be strictly positive")
    return state


def drift_x(p: ModelParams, x):
    """Drift of the original SDE: a_m1/x - a0 + a1*x - a2*x**gamma."""

    _require_positive(x)
    return p.a_minus1 / x - p.a0 + p.a1 * x - p.a2 * x**p.gamma


def drift_x_prime(p: ModelParams, x):
    """State derivative of :func:`drift_x` (used by the implicit solves)."""

    _require_positive(x)
    return -p.a_minus1 / (x * x) + p.a1 - p.a2 * p.gamma * x ** (p.gamma - 1.0)


def diffusion_x(p: ModelParams, x):
    """Diffusion of the original SDE: b*x**theta."""

    _require_positive(x)
    return p.b * x**p.theta


def diffusion_x_prime(p: ModelParams, x):
    """State derivative of the diffusion, b*theta*x**(theta-1)."""

    _require_positive(x)
    return p.b * p.theta * x ** (p.theta - 1.0)


def lamperti(p: ModelParams, x):
    """Map original state to transformed state: y = x**(1-theta)."""

    _require_positive(x)
    return x ** (1.0 - p.theta)


def lamperti_inv(p: ModelParams, y):
    """Inverse state map: x = y**(1/(1-theta))."""

    _require_positive(y)
    return y ** (1.0 / (1.0 - p.theta))


def drift_y(p: ModelParams, y):
    """Drift of the transformed SDE (additive noise coordinates)."""

    _require_positive(y)
    t = p.theta
    return (t - 1.0) * (
        p.a2 * y ** ((p.gamma - t) / (1.0 - t))
        - p.a1 * y
        - p.a_minus1 * y ** ((t + 1.0) / (t - 1.0))
        + p.a0 * y ** (t / (t - 1.0))
        + 0.5 * p.b**2 * t / y
    )


def big_F(p: ModelParams, y):
    """Non-linear part of the transformed drift: F(y) = drift_y(y) + lam*y."""

    _require_positive(y)
    t = p.theta
    return (t - 1.0) * (
        p.a2 * y ** ((p.gamma - t) / (1.0 - t))
        - p.a_minus1 * y ** ((t + 1.0) / (t - 1.0))
        + p.a0 * y ** (t / (t - 1.0))
        + 0.5 * p.b**2 * t / y
    )


def big_F_prime(p: ModelParams, y):
    """Analytic derivative of F (term-by-term power rule)."""

    _require_positive(y)
    t, g = p.theta, p.gamma
    return (
        -p.a2 * (g - t) * y ** ((g - 1.0) / (1.0 - t))
        - p.a_minus1 * (t + 1.0) * y ** (2.0 / (t - 1.0))
        + p.a0 * t * y ** (1.0 / (t - 1.0))
        - 0.5 * (t - 1.0) * p.b**2 * t / (y * y)
    )


def big_F_double_prime(p: ModelParams, y):
    """Analytic second derivative of F."""

    _require_positive(y)
    t, g = p.theta, p.gamma
    return (
        -p.a2 * (g - t) * (g - 1.0) / (1.0 - t) * y ** ((g + t - 2.0) / (1.0 - t))
        - 2.0 * p.a_minus1 * (t + 1.0) / (t - 1.0) * y ** ((3.0 - t) / (t - 1.0))
        + p.a0 * t / (t - 1.0) * y ** ((2.0 - t) / (t - 1.0))
        + (t - 1.0) * p.b**2 * t / (y * y * y)
    )


def tamed_F(p: ModelParams, y, tau):
    """Taming quotient F/(1 + tau*F**2); always bounded by tau**(-1/2)."""

    if np.any(np.asarray(tau) <= 0):
        raise NonPositiveState("tau must be strictly positive")
    f = big_F(p, y)
    big = np.abs(f) >= _TAME_OVERFLOW
    if np.any(big):
        # Asymptotically F/(1+tau*F**2) = 1/(tau*F) up to O(1/(tau*F**2)**2).
        f_safe = np.where(big, 1.0, f)
        return np.where(big, 1.0 / (tau * f), f_safe / (1.0 + tau * f_safe**2))
    return f / (1.0 + tau * f * f)


def _tame_abs(f, tau):
    big = np.abs(f) >= _TAME_OVERFLOW
    if np.any(big):
        f_safe = np.where(big, 1.0, f)
        return np.where(big, np.sign(f) / tau, f_safe / (1.0 + tau * np.abs(f_safe)))
    return f / (1.0 + tau * np.abs(f))


def tamed_drift_y(p: ModelParams, y, tau):
    """Full-drift taming f/(1 + tau*|f|) used by the tamed Euler scheme."""

    if np.any(np.asarray(tau) <= 0):
        raise NonPositiveState("tau must be strictly positive")
    return _tame_abs(drift_y(p, y), tau)


def tamed_drift_x(p: ModelParams, x, tau):
    """Original-coordinate drift tamed as f/(1 + tau*|f|) (Milstein reference)."""

    if np.any(np.asarray(tau) <= 0):
        raise NonPositiveState("tau must be strictly positive")
    return _tame_abs(drift_x(p, x), tau)


def negative_moment_admissible(p: ModelParams, moment_order: float) -> bool:
    """Whether E|Y_t|**(-moment_order) stays bounded uniformly in time."""

    if not moment_order > 0:
        raise ValueError("moment_order must be positive")
    lower = 2.0 / (p.theta - 1.0)
    if classify_regime(p) == "NonCritical":
        return moment_order >= lower
    upper = (2.0 * p.a2 + p.b**2) / ((p.theta - 1.0) * p.b**2)
    return lower <= moment_order <= upper


def positive_moment_admissible(p: ModelParams, moment_order: float) -> bool:
    """Whether E|Y_t|**moment_order stays bounded uniformly in time."""

    if not moment_order > 0:
        raise ValueError("moment_order must be positive")
    return moment_order >= (p.gamma - 1.0) / (p.theta - 1.0)


def params_to_dict(p: ModelParams) -> dict[str, float]:
    """Flat JSON-ready mapping of the seven constants."""

    return {
        "a_minus1": p.a_minus1,
        "a0": p.a0,
        "a1": p.a1,
        "a2": p.a2,
        "b": p.b,
        "gamma": p.gamma,
        "theta": p.theta,
    }


def params_from_dict(d: dict) -> ModelParams:
    """Inverse of :func:`params_to_dict`; validates on construction."""

    return ModelParams(
        a_minus1=float(d["a_minus1"]),
        a0=float(d["a0"]),
        a1=float(d["a1"]),
        a2=float(d["a2"]),
        b=float(d["b"]),
        gamma=float(d["gamma"]),
        theta=float(d["theta"]),
    )
