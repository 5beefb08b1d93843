"""Safeguarded scalar root finding for the drift-implicit steps.

Every implicit solve in this package is a scalar equation with a residual
that tends to -inf at the left edge of the positive half-line and +inf far
to the right, so a sign-changing bracket always exists and bisection is a
guaranteed (if slow) fallback.  Newton iterates that leave the bracket, or
that are not finite, are replaced by the bracket midpoint; the bracket
shrinks on every iteration either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MaxIterations, NoSignChange

__all__ = ["ImplicitProblem", "solve_implicit", "NewtonResult"]

DEFAULT_TOLERANCE = 1e-12
MAX_ITERATIONS = 200
MAX_BRACKET_DOUBLINGS = 60


@dataclass(frozen=True)
class ImplicitProblem:
    """A residual with a sign-changing bracket and an absolute tolerance."""

    residual: Callable[[float], float]
    bracket: tuple[float, float]
    tolerance: float = DEFAULT_TOLERANCE
    derivative: Callable[[float], float] | None = None


@dataclass
class NewtonResult:
    """Vector root-finding outcome; lanes that failed are flagged, not raised."""

    root: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    failed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    no_sign_change: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _widen_brackets(
    residual: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grow (lo, hi) geometrically until residual(lo) < 0 < residual(hi)."""

    lo = lo.copy()
    hi = hi.copy()
    r_lo = residual(lo)
    r_hi = residual(hi)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        need_lo = r_lo > 0.0
        need_hi = r_hi < 0.0
        if not (need_lo.any() or need_hi.any()):
            break
        lo = np.where(need_lo, 0.5 * lo, lo)
        hi = np.where(need_hi, 2.0 * hi, hi)
        if need_lo.any():
            r_lo = residual(lo)
        if need_hi.any():
            r_hi = residual(hi)
    no_change = (r_lo > 0.0) | (r_hi < 0.0)
    return lo, hi, no_change


def newton_bisection(
    residual: Callable[[np.ndarray], np.ndarray],
    derivative: Callable[[np.ndarray], np.ndarray] | None,
    lo: np.ndarray,
    hi: np.ndarray,
    initial: np.ndarray | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = MAX_ITERATIONS,
    widen: bool = True,
) -> NewtonResult:
    """Vectorized safeguarded Newton on residuals with r(lo) < 0 < r(hi).

    ``residual`` and ``derivative`` must act elementwise on full-length
    arrays (they are always called with all lanes; converged lanes simply
    keep their values).  Without a derivative the iteration degenerates to
    pure bisection.  Lanes are frozen the moment their residual magnitude
    drops to ``tolerance``; the returned iteration counts are per-lane
    residual-update counts.
    """

    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = lo.shape[0]
    if widen:
        lo, hi, no_change = _widen_brackets(residual, lo, hi)
    else:
        r_lo = residual(lo)
        r_hi = residual(hi)
        no_change = (r_lo > 0.0) | (r_hi < 0.0)

    if initial is None:
        z = 0.5 * (lo + hi)
    else:
        z = np.clip(initial, lo, hi)
        edge = (z <= lo) | (z >= hi)
        z = np.where(edge, 0.5 * (lo + hi), z)
    # Dead lanes keep a harmless in-bracket value so residuals stay defined.
    z = np.where(no_change, 0.5 * (lo + hi), z)
    out_res = np.full(n, np.nan)
    iters = np.zeros(n, dtype=np.int64)
    done = no_change.copy()
    failed = no_change.copy()

    for _ in range(max_iterations):
        active = ~done
        if not active.any():
            break
        r = residual(z)
        iters[active] += 1
        newly = active & (np.abs(r) <= tolerance)
        out_res[newly] = r[newly]
        done |= newly
        active = ~done
        if not active.any():
            break
        # Shrink the bracket with the fresh sign information.
        pos = active & (r > 0.0)
        neg = active & (r < 0.0)
        hi = np.where(pos, z, hi)
        lo = np.where(neg, z, lo)
        if derivative is not None:
            d = derivative(z)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                candidate = z - r / d
            bad = ~np.isfinite(candidate) | (candidate <= lo) | (candidate >= hi)
            candidate = np.where(bad, 0.5 * (lo + hi), candidate)
        else:
            candidate = 0.5 * (lo + hi)
        z = np.where(active, candidate, z)

    still = ~done
    if still.any():
        failed |= still
    return NewtonResult(
        root=z,
        iterations=iters,
        residual=out_res,
        failed=failed,
        no_sign_change=no_change,
    )


def solve_implicit(problem: ImplicitProblem) -> tuple[float, int, float]:
    """Solve a scalar implicit problem; returns (root, iterations, residual).

    Raises :class:`NoSignChange` if the bracket cannot be made sign-changing
    and :class:`MaxIterations` if the residual never meets tolerance.
    """

    lo, hi = problem.bracket
    if not (0.0 < lo < hi):
        raise NoSignChange(f"invalid bracket {problem.bracket}")

    def vec_residual(z: np.ndarray) -> np.ndarray:
        return np.asarray([problem.residual(float(v)) for v in z], dtype=np.float64)

    vec_derivative = None
    if problem.derivative is not None:
        deriv = problem.derivative

        def vec_derivative(z: np.ndarray) -> np.ndarray:
            return np.asarray([deriv(float(v)) for v in z], dtype=np.float64)

    # The problem's bracket is contractual: same-signed residuals are an
    # error here, not a cue to widen (steppers widen before building one).
    result = newton_bisection(
        vec_residual,
        vec_derivative,
        np.asarray([lo]),
        np.asarray([hi]),
        tolerance=problem.tolerance,
        widen=False,
    )
    if bool(result.no_sign_change[0]):
        raise NoSignChange(
            f"residual does not change sign over bracket ({lo}, {hi})"
        )
    if bool(result.failed[0]):
        raise MaxIterations(
            f"no convergence to {problem.tolerance} within {MAX_ITERATIONS} iterations"
        )
    return float(result.root[0]), int(result.iterations[0]), float(result.residual[0])
