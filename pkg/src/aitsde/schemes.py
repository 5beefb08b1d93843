"""The six time-stepping schemes behind a single stepping interface.

Four schemes integrate the transformed (additive-noise) coordinate Y and two
the original coordinate X:

``TSM``
    Exponential decay of the linear drift part combined with a tamed explicit
    update of the non-linearity: ``exp(-lam*tau) * (y + tau*F_tamed + noise)``.
    A negative proposal is replaced by a drift-implicit (backward Euler) step,
    which always has a positive root, so the state never leaves the domain.
``Splitting``
    Composes the exact flow maps of the four non-linear drift terms with the
    decay/noise step.  Same backstop policy on a negative outcome.
``BEM_Y`` / ``TEM_Y``
    Drift-implicit backward Euler, and full-drift tamed explicit Euler, on
    the transformed SDE.
``RefBEM_X``
    Backward Euler on the original SDE (drift implicit, diffusion evaluated
    at the left point).
``TamedMilstein_X``
    Tamed Euler plus the Milstein diffusion correction on the original SDE;
    used as the fine reference in the convergence studies.  On a negative
    proposal it falls back to the drift-implicit step rather than clamping,
    which would bias the reference.

All steppers are pure.  The vectorized entry points step every path of an
ensemble at once (one numpy lane per path); the scalar API wraps the same
kernels with single-lane arrays, so both views agree by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from . import model
from .errors import BackstopNoRoot, FlowDomainExit, NonPositiveState
from .model import ModelParams
from .solvers import NewtonResult, newton_bisection

__all__ = [
    "SchemeId",
    "SCHEME_IDS",
    "scheme_coordinate",
    "StepOutcome",
    "PathDiagnostics",
    "EnsembleDiagnostics",
    "subflow",
    "step_tsm",
    "step_splitting",
    "step_bem_y",
    "step_tem_y",
    "step_refbem_x",
    "step_tamed_milstein_x",
    "step",
    "simulate_path",
    "simulate_paths",
    "simulate_path_in_x",
    "simulate_paths_in_x",
]

SchemeId = Literal["TSM", "Splitting", "BEM_Y", "TEM_Y", "RefBEM_X", "TamedMilstein_X"]

SCHEME_IDS: tuple[SchemeId, ...] = (
    "TSM",
    "Splitting",
    "BEM_Y",
    "TEM_Y",
    "RefBEM_X",
    "TamedMilstein_X",
)

_COORDINATE: dict[str, str] = {
    "TSM": "Y",
    "Splitting": "Y",
    "BEM_Y": "Y",
    "TEM_Y": "Y",
    "RefBEM_X": "X",
    "TamedMilstein_X": "X",
}

# per-lane failure codes carried through the vector kernels
FAIL_NONE = 0
FAIL_SOLVER = 1
FAIL_FLOW = 2


def scheme_coordinate(scheme: SchemeId) -> str:
    """Which coordinate ("X" or "Y") the scheme's state lives in."""

    try:
        return _COORDINATE[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}") from None


@dataclass(frozen=True)
class StepOutcome:
    """Post-step state plus backstop/negativity/solver diagnostics."""

    value: float
    backstop_used: bool
    explicit_proposal_negative: bool
    solver_iterations: int
    solver_residual: float


@dataclass(frozen=True)
class PathDiagnostics:
    """Aggregate counters from folding a stepper over one path."""

    backstop_count: int
    negative_proposal_count: int
    min_state: float
    max_state: float
    solver_iterations: int
    max_solver_residual: float


@dataclass(frozen=True)
class EnsembleDiagnostics:
    """Per-path diagnostics of a vectorized multi-path run."""

    backstop_counts: np.ndarray
    negative_proposal_counts: np.ndarray
    min_state: np.ndarray
    max_state: np.ndarray
    solver_iterations: np.ndarray
    max_solver_residual: np.ndarray
    failure: np.ndarray  # int8 per path: 0 ok, 1 solver failure, 2 flow exit
    n_steps: int

    @property
    def dead(self) -> np.ndarray:
        return self.failure != FAIL_NONE


class _StepInfo:
    """Per-lane flags and solver counters of one vectorized step."""

    __slots__ = ("explicit_negative", "backstop", "failure", "iterations", "residual")

    def __init__(self, n: int):
        self.explicit_negative = np.zeros(n, dtype=bool)
        self.backstop = np.zeros(n, dtype=bool)
        self.failure = np.zeros(n, dtype=np.int8)
        self.iterations = np.zeros(n, dtype=np.int64)
        self.residual = np.full(n, np.nan)


# ---------------------------------------------------------------------------
# exact sub-flows of the non-linear drift terms


def _flow_u(p: ModelParams, y, tau):
    e = (p.gamma - 1.0) / (p.theta - 1.0)
    return ((p.gamma - 1.0) * p.a2 * tau + y**e) ** (1.0 / e)


def _flow_v(p: ModelParams, y, tau):
    e = 2.0 / (p.theta - 1.0)
    return (2.0 * p.a_minus1 * tau + y**-e) ** (-1.0 / e)


def _flow_p_base(p: ModelParams, y, tau):
    return y ** (-1.0 / (p.theta - 1.0)) - p.a0 * tau


def _flow_p_from_base(p: ModelParams, base):
    return base ** -(p.theta - 1.0)


def _flow_q(p: ModelParams, y, tau):
    return np.sqrt(p.b**2 * p.theta * (p.theta - 1.0) * tau + y * y)


def subflow(p: ModelParams, kind: Literal["U", "V", "P", "Q"], y, tau):
    """Exact time-tau flow map of one sub-ODE of the non-linear drift.

    U moves along the superlinearly decaying term, V along the steep negative
    power-law term, P along the positive power term (whose solution blows up
    in finite time; a step past the blow-up raises :class:`FlowDomainExit`),
    and Q along the 1/y term.  tau = 0 is the identity for every kind.
    """

    if np.any(np.asarray(y) <= 0):
        raise NonPositiveState("state must be strictly positive")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if kind == "U":
        return _flow_u(p, y, tau)
    if kind == "V":
        return _flow_v(p, y, tau)
    if kind == "P":
        base = _flow_p_base(p, y, tau)
        if np.any(base <= 0):
            raise FlowDomainExit("the positive-power sub-flow blows up within this step")
        return _flow_p_from_base(p, base)
    if kind == "Q":
        return _flow_q(p, y, tau)
    raise ValueError(f"unknown sub-flow kind {kind!r}")


# ---------------------------------------------------------------------------
# implicit solves shared by the backstop and the backward Euler schemes


def _bracket(state: np.ndarray, shift: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = 1e-12 * state
    hi = np.maximum(10.0 * state, state + 10.0 * np.abs(shift))
    return lo, hi


def _solve_bem_y(
    p: ModelParams, lam: float, y: np.ndarray, shift: np.ndarray, tau: float
) -> NewtonResult:
    """Positive root of z*(1 + lam*tau) - tau*F(z) = y + shift.

    The residual runs to -inf as z -> 0+ and +inf as z -> inf, so a positive
    root always exists; the bracket is widened geometrically until it is
    enclosed.
    """

    rhs = y + shift
    scale = 1.0 + lam * tau

    def residual(z: np.ndarray) -> np.ndarray:
        return z * scale - tau * model.big_F(p, z) - rhs

    def derivative(z: np.ndarray) -> np.ndarray:
        return scale - tau * model.big_F_prime(p, z)

    lo, hi = _bracket(y, shift)
    return newton_bisection(residual, derivative, lo, hi, initial=y)


def _solve_refbem_x(
    p: ModelParams, x: np.ndarray, shift: np.ndarray, tau: float
) -> NewtonResult:
    """Positive root of z - tau*drift_x(z) = x + shift."""

    rhs = x + shift

    def residual(z: np.ndarray) -> np.ndarray:
        return z - tau * model.drift_x(p, z) - rhs

    def derivative(z: np.ndarray) -> np.ndarray:
        return 1.0 - tau * model.drift_x_prime(p, z)

    lo, hi = _bracket(x, shift)
    return newton_bisection(residual, derivative, lo, hi, initial=x)


def _apply_solver_subset(
    info: _StepInfo,
    value: np.ndarray,
    idx: np.ndarray,
    result: NewtonResult,
    backstop: bool,
) -> None:
    value[idx] = result.root
    info.iterations[idx] = result.iterations
    info.residual[idx] = result.residual
    if backstop:
        info.backstop[idx] = ~result.failed
    info.failure[idx] = np.where(result.failed, FAIL_SOLVER, info.failure[idx])


# ---------------------------------------------------------------------------
# vectorized one-step kernels


def _make_stepper(
    scheme: SchemeId, p: ModelParams, tau: float
) -> Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, _StepInfo]]:
    """Build the vectorized one-step map of a scheme at fixed (params, tau)."""

    if tau <= 0:
        raise ValueError("tau must be positive")
    consts = model.lamperti_constants(p)
    lam, nc = consts.lam, consts.noise_coeff
    decay = math.exp(-lam * tau)

    def backstop_on(
        info: _StepInfo, value: np.ndarray, neg: np.ndarray, y: np.ndarray, dw: np.ndarray
    ) -> None:
        info.explicit_negative |= neg
        idx = np.flatnonzero(neg)
        if idx.size:
            result = _solve_bem_y(p, lam, y[idx], nc * dw[idx], tau)
            _apply_solver_subset(info, value, idx, result, backstop=True)

    if scheme == "TSM":

        def step_fn(y: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, _StepInfo]:
            info = _StepInfo(y.shape[0])
            proposal = decay * (y + tau * model.tamed_F(p, y, tau) + nc * dw)
            value = proposal.copy()
            backstop_on(info, value, proposal <= 0.0, y, dw)
            return value, info

    elif scheme == "Splitting":

        def step_fn(y: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, _StepInfo]:
            info = _StepInfo(y.shape[0])
            u = _flow_u(p, y, tau)
            v = _flow_v(p, u, tau)
            base = _flow_p_base(p, v, tau)
            exited = base <= 0.0
            info.failure[exited] = FAIL_FLOW
            safe = np.where(exited, 1.0, base)
            q = _flow_q(p, _flow_p_from_base(p, safe), tau)
            out = decay * q + nc * decay * dw
            value = np.where(exited, 1.0, out)
            backstop_on(info, value, ~exited & (out <= 0.0), y, dw)
            return value, info

    elif scheme == "BEM_Y":

        def step_fn(y: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, _StepInfo]:
            info = _StepInfo(y.shape[0])
            value = np.empty_like(y)
            result = _solve_bem_y(p, lam, y, nc * dw, tau)
            _apply_solver_subset(info, value, np.arange(y.shape[0]), result, backstop=False)
            return value, info

    elif scheme == "TEM_Y":

        def step_fn(y: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, _StepInfo]:
            info = _StepInfo(y.shape[0])
            proposal = y + tau * model.tamed_drift_y(p, y, tau) + nc * dw
            value = proposal.copy()
            backstop_on(info, value, proposal <= 0.0, y, dw)
            return value, info

    elif scheme == "RefBEM_X":

        def step_fn(x: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, _StepInfo]:
            info = _StepInfo(x.shape[0])
            value = np.empty_like(x)
            result = _solve_refbem_x(p, x, model.diffusion_x(p, x) * dw, tau)
            _apply_solver_subset(info, value, np.arange(x.shape[0]), result, backstop=False)
            return value, info

    elif scheme == "TamedMilstein_X":
        milstein_coeff = 0.5 * p.b**2 * p.theta

        def step_fn(x: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, _StepInfo]:
            info = _StepInfo(x.shape[0])
            proposal = (
                x
                + tau * model.tamed_drift_x(p, x, tau)
                + model.diffusion_x(p, x) * dw
                + milstein_coeff * x ** (2.0 * p.theta - 1.0) * (dw * dw - tau)
            )
            value = proposal.copy()
            neg = proposal <= 0.0
            info.explicit_negative |= neg
            idx = np.flatnonzero(neg)
            if idx.size:
                result = _solve_refbem_x(
                    p, x[idx], model.diffusion_x(p, x[idx]) * dw[idx], tau
                )
                _apply_solver_subset(info, value, idx, result, backstop=True)
            return value, info

    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    return step_fn


# ---------------------------------------------------------------------------
# scalar one-step API


def _scalar_step(scheme: SchemeId, p: ModelParams, state: float, dw: float, tau: float) -> StepOutcome:
    if not state > 0:
        raise NonPositiveState("state must be strictly positive")
    step_fn = _make_stepper(scheme, p, tau)
    value, info = step_fn(np.asarray([float(state)]), np.asarray([float(dw)]))
    code = int(info.failure[0])
    if code == FAIL_FLOW:
        raise FlowDomainExit("the positive-power sub-flow blows up within this step")
    if code == FAIL_SOLVER:
        raise BackstopNoRoot("implicit solve found no positive root in the search bracket")
    residual = info.residual[0]
    return StepOutcome(
        value=float(value[0]),
        backstop_used=bool(info.backstop[0]),
        explicit_proposal_negative=bool(info.explicit_negative[0]),
        solver_iterations=int(info.iterations[0]),
        solver_residual=float(residual) if np.isfinite(residual) else 0.0,
    )


def step_tsm(p: ModelParams, y: float, dw: float, tau: float) -> StepOutcome:
    """Tamed explicit update with exponential linear decay; implicit backstop."""

    return _scalar_step("TSM", p, y, dw, tau)


def step_splitting(p: ModelParams, y: float, dw: float, tau: float) -> StepOutcome:
    """Exact sub-flow composition U, V, P, Q, then decay and noise."""

    return _scalar_step("Splitting", p, y, dw, tau)


def step_bem_y(p: ModelParams, y: float, dw: float, tau: float) -> StepOutcome:
    """Drift-implicit backward Euler step in the transformed coordinate."""

    return _scalar_step("BEM_Y", p, y, dw, tau)


def step_tem_y(p: ModelParams, y: float, dw: float, tau: float) -> StepOutcome:
    """Full-drift tamed explicit Euler step in the transformed coordinate."""

    return _scalar_step("TEM_Y", p, y, dw, tau)


def step_refbem_x(p: ModelParams, x: float, dw: float, tau: float) -> StepOutcome:
    """Drift-implicit backward Euler step on the original SDE."""

    return _scalar_step("RefBEM_X", p, x, dw, tau)


def step_tamed_milstein_x(p: ModelParams, x: float, dw: float, tau: float) -> StepOutcome:
    """Tamed Euler with Milstein correction on the original SDE."""

    return _scalar_step("TamedMilstein_X", p, x, dw, tau)


def step(scheme: SchemeId, p: ModelParams, state: float, dw: float, tau: float) -> StepOutcome:
    """Dispatch a single step of any scheme (state in the scheme's coordinate)."""

    return _scalar_step(scheme, p, state, dw, tau)


# ---------------------------------------------------------------------------
# path simulation


def simulate_paths(
    scheme: SchemeId,
    p: ModelParams,
    initial,
    increments: np.ndarray,
    tau: float,
) -> tuple[np.ndarray, EnsembleDiagnostics]:
    """Fold a scheme over (n_paths, n_steps) Brownian increments.

    Failed paths (implicit solve without a root, or a sub-flow leaving its
    domain) are not raised: their terminal value is NaN and the failure kind
    is recorded per path, so callers can count and exclude them.
    """

    increments = np.atleast_2d(np.asarray(increments, dtype=np.float64))
    n_paths, n_steps = increments.shape
    state = np.broadcast_to(np.asarray(initial, dtype=np.float64), (n_paths,)).copy()
    if np.any(state <= 0):
        raise NonPositiveState("initial state must be strictly positive")
    step_fn = _make_stepper(scheme, p, tau)
    steps_t = np.ascontiguousarray(increments.T)

    backstop_counts = np.zeros(n_paths, dtype=np.int64)
    negative_counts = np.zeros(n_paths, dtype=np.int64)
    solver_iters = np.zeros(n_paths, dtype=np.int64)
    max_residual = np.zeros(n_paths)
    min_state = state.copy()
    max_state = state.copy()
    failure = np.zeros(n_paths, dtype=np.int8)

    for k in range(n_steps):
        value, info = step_fn(state, steps_t[k])
        live = failure == FAIL_NONE
        stepped = live & (info.failure == FAIL_NONE)
        backstop_counts += stepped & info.backstop
        negative_counts += stepped & info.explicit_negative
        solver_iters += np.where(stepped, info.iterations, 0)
        max_residual = np.where(
            stepped, np.fmax(max_residual, np.abs(info.residual)), max_residual
        )
        failure = np.where(live, info.failure, failure)
        # Dead lanes carry a harmless positive dummy so later steps stay defined.
        state = np.where(failure == FAIL_NONE, value, 1.0)
        min_state = np.where(stepped, np.minimum(min_state, state), min_state)
        max_state = np.where(stepped, np.maximum(max_state, state), max_state)

    dead = failure != FAIL_NONE
    terminal = np.where(dead, np.nan, state)
    diagnostics = EnsembleDiagnostics(
        backstop_counts=backstop_counts,
        negative_proposal_counts=negative_counts,
        min_state=min_state,
        max_state=max_state,
        solver_iterations=solver_iters,
        max_solver_residual=max_residual,
        failure=failure,
        n_steps=n_steps,
    )
    return terminal, diagnostics


def simulate_path(
    scheme: SchemeId,
    p: ModelParams,
    initial: float,
    increments: np.ndarray,
    tau: float,
) -> tuple[float, PathDiagnostics]:
    """Single-path variant of :func:`simulate_paths`; failures raise."""

    terminal, diag = simulate_paths(scheme, p, initial, np.asarray(increments)[None, :], tau)
    code = int(diag.failure[0])
    if code == FAIL_FLOW:
        raise FlowDomainExit("the positive-power sub-flow blows up within this step")
    if code == FAIL_SOLVER:
        raise BackstopNoRoot("implicit solve found no positive root in the search bracket")
    return float(terminal[0]), PathDiagnostics(
        backstop_count=int(diag.backstop_counts[0]),
        negative_proposal_count=int(diag.negative_proposal_counts[0]),
        min_state=float(diag.min_state[0]),
        max_state=float(diag.max_state[0]),
        solver_iterations=int(diag.solver_iterations[0]),
        max_solver_residual=float(diag.max_solver_residual[0]),
    )


def simulate_paths_in_x(
    scheme: SchemeId,
    p: ModelParams,
    x0,
    increments: np.ndarray,
    tau: float,
) -> tuple[np.ndarray, np.ndarray, EnsembleDiagnostics]:
    """Run any scheme from an original-coordinate start; report both coordinates.

    Returns (terminal_x, terminal_y, diagnostics).  Y-schemes are started at
    the transformed initial state and their terminal values mapped back, so
    the X view of a Y-scheme is definitionally the transform of its Y view.
    """

    if scheme_coordinate(scheme) == "Y":
        y0 = model.lamperti(p, x0)
        terminal_y, diag = simulate_paths(scheme, p, y0, increments, tau)
        with np.errstate(invalid="ignore"):
            terminal_x = terminal_y ** (1.0 / (1.0 - p.theta))
        return terminal_x, terminal_y, diag
    terminal_x, diag = simulate_paths(scheme, p, x0, increments, tau)
    with np.errstate(invalid="ignore"):
        terminal_y = terminal_x ** (1.0 - p.theta)
    return terminal_x, terminal_y, diag


def simulate_path_in_x(
    scheme: SchemeId,
    p: ModelParams,
    x0: float,
    increments: np.ndarray,
    tau: float,
) -> tuple[float, PathDiagnostics]:
    """Single-path X-coordinate wrapper around :func:`simulate_path`."""

    if scheme_coordinate(scheme) == "Y":
        terminal_y, diag = simulate_path(scheme, p, model.lamperti(p, x0), increments, tau)
        return float(model.lamperti_inv(p, terminal_y)), diag
    return simulate_path(scheme, p, x0, increments, tau)
