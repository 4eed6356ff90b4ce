"""Outlier-robust moving horizon estimation with per-measurement shape parameters.

The window problem is solved by single shooting: the decision vector is the
first state of the window followed by the process disturbances, and the
remaining states are rolled forward through the vehicle model, so the
dynamics hold exactly. Each measurement entry ``(i, j)`` carries its own
shape parameter ``alpha[i, j]``; states and shape parameters are estimated
alternately until the shape update stops lowering the cost.

Window objective::

    J = chi' P chi + sum_j w_j' W w_j
        + sum_j (1/ny) sum_i delta_i * (phi(v_ij, alpha_ij, c) + gamma_i * (2 - alpha_ij)^2)
        + box penalty on bounded residual channels
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .robust_loss import ALPHA_MAX, ALPHA_MIN, phi, phi_grad_r_scalar, phi_scalar
from .solvers import (BoxedProblem, NonFiniteObjective, _golden_jit,
                      minimize_boxed)
from .vehicle import (N_OUTPUT, N_STATE, OUTPUT_INDEX, VehicleParams,
                      propagate, propagate_jacobian, wrap_angle)

N_ANGLE_OUTPUTS = 2  # outputs 0 and 1 are angles


class SolverFailure(RuntimeError):
    """The state subproblem produced a non-finite objective."""


@dataclass
class StageCostParams:
    delta: np.ndarray = field(default_factory=lambda: np.ones(N_OUTPUT))
    gamma: np.ndarray = field(default_factory=lambda: np.full(N_OUTPUT, 0.1))
    c: float = 1.0
    W: np.ndarray = field(default_factory=lambda: 1e6 * np.eye(N_STATE))
    w_bound: float = 0.01
    residual_lower: np.ndarray = field(
        default_factory=lambda: np.array([-0.1, -0.1, -np.inf, -np.inf]))
    residual_upper: np.ndarray = field(
        default_factory=lambda: np.array([0.1, 0.1, np.inf, np.inf]))
    penalty_weight: float = 1e6

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float) * np.ones(N_OUTPUT)
        self.gamma = np.asarray(self.gamma, dtype=float) * np.ones(N_OUTPUT)
        self.W = np.asarray(self.W, dtype=float)
        self.residual_lower = np.asarray(self.residual_lower, dtype=float) * np.ones(N_OUTPUT)
        self.residual_upper = np.asarray(self.residual_upper, dtype=float) * np.ones(N_OUTPUT)
        if np.any(self.delta <= 0) or np.any(self.delta > 1):
            raise ValueError("delta entries must lie in (0, 1]")
        if np.any(self.gamma <= 0):
            raise ValueError("gamma entries must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.W.shape != (N_STATE, N_STATE) or np.any(np.linalg.eigvalsh(self.W) <= 0):
            raise ValueError("W must be a positive definite 7x7 matrix")
        if self.w_bound < 0:
            raise ValueError("w_bound must be non-negative")
        if np.any(self.residual_lower > self.residual_upper):
            raise ValueError("residual box is empty")


@dataclass
class EstimationWindow:
    """Measurements ``y[k-n+1 .. k]``, the controls between them, and the prior.

    ``alpha`` has shape ``(ny, n)``: one column per measurement in the window.
    During start-up the window grows until it holds ``horizon + 1`` samples.
    """
    measurements: np.ndarray
    controls: np.ndarray
    prior: np.ndarray
    alpha: np.ndarray
    prior_weight: np.ndarray
    horizon: int = 10

    def __post_init__(self):
        self.measurements = np.atleast_2d(np.asarray(self.measurements, dtype=float))
        n = self.measurements.shape[0]
        self.controls = np.asarray(self.controls, dtype=float).reshape(n - 1, 2)
        self.prior = np.asarray(self.prior, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.prior_weight = np.asarray(self.prior_weight, dtype=float)
        if self.measurements.shape[1] != N_OUTPUT:
            raise ValueError("measurements must have 4 channels")
        if n > self.horizon + 1:
            raise ValueError("window holds more than horizon + 1 measurements")
        if self.alpha.shape != (N_OUTPUT, n):
            raise ValueError(f"alpha must have shape {(N_OUTPUT, n)}")
        if np.any(self.alpha < ALPHA_MIN) or np.any(self.alpha > ALPHA_MAX):
            raise ValueError("alpha entries outside the admissible interval")

    @property
    def size(self):
        return self.measurements.shape[0]

    @property
    def full(self):
        return self.size == self.horizon + 1

    @classmethod
    def start(cls, y0, prior, horizon=10, prior_weight=None):
        if prior_weight is None:
            prior_weight = 10.0 * np.eye(N_STATE)
        return cls(np.asarray(y0, dtype=float)[None, :], np.empty((0, 2)), prior,
                   np.full((N_OUTPUT, 1), ALPHA_MAX), prior_weight, horizon)


@dataclass
class EstimatorSolution:
    xhat: np.ndarray          # (n, 7)
    what: np.ndarray          # (n-1, 7)
    vhat: np.ndarray          # (ny, n)
    alpha: np.ndarray         # (ny, n)
    cost: float
    cost_trace: list = field(default_factory=list)
    inner_iterations: int = 0
    iterates: list = field(default_factory=list)   # xhat[-1] after each state solve
    evaluations: int = 0

    @property
    def current(self):
        return self.xhat[-1]

    def decision(self):
        return np.concatenate([self.xhat[0], self.what.ravel()])


@dataclass(frozen=True)
class EstimatorVariant:
    """``fixed`` (one solve at ``alpha0``), ``grid`` (best of ``grid``) or ``adaptive``."""
    kind: str = "adaptive"
    alpha0: float = 1.5
    grid: tuple = (1.1, 1.5, 1.8)
    max_iterations: int = 10
    epsilon: float = 1e-3
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("fixed", "grid", "adaptive"):
            raise ValueError(f"unknown variant kind {self.kind!r}")
        if self.kind == "grid" and len(self.grid) == 0:
            raise ValueError("grid variant needs a non-empty alpha set")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        for a in (self.alpha0, *self.grid):
            if not 1.0 < a < 2.0:
                raise ValueError("shape parameters must lie in (1, 2)")

    @property
    def label(self):
        if self.name:
            return self.name
        if self.kind == "fixed":
            return f"fixed_a{self.alpha0:g}"
        if self.kind == "grid":
            return f"grid_m{len(self.grid)}"
        return f"prop_m{self.max_iterations}"


# --- cost pieces (reference implementations) ---------------------------------

def arrival_cost(chi, prior_weight):
    chi = np.asarray(chi, dtype=float)
    return float(chi @ prior_weight @ chi)


def disturbance_cost(what_j, W):
    what_j = np.asarray(what_j, dtype=float)
    return float(what_j @ W @ what_j)


def stage_cost(what_j, vhat_j, alpha_col, p: StageCostParams):
    """Disturbance penalty plus the weighted robust residual term for one sample.

    ``what_j`` may be ``None`` for the newest sample, which has no disturbance.
    """
    vhat_j = np.asarray(vhat_j, dtype=float)
    alpha_col = np.asarray(alpha_col, dtype=float) * np.ones(N_OUTPUT)
    terms = p.delta * (phi(vhat_j, alpha_col, p.c) + p.gamma * (2.0 - alpha_col) ** 2)
    lw = 0.0 if what_j is None else disturbance_cost(what_j, p.W)
    return lw + float(np.sum(terms)) / N_OUTPUT


def residual_penalty(vhat_j, p: StageCostParams):
    v = np.asarray(vhat_j, dtype=float)
    over = np.maximum(v - p.residual_upper, 0.0) + np.maximum(p.residual_lower - v, 0.0)
    return p.penalty_weight * float(np.sum(over ** 2))


def rollout(x_start, what, controls, vehicle: VehicleParams):
    n = len(controls) + 1
    xs = np.empty((n, N_STATE))
    xs[0] = x_start
    for j in range(n - 1):
        xs[j + 1] = propagate(xs[j], controls[j], vehicle.hitch_length,
                              vehicle.sample_time) + what[j]
    return xs


def residuals(xhat, measurements):
    """``vhat`` with shape ``(ny, n)``; angle channels are wrapped."""
    v = np.asarray(measurements) - np.asarray(xhat)[:, OUTPUT_INDEX]
    v[:, :N_ANGLE_OUTPUTS] = np.arctan2(np.sin(v[:, :N_ANGLE_OUTPUTS]),
                                        np.cos(v[:, :N_ANGLE_OUTPUTS]))
    return v.T.copy()


def window_cost(window: EstimationWindow, p: StageCostParams, x_start, what,
                alpha=None, vehicle: VehicleParams = VehicleParams()):
    """Total window objective assembled from the reference pieces."""
    alpha = window.alpha if alpha is None else alpha
    what = np.asarray(what, dtype=float).reshape(-1, N_STATE)
    xs = rollout(x_start, what, window.controls, vehicle)
    v = residuals(xs, window.measurements)
    total = arrival_cost(xs[0] - window.prior, window.prior_weight)
    for j in range(window.size):
        wj = what[j] if j < window.size - 1 else None
        total += stage_cost(wj, v[:, j], alpha[:, j], p) + residual_penalty(v[:, j], p)
    return total


# --- compiled objective ------------------------------------------------------

@njit(cache=True)
def _entry_cost(a, v, delta, gamma, c, ny):
    return delta / ny * (phi_scalar(v, a, c) + gamma * (2.0 - a) ** 2)


@njit(cache=True)
def _window_objective(x, prior, P, W, y, u, alpha, delta, gamma, c,
                      vlo, vhi, pen, hitch, ts):
    n = y.shape[0]
    ny = y.shape[1]
    nx = prior.shape[0]
    states = np.empty((n, nx))
    states[0] = x[:nx]
    for j in range(n - 1):
        states[j + 1] = propagate(states[j], u[j], hitch, ts) + x[nx + nx * j: 2 * nx + nx * j]

    grad = np.zeros_like(x)
    chi = states[0] - prior
    Pchi = P @ chi
    J = np.dot(chi, Pchi)
    arrival_grad = Pchi + P.T @ chi
    for j in range(n - 1):
        wj = x[nx + nx * j: 2 * nx + nx * j]
        Wwj = W @ wj
        J += np.dot(wj, Wwj)
        grad[nx + nx * j: 2 * nx + nx * j] += Wwj + W.T @ wj

    lam = np.zeros((n, nx))
    for j in range(n):
        for i in range(ny):
            k = OUTPUT_INDEX[i]
            v = y[j, i] - states[j, k]
            if i < N_ANGLE_OUTPUTS:
                v = wrap_angle(v)
            a = alpha[i, j]
            J += _entry_cost(a, v, delta[i], gamma[i], c, ny)
            dv = delta[i] / ny * phi_grad_r_scalar(v, a, c)
            if v > vhi[i]:
                J += pen * (v - vhi[i]) ** 2
                dv += 2.0 * pen * (v - vhi[i])
            elif v < vlo[i]:
                J += pen * (v - vlo[i]) ** 2
                dv += 2.0 * pen * (v - vlo[i])
            lam[j, k] -= dv

    adj = lam[n - 1].copy()
    for j in range(n - 2, -1, -1):
        grad[nx + nx * j: 2 * nx + nx * j] += adj
        F = propagate_jacobian(states[j], u[j], hitch, ts)
        adj = lam[j] + F.T @ adj
    grad[:nx] += adj + arrival_grad
    return J, grad


def _objective_args(window: EstimationWindow, p: StageCostParams, alpha,
                    vehicle: VehicleParams):
    return (window.prior, window.prior_weight, p.W, window.measurements,
            window.controls, np.ascontiguousarray(alpha, dtype=float), p.delta,
            p.gamma, float(p.c), p.residual_lower, p.residual_upper,
            float(p.penalty_weight), float(vehicle.hitch_length),
            float(vehicle.sample_time))


def objective(window: EstimationWindow, p: StageCostParams, decision, alpha=None,
              vehicle: VehicleParams = VehicleParams()):
    """Compiled window objective and gradient at a decision vector."""
    alpha = window.alpha if alpha is None else alpha
    return _window_objective(np.asarray(decision, dtype=float),
                             *_objective_args(window, p, alpha, vehicle))


def _variable_scale(window: EstimationWindow, p: StageCostParams):
    n = window.size
    sx = 1.0 / np.sqrt(2.0 * np.abs(np.diag(window.prior_weight)) + 0.5 * n)
    sw = 1.0 / np.sqrt(2.0 * np.abs(np.diag(p.W)))
    return np.concatenate([sx, np.tile(sw, n - 1)])


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    ftol: float = 1e-13
    max_iter: int = 200
    memory: int = 8
    alpha_tol: float = 1e-10
    alpha_scan: int = 33


def _solution_from(window, p, decision, alpha, cost, vehicle, evaluations=0):
    n = window.size
    what = decision[N_STATE:].reshape(n - 1, N_STATE).copy()
    xhat = rollout(decision[:N_STATE], what, window.controls, vehicle)
    vhat = residuals(xhat, window.measurements)
    return EstimatorSolution(xhat, what, vhat, np.array(alpha, dtype=float),
                             float(cost), evaluations=evaluations)


def default_guess(window: EstimationWindow):
    """Start at the prior with zero disturbances."""
    return np.concatenate([window.prior, np.zeros(N_STATE * (window.size - 1))])


def solve_states(window: EstimationWindow, p: StageCostParams, alpha=None, guess=None,
                 vehicle: VehicleParams = VehicleParams(),
                 options: SolverOptions = SolverOptions()) -> EstimatorSolution:
    """State subproblem: minimise over the first state and disturbances at fixed alpha."""
    alpha = window.alpha if alpha is None else np.asarray(alpha, dtype=float)
    n = window.size
    x0 = default_guess(window) if guess is None else np.asarray(guess, dtype=float).copy()
    lower = np.concatenate([np.full(N_STATE, -np.inf), np.full(N_STATE * (n - 1), -p.w_bound)])
    upper = -lower
    upper[:N_STATE] = np.inf
    x0 = np.clip(x0, lower, upper)
    problem = BoxedProblem(_window_objective, x0, lower, upper,
                           _objective_args(window, p, alpha, vehicle),
                           _variable_scale(window, p))
    try:
        rep = minimize_boxed(problem, tol=options.tol, max_iter=options.max_iter,
                             memory=options.memory, ftol=options.ftol)
    except NonFiniteObjective as exc:
        raise SolverFailure(str(exc)) from exc
    return _solution_from(window, p, rep.x_star, alpha, rep.f_star, vehicle,
                          rep.evaluations)


@njit
def _alpha_pass(vhat, alpha, delta, gamma, c, lo, hi, tol, n_scan):
    ny, n = vhat.shape
    out = alpha.copy()
    for i in range(ny):
        for j in range(n):
            args = (vhat[i, j], delta[i], gamma[i], c, float(ny))
            a_new, f_new = _golden_jit(_entry_cost, args, lo, hi, tol, n_scan)
            # never accept a worse entry than the current one
            if f_new <= _entry_cost(alpha[i, j], *args):
                out[i, j] = a_new
    return out


def solve_alphas(vhat, p: StageCostParams, alpha_current=None,
                 options: SolverOptions = SolverOptions()):
    """Shape subproblem at fixed residuals.

    The objective separates across entries, so each ``alpha[i, j]`` minimises
    ``delta_i (phi(v_ij, a, c) + gamma_i (2 - a)^2) / ny`` on its own.
    """
    vhat = np.ascontiguousarray(vhat, dtype=float)
    if alpha_current is None:
        alpha_current = np.full(vhat.shape, ALPHA_MAX)
    return _alpha_pass(vhat, np.ascontiguousarray(alpha_current, dtype=float),
                       p.delta, p.gamma, float(p.c), ALPHA_MIN, ALPHA_MAX,
                       options.alpha_tol, options.alpha_scan)


def estimate_step(window: EstimationWindow, p: StageCostParams,
                  variant: EstimatorVariant = EstimatorVariant(), guess=None,
                  vehicle: VehicleParams = VehicleParams(),
                  options: SolverOptions = SolverOptions()) -> EstimatorSolution:
    """Solve one window with the chosen variant."""
    if variant.kind == "fixed":
        alpha = np.full(window.alpha.shape, variant.alpha0)
        sol = solve_states(window, p, alpha, guess, vehicle, options)
        sol.cost_trace = [sol.cost]
        sol.inner_iterations = 1
        sol.iterates = [sol.current.copy()]
        return sol

    if variant.kind == "grid":
        best, evals, iterates = None, 0, []
        for a0 in variant.grid:
            sol = solve_states(window, p, np.full(window.alpha.shape, a0), guess,
                               vehicle, options)
            evals += sol.evaluations
            iterates.append(sol.current.copy())
            if best is None or sol.cost < best.cost:
                best = sol
        best.cost_trace = [best.cost]
        best.inner_iterations = len(variant.grid)
        best.iterates = iterates
        best.evaluations = evals
        return best

    alpha = window.alpha.copy()
    decision = guess
    trace, iterates, evals = [], [], 0
    i = 0
    dJ = np.inf
    sol = None
    while dJ > variant.epsilon and i < variant.max_iterations:
        sol = solve_states(window, p, alpha, decision, vehicle, options)
        evals += sol.evaluations
        iterates.append(sol.current.copy())
        decision = sol.decision()
        alpha = solve_alphas(sol.vhat, p, alpha, options)
        j_alpha = float(objective(window, p, decision, alpha, vehicle)[0])
        trace += [sol.cost, j_alpha]
        dJ = sol.cost - j_alpha
        i += 1
    sol.alpha = alpha
    sol.cost = trace[-1]
    sol.cost_trace = trace
    sol.inner_iterations = i
    sol.iterates = iterates
    sol.evaluations = evals
    return sol


def recede(window: EstimationWindow, new_y, new_u, solution: EstimatorSolution,
           prior_weight=None):
    """Shift the window by one sample.

    A full window drops its oldest measurement, takes the solution's second
    state as the new prior and shifts alpha left; the new column starts at the
    quadratic end of the interval. A window that is still filling just grows.
    ``prior_weight``, if given, replaces the arrival weight once the window
    starts receding.
    """
    y = np.vstack([window.measurements, np.asarray(new_y, dtype=float)[None, :]])
    u = np.vstack([window.controls, np.asarray(new_u, dtype=float)[None, :]])
    fresh = np.full((N_OUTPUT, 1), ALPHA_MAX)
    alpha = np.hstack([solution.alpha, fresh])
    prior = window.prior
    weight = window.prior_weight
    if window.full:
        y, u, alpha = y[1:], u[1:], alpha[:, 1:]
        prior = solution.xhat[1].copy()
        if prior_weight is not None:
            weight = prior_weight
    return replace(window, measurements=y, controls=u, prior=prior, alpha=alpha,
                   prior_weight=weight)


def shifted_guess(window: EstimationWindow, solution: EstimatorSolution):
    """Warm start for the next window: previous solution shifted, new disturbance zero."""
    if window.full:
        start = solution.xhat[1]
        what = solution.what[1:]
    else:
        start = solution.xhat[0]
        what = solution.what
    return np.concatenate([start, what.ravel(), np.zeros(N_STATE)])


_WARM = False


def warm_up():
    """Compile the kernels on a two-sample window so later timings exclude JIT."""
    global _WARM
    if _WARM:
        return
    q = np.zeros(N_STATE)
    y = np.array([[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.1, 0.0]])
    w = EstimationWindow(y, np.array([[0.0, 1.0]]), q, np.full((N_OUTPUT, 2), ALPHA_MAX),
                         np.eye(N_STATE), horizon=1)
    estimate_step(w, StageCostParams(), EstimatorVariant("adaptive", max_iterations=2))
    _WARM = True


def _as_weight(w):
    w = np.asarray(w, dtype=float)
    return w * np.eye(N_STATE) if w.ndim == 0 else w


class MovingHorizonEstimator:
    """Runs one variant over a measurement stream.

    Call :meth:`update` with each new measurement and the control applied
    since the previous one (``None`` for the first sample).
    """

    def __init__(self, prior, params: StageCostParams = None,
                 variant: EstimatorVariant = EstimatorVariant(), horizon=10,
                 prior_weight=None, vehicle: VehicleParams = VehicleParams(),
                 options: SolverOptions = SolverOptions(), startup_weight=None):
        self.prior = np.asarray(prior, dtype=float)
        self.params = StageCostParams() if params is None else params
        self.variant = variant
        self.horizon = horizon
        self.prior_weight = _as_weight(10.0 if prior_weight is None else prior_weight)
        self.vehicle = vehicle
        self.options = options
        # weight on the initial guess while the window fills; None keeps prior_weight
        self.startup_weight = (self.prior_weight if startup_weight is None
                               else _as_weight(startup_weight))
        self.window = None
        self.solution = None
        self._guess = None

    def push(self, y, u_prev=None):
        """Add a measurement to the window; returns the warm start for :meth:`solve`."""
        if self.window is None:
            self.window = EstimationWindow.start(y, self.prior, self.horizon,
                                                 self.startup_weight)
            self._guess = None
        else:
            if u_prev is None:
                raise ValueError("a control input is required after the first sample")
            self._guess = shifted_guess(self.window, self.solution)
            self.window = recede(self.window, y, u_prev, self.solution,
                                 self.prior_weight)
        return self._guess

    def solve(self) -> EstimatorSolution:
        self.solution = estimate_step(self.window, self.params, self.variant,
                                      self._guess, self.vehicle, self.options)
        return self.solution

    def update(self, y, u_prev=None) -> EstimatorSolution:
        self.push(y, u_prev)
        return self.solve()
