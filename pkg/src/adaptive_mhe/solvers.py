"""Box-constrained smooth minimisation and bounded 1-D minimisation.

``minimize_boxed`` is a projected limited-memory quasi-Newton method: the
secant direction is computed on the variables not held at a bound, then a
backtracking search runs along the projected path. Every accepted step
decreases the objective, and iterates stay feasible because they are always
projected onto the box.

The cores are plain Python written in the subset numba compiles. When the
objective is itself a numba ``@njit`` function, the compiled core is used
and a solve of a ~80 variable problem costs well under a millisecond. Any
other callable runs through the same code interpreted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numba.core.registry import CPUDispatcher

# Armijo constants
LS_SHRINK = 0.5
LS_SUFFICIENT = 1e-4
LS_INITIAL = 1.0
LS_MAX_BACKTRACK = 30

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_STALLED = 2
STATUS_NONFINITE = 3
STATUS_FTOL = 4

_MESSAGES = {
    STATUS_CONVERGED: "projected gradient below tolerance",
    STATUS_MAX_ITER: "iteration limit reached",
    STATUS_STALLED: "line search could not decrease the objective",
    STATUS_NONFINITE: "objective or gradient not finite",
    STATUS_FTOL: "relative decrease below ftol",
}


class NonFiniteObjective(FloatingPointError):
    """The objective or its gradient returned inf/nan at a feasible point."""


@dataclass
class BoxedProblem:
    """``min f(x)`` subject to ``lower <= x <= upper``.

    ``objective(x, *args)`` must return ``(f, grad)``. ``scale`` is an
    optional positive diagonal variable scaling; the solver works on
    ``x / scale``, so choose it close to ``1 / sqrt(diag(Hessian))``.
    """
    objective: object
    x0: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    args: tuple = ()
    scale: np.ndarray = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        n = self.x0.size
        self.lower = (np.full(n, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float) * np.ones(n))
        self.upper = (np.full(n, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float) * np.ones(n))
        self.scale = (np.ones(n) if self.scale is None
                      else np.asarray(self.scale, dtype=float) * np.ones(n))
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("x0 is outside the box")
        if np.any(self.scale <= 0):
            raise ValueError("scale must be positive")


@dataclass
class SolveReport:
    x_star: np.ndarray
    f_star: float
    iterations: int
    converged: bool
    gradient_norm: float
    status: int = STATUS_CONVERGED
    evaluations: int = 0
    history: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def message(self):
        return _MESSAGES[self.status]


def _projected_lbfgs(fun, args, x0, lower, upper, scale, tol, ftol,
                     max_iter, memory):
    n = x0.size
    zl = lower / scale
    zu = upper / scale
    z = np.minimum(np.maximum(x0 / scale, zl), zu)
    hist = np.empty(max_iter + 1)

    f, gx = fun(z * scale, *args)
    g = gx * scale
    nev = 1
    hist[0] = f
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return z * scale, f, 0, STATUS_NONFINITE, hist[:1], nev, np.inf

    S = np.zeros((memory, n))
    Y = np.zeros((memory, n))
    rho = np.zeros(memory)
    alpha = np.zeros(memory)
    n_mem = 0
    head = 0
    status = STATUS_MAX_ITER
    it = 0
    pgn = np.inf
    free = np.empty(n)

    while True:
        pg = z - np.minimum(np.maximum(z - g, zl), zu)
        pgn = np.max(np.abs(pg)) if n > 0 else 0.0
        if pgn <= tol:
            status = STATUS_CONVERGED
            break
        if it >= max_iter:
            status = STATUS_MAX_ITER
            break

        for i in range(n):
            held = (z[i] <= zl[i] and g[i] > 0.0) or (z[i] >= zu[i] and g[i] < 0.0)
            free[i] = 0.0 if held else 1.0

        # two-loop recursion on the free subspace
        q = g * free
        for j in range(n_mem):
            idx = (head - 1 - j) % memory
            alpha[idx] = rho[idx] * np.dot(S[idx] * free, q)
            q = q - alpha[idx] * Y[idx] * free
        if n_mem > 0:
            last = (head - 1) % memory
            gamma = np.dot(S[last], Y[last]) / np.dot(Y[last], Y[last])
        else:
            gamma = min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300))
        r = gamma * q
        for j in range(n_mem - 1, -1, -1):
            idx = (head - 1 - j) % memory
            beta = rho[idx] * np.dot(Y[idx] * free, r)
            r = r + (alpha[idx] - beta) * S[idx] * free
        d = -r * free
        if not np.dot(g, d) < 0.0:
            n_mem = 0
            d = -gamma * g * free if gamma > 0 else -g * free

        accepted = False
        zn = z
        fn = f
        gn = g
        for attempt in range(2):
            t = LS_INITIAL
            for _ in range(LS_MAX_BACKTRACK):
                zn = np.minimum(np.maximum(z + t * d, zl), zu)
                decrease = np.dot(g, zn - z)
                if decrease < 0.0:
                    fn, gxn = fun(zn * scale, *args)
                    nev += 1
                    gn = gxn * scale
                    if not (np.isfinite(fn) and np.all(np.isfinite(gn))):
                        return zn * scale, fn, it, STATUS_NONFINITE, hist[:it + 1], nev, pgn
                    if fn <= f + LS_SUFFICIENT * decrease and fn <= f:
                        accepted = True
                        break
                t *= LS_SHRINK
            if accepted or n_mem == 0:
                break
            # retry once along the scaled steepest descent
            n_mem = 0
            d = -min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300)) * g * free

        if not accepted:
            status = STATUS_STALLED
            break

        s = zn - z
        y = gn - g
        sy = np.dot(s, y)
        if sy > 1e-10 * np.sqrt(np.dot(s, s) * np.dot(y, y)) and sy > 0.0:
            S[head] = s
            Y[head] = y
            rho[head] = 1.0 / sy
            head = (head + 1) % memory
            n_mem = min(n_mem + 1, memory)
        f_old = f
        z, f, g = zn, fn, gn
        it += 1
        hist[it] = f
        if ftol > 0.0 and f_old - f <= ftol * max(abs(f), 1.0):
            status = STATUS_FTOL
            pg = z - np.minimum(np.maximum(z - g, zl), zu)
            pgn = np.max(np.abs(pg))
            break

    return z * scale, f, it, status, hist[:it + 1], nev, pgn


# not disk-cached: numba cannot pickle cache keys holding dispatcher-typed arguments
_projected_lbfgs_jit = njit(_projected_lbfgs)


def _is_compiled(fun):
    return isinstance(fun, CPUDispatcher)


def minimize_boxed(problem: BoxedProblem, tol=1e-8, max_iter=500, memory=8,
                   ftol=0.0) -> SolveReport:
    """Minimise a smooth function over a box.

    ``converged`` is true when the infinity norm of the projected gradient
    (in scaled variables) falls to ``tol``. A nonzero ``ftol`` additionally
    stops once an iteration's decrease is below ``ftol * max(|f|, 1)``.

    Raises :class:`NonFiniteObjective` if the objective or gradient is not
    finite at any evaluated (feasible) point.
    """
    core = _projected_lbfgs_jit if _is_compiled(problem.objective) else _projected_lbfgs
    x, f, it, status, hist, nev, pgn = core(
        problem.objective, tuple(problem.args), problem.x0, problem.lower,
        problem.upper, problem.scale, float(tol), float(ftol), int(max_iter),
        int(memory))
    if status == STATUS_NONFINITE:
        raise NonFiniteObjective(f"non-finite objective or gradient near x={x}")
    return SolveReport(
        x_star=x, f_star=float(f), iterations=int(it),
        converged=status in (STATUS_CONVERGED, STATUS_FTOL),
        gradient_norm=float(pgn), status=int(status), evaluations=int(nev),
        history=np.asarray(hist).copy())


# --- bounded scalar minimisation ---------------------------------------------

GOLDEN = 0.5 * (3.0 - np.sqrt(5.0))


def _golden(fun, args, lo, hi, tol, n_scan):
    """Coarse scan, golden-section refinement, then one parabolic step.

    Returns the best point evaluated, so the result is never worse than the
    scan (which includes both endpoints).
    """
    best_x = lo
    best_f = fun(lo, *args)
    i_best = 0
    h = (hi - lo) / (n_scan - 1)
    for i in range(1, n_scan):
        x = lo + i * h if i < n_scan - 1 else hi
        fx = fun(x, *args)
        if fx < best_f:
            best_x, best_f, i_best = x, fx, i
    for x in (lo + tol, hi - tol, 0.5 * (lo + hi)):
        fx = fun(x, *args)
        if fx < best_f:
            best_x, best_f = x, fx

    a = lo + max(i_best - 1, 0) * h
    b = min(lo + (i_best + 1) * h, hi)
    x1 = a + GOLDEN * (b - a)
    x2 = b - GOLDEN * (b - a)
    f1 = fun(x1, *args)
    f2 = fun(x2, *args)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = a + GOLDEN * (b - a)
            f1 = fun(x1, *args)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = b - GOLDEN * (b - a)
            f2 = fun(x2, *args)
    for x, fx in ((x1, f1), (x2, f2)):
        if fx < best_f:
            best_x, best_f = x, fx

    # parabola through the final golden triple
    if f1 <= f2:
        p0, pm, p1 = a, x1, x2
    else:
        p0, pm, p1 = x1, x2, b
    fp0 = fun(p0, *args)
    fpm = fun(pm, *args)
    fp1 = fun(p1, *args)
    den = (pm - p0) * (fpm - fp1) - (pm - p1) * (fpm - fp0)
    if den != 0.0:
        xv = pm - 0.5 * ((pm - p0) ** 2 * (fpm - fp1) - (pm - p1) ** 2 * (fpm - fp0)) / den
        if lo <= xv <= hi:
            fv = fun(xv, *args)
            if fv < best_f:
                best_x, best_f = xv, fv
    return best_x, best_f


_golden_jit = njit(_golden)


def minimize_scalar(f, lo, hi, tol=1e-10, args=(), n_scan=33):
    """Minimise ``f(x, *args)`` over ``[lo, hi]``; returns ``(x_star, f_star)``.

    A coarse scan of ``n_scan`` points picks the bracket, so a function with
    several local minima still lands in the basin of the best scanned point.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if n_scan < 3:
        raise ValueError("n_scan must be at least 3")
    core = _golden_jit if _is_compiled(f) else _golden
    x, fx = core(f, tuple(args), float(lo), float(hi), float(tol), int(n_scan))
    return float(x), float(fx)
