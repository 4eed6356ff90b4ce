"""Adaptive robust loss and its derivative-squared counterpart.

``rho`` is the general adaptive loss in its canonical form and ``phi`` is
the square of its derivative with respect to the residual. ``phi`` is what
the estimator uses as a measurement stage cost: it is smooth on the whole
shape interval (1, 2), zero at zero and unbounded, so it behaves like L2
near ``alpha = 2`` and grows like ``|r|^(2 alpha - 2)`` for large residuals.

All power terms are evaluated in log space so residuals of a few hundred
scale units do not overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

ALPHA_EPS = 1e-6
ALPHA_MIN = 1.0 + ALPHA_EPS
ALPHA_MAX = 2.0 - ALPHA_EPS


def clamp_alpha(alpha):
    """Clip shape parameters into the admissible closed interval."""
    return np.clip(alpha, ALPHA_MIN, ALPHA_MAX)


@dataclass(frozen=True)
class LossParams:
    alpha: float = 1.5
    c: float = 1.0

    def __post_init__(self):
        if not ALPHA_MIN <= self.alpha <= ALPHA_MAX:
            raise ValueError(
                f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {self.alpha}")
        if not self.c > 0:
            raise ValueError(f"scale c must be positive, got {self.c}")


def _prep(r, alpha, c):
    r = np.asarray(r, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    c = np.asarray(c, dtype=float)
    x = (r / c) ** 2
    s = np.abs(alpha - 2.0)
    return r, alpha, c, x, s


def rho(r, alpha, c=1.0, form="canonical"):
    """General adaptive robust loss.

    ``form="canonical"`` gives ``|a-2|/a * ((1 + x/|a-2|)^(a/2) - 1)`` with
    ``x = (r/c)^2``, whose r-derivative squared equals :func:`phi`.
    ``form="printed"`` gives the variant without the ``-1`` offset and with
    exponent ``a/2 - 1``; it is bounded and decreasing in ``|r|`` and is kept
    only for comparison.
    """
    r, alpha, c, x, s = _prep(r, alpha, c)
    log_base = np.log1p(x / s)
    if form == "canonical":
        return s / alpha * np.expm1(0.5 * alpha * log_base)
    if form == "printed":
        return s / alpha * np.exp((0.5 * alpha - 1.0) * log_base)
    raise ValueError(f"unknown form {form!r}")


def rho_grad_r(r, alpha, c=1.0):
    """d rho / d r for the canonical form."""
    r, alpha, c, x, s = _prep(r, alpha, c)
    return r / c**2 * np.exp((0.5 * alpha - 1.0) * np.log1p(x / s))


def phi(r, alpha, c=1.0):
    """Squared r-derivative of the canonical loss."""
    r, alpha, c, x, s = _prep(r, alpha, c)
    return x / c**2 * np.exp((alpha - 2.0) * np.log1p(x / s))


def phi_grad_r(r, alpha, c=1.0):
    r, alpha, c, x, s = _prep(r, alpha, c)
    b = x / s
    return (2.0 * r / c**4 * np.exp((alpha - 3.0) * np.log1p(b))
            * (1.0 + (alpha - 1.0) * b))


def phi_grad_alpha(r, alpha, c=1.0):
    r, alpha, c, x, s = _prep(r, alpha, c)
    t = x / s
    # (alpha - 2) = -s for alpha < 2, so d/dalpha = -d/ds
    return phi(r, alpha, c) * (np.log1p(t) - t / (1.0 + t))


def special_case_check(alpha_target, c=1.0, r_max=5.0, n=501):
    """Max deviation of ``rho`` from its closed-form special case.

    ``alpha_target`` is ``2`` (evaluated at the upper clamp, compared with
    ``(r/c)^2 / 2``) or ``1`` (compared with the pseudo-Huber
    ``sqrt((r/c)^2 + 1) - 1``).
    """
    r = np.linspace(0.0, r_max, n)
    x = (r / c) ** 2
    if alpha_target == 2:
        ref = 0.5 * x
        got = rho(r, ALPHA_MAX, c)
    elif alpha_target == 1:
        ref = np.sqrt(x + 1.0) - 1.0
        got = rho(r, 1.0, c)
    else:
        raise ValueError("special cases are available for alpha in {1, 2}")
    return float(np.max(np.abs(got - ref)))


# Scalar kernels for use inside compiled code.

@njit(cache=True)
def phi_scalar(r, alpha, c):
    x = (r / c) ** 2
    return x / (c * c) * np.exp((alpha - 2.0) * np.log1p(x / (2.0 - alpha)))


@njit(cache=True)
def phi_grad_r_scalar(r, alpha, c):
    x = (r / c) ** 2
    b = x / (2.0 - alpha)
    return (2.0 * r / c**4 * np.exp((alpha - 3.0) * np.log1p(b))
            * (1.0 + (alpha - 1.0) * b))
