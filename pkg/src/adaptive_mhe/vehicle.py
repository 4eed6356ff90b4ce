"""Discrete-time tractor with one on-axle passive trailer.

State vector layout (``N_STATE = 7``)::

    [beta1, theta0, theta1, x0, y0, x1, y1]

``beta1`` is the joint angle, ``theta0``/``theta1`` the tractor and trailer
headings (counterclockwise positive, kept continuous), ``(x0, y0)`` the
tractor and ``(x1, y1)`` the trailer position. Controls are
``[omega0, v0]``. The measured output is ``[beta1, theta0, x0, y0]``.

Headings are not wrapped inside the state so the heading of a vehicle driving
a U-turn stays continuous; the joint angle is wrapped to (-pi, pi].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

N_STATE = 7
N_CONTROL = 2
N_OUTPUT = 4

STATE_NAMES = ("beta1", "theta0", "theta1", "x0", "y0", "x1", "y1")
CONTROL_NAMES = ("omega0", "v0")
OUTPUT_NAMES = ("beta1_m", "theta0_m", "x0_m", "y0_m")

BETA1, THETA0, THETA1, X0, Y0, X1, Y1 = range(7)
OUTPUT_INDEX = np.array([BETA1, THETA0, X0, Y0])
ANGLE_STATES = np.array([BETA1, THETA0, THETA1])
ANGLE_OUTPUTS = np.array([0, 1])


@dataclass(frozen=True)
class VehicleParams:
    hitch_length: float = 1.5
    sample_time: float = 0.1
    v_max: float = 1.5
    omega_max: float = 1.0
    a_max: float = 0.5
    lookahead: float = 1.0

    def __post_init__(self):
        for name in ("hitch_length", "sample_time", "v_max", "omega_max",
                     "a_max", "lookahead"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@njit(cache=True)
def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.arctan2(np.sin(a), np.cos(a))
    if w == -np.pi:
        w = np.pi
    return w


def wrap(a):
    """Vectorised :func:`wrap_angle`."""
    w = np.arctan2(np.sin(a), np.cos(a))
    return np.where(w == -np.pi, np.pi, w)


@njit(cache=True)
def propagate(q, u, hitch_length, ts):
    """Noise-free kinematic map; the trailer is placed rigidly behind the hitch."""
    omega, v = u[0], u[1]
    out = np.empty(7)
    th0 = q[THETA0] + ts * omega
    x0 = q[X0] + ts * v * np.cos(q[THETA0])
    y0 = q[Y0] + ts * v * np.sin(q[THETA0])
    th1 = q[THETA1] + ts * v / hitch_length * np.sin(q[BETA1])
    out[BETA1] = wrap_angle(th0 - th1)
    out[THETA0] = th0
    out[THETA1] = th1
    out[X0] = x0
    out[Y0] = y0
    out[X1] = x0 - hitch_length * np.cos(th1)
    out[Y1] = y0 - hitch_length * np.sin(th1)
    return out


@njit(cache=True)
def propagate_jacobian(q, u, hitch_length, ts):
    """Jacobian of :func:`propagate` with respect to ``q``."""
    v = u[1]
    jac = np.zeros((7, 7))
    th1 = q[THETA1] + ts * v / hitch_length * np.sin(q[BETA1])
    s0, c0 = np.sin(q[THETA0]), np.cos(q[THETA0])
    # theta0+, theta1+, x0+, y0+
    jac[THETA0, THETA0] = 1.0
    jac[THETA1, THETA1] = 1.0
    jac[THETA1, BETA1] = ts * v / hitch_length * np.cos(q[BETA1])
    jac[X0, X0] = 1.0
    jac[X0, THETA0] = -ts * v * s0
    jac[Y0, Y0] = 1.0
    jac[Y0, THETA0] = ts * v * c0
    for j in range(7):
        jac[BETA1, j] = jac[THETA0, j] - jac[THETA1, j]
        jac[X1, j] = jac[X0, j] + hitch_length * np.sin(th1) * jac[THETA1, j]
        jac[Y1, j] = jac[Y0, j] - hitch_length * np.cos(th1) * jac[THETA1, j]
    return jac


def step(q, u, w=None, params: VehicleParams = VehicleParams()):
    """Advance one sample: ``q+ = G(q, u) + w``."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    nxt = propagate(q, u, params.hitch_length, params.sample_time)
    if w is not None:
        nxt = nxt + np.asarray(w, dtype=float)
    return nxt


def output(q):
    """Noise-free measurement ``h(q)``; works on a single state or a stack."""
    q = np.asarray(q, dtype=float)
    return q[..., OUTPUT_INDEX].copy()


def state_from_tractor(x0, y0, theta0, beta1=0.0, hitch_length=1.5):
    """Build a rigid-hitch configuration from the tractor pose and joint angle."""
    theta1 = theta0 - beta1
    return np.array([wrap_angle(beta1), theta0, theta1, x0, y0,
                     x0 - hitch_length * np.cos(theta1),
                     y0 - hitch_length * np.sin(theta1)])


def state_error(qhat, q):
    """Componentwise error with angle components wrapped."""
    err = np.asarray(qhat, dtype=float) - np.asarray(q, dtype=float)
    err[..., ANGLE_STATES] = wrap(err[..., ANGLE_STATES])
    return err


# --- reference path and path follower ---------------------------------------

@dataclass(frozen=True)
class PathSpec:
    """Two parallel rows joined by a semicircular headland turn."""
    row_length: float = 40.0
    row_spacing: float = 6.0
    speed: float = 1.0

    def __post_init__(self):
        if self.row_length <= 0 or self.row_spacing <= 0 or self.speed <= 0:
            raise ValueError("path lengths and speed must be positive")

    @property
    def turn_radius(self):
        return 0.5 * self.row_spacing


@dataclass
class Path:
    points: np.ndarray     # (n, 2)
    headings: np.ndarray   # (n,)
    arc: np.ndarray        # (n,) cumulative arc length
    speed: float

    def __len__(self):
        return len(self.points)


def _path_point(spec: PathSpec, s):
    L, R = spec.row_length, spec.turn_radius
    turn = np.pi * R
    if s <= L:
        return s, 0.0, 0.0
    if s <= L + turn:
        a = (s - L) / R
        return L + R * np.sin(a), R - R * np.cos(a), a
    d = s - L - turn
    return L - d, 2.0 * R, np.pi


def reference_path(spec: PathSpec = PathSpec(), sample_time=0.1):
    """Sample the path at ``speed * sample_time`` arc-length spacing."""
    total = 2.0 * spec.row_length + np.pi * spec.turn_radius
    ds = spec.speed * sample_time
    n = int(np.floor(total / ds + 1e-9)) + 1
    arc = np.arange(n) * ds
    pts = np.empty((n, 2))
    hdg = np.empty(n)
    for i, s in enumerate(arc):
        x, y, h = _path_point(spec, s)
        pts[i] = x, y
        hdg[i] = h
    return Path(pts, hdg, arc, spec.speed)


def nearest_index(path: Path, xy, hint=0, window=50):
    lo = max(0, hint - window)
    hi = min(len(path), hint + window + 1)
    d = np.sum((path.points[lo:hi] - xy) ** 2, axis=1)
    return lo + int(np.argmin(d))


def cross_track_error(path: Path, xy, hint=0):
    """Signed lateral offset of ``xy`` from the path (left positive)."""
    i = nearest_index(path, xy, hint)
    h = path.headings[i]
    d = np.asarray(xy) - path.points[i]
    return -np.sin(h) * d[0] + np.cos(h) * d[1], i


def follow(q, path: Path, k, params: VehicleParams = VehicleParams(), v_prev=0.0):
    """Pure-pursuit control for the tractor.

    Returns ``(u, i_near)`` where ``u = [omega0, v0]`` and ``i_near`` is the
    nearest path index (use it as the next ``k`` hint). Speed ramps toward the
    path speed under the acceleration limit and ramps down near the path end.
    """
    xy = q[[X0, Y0]]
    i = nearest_index(path, xy, k)
    remaining = path.arc[-1] - path.arc[i]
    dv = params.a_max * params.sample_time
    v_target = min(path.speed, params.v_max)
    # stop within the remaining distance
    v_target = min(v_target, np.sqrt(max(0.0, 2.0 * params.a_max * remaining)))
    v = float(np.clip(v_target, v_prev - dv, v_prev + dv))
    v = float(np.clip(v, 0.0, params.v_max))

    target = i
    while target < len(path) - 1 and path.arc[target] - path.arc[i] < params.lookahead:
        target += 1
    dx, dy = path.points[target] - xy
    ld = np.hypot(dx, dy)
    if ld < 1e-9:
        omega = 0.0
    else:
        bearing = wrap_angle(np.arctan2(dy, dx) - q[THETA0])
        omega = v * 2.0 * np.sin(bearing) / ld
    omega = float(np.clip(omega, -params.omega_max, params.omega_max))
    return np.array([omega, v]), i


def simulate(path: Path, n_steps, params: VehicleParams = VehicleParams(), q0=None):
    """Closed-loop noise-free run; returns states ``(n_steps+1, 7)`` and controls ``(n_steps, 2)``."""
    if q0 is None:
        x, y = path.points[0]
        q0 = state_from_tractor(x, y, path.headings[0], 0.0, params.hitch_length)
    qs = np.empty((n_steps + 1, N_STATE))
    us = np.empty((n_steps, N_CONTROL))
    qs[0] = q0
    k, v = 0, 0.0
    for t in range(n_steps):
        u, k = follow(qs[t], path, k, params, v)
        v = u[1]
        us[t] = u
        qs[t + 1] = step(qs[t], u, params=params)
    return qs, us
