"""Monte-Carlo comparison of estimator variants on the tractor-trailer task.

Each trial simulates the closed loop once, corrupts the measurements once, and
then runs every variant on that same measurement sequence (paired design).
Per-trial streams are keyed by ``(seed, trial)``, so results do not depend on
how trials are scheduled across workers.
"""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .disturbance import NoiseSpec, corrupt, make_rng
from .mhe import (EstimatorVariant, MovingHorizonEstimator, SolverFailure,
                  SolverOptions, StageCostParams, warm_up)
from .vehicle import (X0, Y0, PathSpec, VehicleParams, output, reference_path,
                      simulate, state_error, state_from_tractor)

PAPER_VARIANTS = (
    EstimatorVariant("adaptive", max_iterations=10, name="prop_m10"),
    EstimatorVariant("adaptive", max_iterations=3, name="prop_m3"),
    EstimatorVariant("grid", grid=(1.1, 1.5, 1.8), name="grid_m3"),
    EstimatorVariant("fixed", alpha0=1.5, name="fixed"),
)


@dataclass
class ScenarioSpec:
    name: str = "normal"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    path: PathSpec = field(default_factory=PathSpec)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    cost: StageCostParams = field(default_factory=StageCostParams)
    variants: tuple = PAPER_VARIANTS
    horizon: int = 10
    prior_weight: float = 10.0
    startup_weight: float = 0.01
    trials: int = 100
    duration: float = 60.0
    seed: int = 0
    initial_sigma: float = 3.0
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.initial_sigma < 0:
            raise ValueError("initial_sigma must be non-negative")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ValueError("variant labels must be unique")

    @property
    def n_samples(self):
        return int(round(self.duration / self.vehicle.sample_time))


@dataclass
class TrialMetrics:
    trial: int
    variant: str
    psi: float = float("nan")
    delta: float = float("nan")
    eta: float = float("nan")
    evaluations: int = 0
    mean_inner_iterations: float = float("nan")
    failed: bool = False
    iteration_curve: np.ndarray = field(default_factory=lambda: np.empty(0))
    measurement_hash: str = ""


@dataclass
class TrialData:
    """Raw logs of one trial shared by all variants."""
    trial: int
    states: np.ndarray        # (T, 7) true
    controls: np.ndarray      # (T-1, 2); controls[k-1] acts between samples k-1 and k
    measurements: np.ndarray  # (T, 4)
    flags: np.ndarray         # (T, 4) outlier ground truth
    prior: np.ndarray         # (7,) initial guess
    estimates: dict = field(default_factory=dict)   # variant -> (T, 7)
    alphas: dict = field(default_factory=dict)      # variant -> list of (4, n) final alpha


def measurement_digest(measurements, controls):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(measurements, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(controls, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def make_trial_data(spec: ScenarioSpec, trial):
    path = reference_path(spec.path, spec.vehicle.sample_time)
    T = spec.n_samples
    qs, us = simulate(path, T - 1, spec.vehicle)
    clean = output(qs)
    ys, flags = corrupt(clean, spec.noise, make_rng(spec.seed, trial, 0))
    init = make_rng(spec.seed, trial, 1).standard_normal(2) * spec.initial_sigma
    q0 = qs[0]
    prior = state_from_tractor(q0[X0] + init[0], q0[Y0] + init[1], q0[1], q0[0],
                               spec.vehicle.hitch_length)
    return TrialData(trial, qs, us, ys, flags, prior)


def run_estimator(spec: ScenarioSpec, variant: EstimatorVariant, measurements, controls,
                  prior, record_alpha=False, on_step=None):
    """Run one variant over a measurement stream.

    Returns ``(estimates, iterates, times, solutions_info)`` where ``iterates[k]``
    lists the current-state estimate after each inner state solve.
    ``on_step(k, solution)`` is called after each solve, outside the timed region.
    """
    warm_up()
    est = MovingHorizonEstimator(prior, spec.cost, variant, spec.horizon,
                                 spec.prior_weight, spec.vehicle, spec.options,
                                 spec.startup_weight)
    T = len(measurements)
    estimates = np.empty((T, 7))
    iterates, times, inner, alphas = [], np.empty(T), np.empty(T), []
    evals = 0
    for k in range(T):
        est.push(measurements[k], controls[k - 1] if k else None)
        t0 = time.perf_counter()
        sol = est.solve()
        times[k] = time.perf_counter() - t0
        estimates[k] = sol.current
        iterates.append(sol.iterates)
        inner[k] = sol.inner_iterations
        evals += sol.evaluations
        if record_alpha:
            alphas.append(sol.alpha.copy())
        if on_step is not None:
            on_step(k, sol)
    return estimates, iterates, times, dict(inner=inner, evaluations=evals, alphas=alphas)


def squared_errors(estimates, states):
    err = state_error(estimates, states)
    return np.sum(err ** 2, axis=1), err[:, X0] ** 2 + err[:, Y0] ** 2


def iteration_errors(iterates, states, depth):
    """Squared error after each inner iteration, padded with the last value."""
    out = np.empty((len(iterates), depth))
    for k, its in enumerate(iterates):
        e = [float(np.sum(state_error(x, states[k]) ** 2)) for x in its[:depth]]
        e += [e[-1]] * (depth - len(e))
        out[k] = e
    return out


def normalized_curve(iter_err):
    """Per-step error ratio to iteration 1, averaged over steps."""
    base = iter_err[:, 0]
    keep = base > 0
    if not np.any(keep):
        return np.ones(iter_err.shape[1])
    return np.mean(iter_err[keep] / base[keep, None], axis=0)


def run_trial(spec: ScenarioSpec, trial, keep_data=False, record_alpha=False):
    """Simulate one trial and evaluate every variant on it.

    Returns ``(metrics, data)`` with ``metrics`` a list aligned with
    ``spec.variants``; ``data`` is ``None`` unless ``keep_data``.
    """
    data = make_trial_data(spec, trial)
    metrics = []
    for variant in spec.variants:
        m = TrialMetrics(trial, variant.label)
        try:
            estimates, iterates, times, info = run_estimator(
                spec, variant, data.measurements, data.controls, data.prior,
                record_alpha)
        except SolverFailure:
            m.failed = True
            m.measurement_hash = measurement_digest(data.measurements, data.controls)
            metrics.append(m)
            continue
        # hashed after the run: the sequence this variant actually consumed
        m.measurement_hash = measurement_digest(data.measurements, data.controls)
        sq, pos = squared_errors(estimates, data.states)
        m.psi = float(np.mean(sq))
        m.delta = float(np.mean(pos))
        m.eta = float(np.mean(times))
        m.evaluations = int(info["evaluations"])
        m.mean_inner_iterations = float(np.mean(info["inner"]))
        if variant.kind == "adaptive":
            depth = variant.max_iterations
            m.iteration_curve = normalized_curve(
                iteration_errors(iterates, data.states, depth))
        metrics.append(m)
        if keep_data:
            data.estimates[variant.label] = estimates
            if record_alpha:
                data.alphas[variant.label] = info["alphas"]
    return metrics, (data if keep_data else None)


def _trial_worker(args):
    spec, trial, keep_data = args
    return run_trial(spec, trial, keep_data)


def run_scenario(spec: ScenarioSpec, workers=1, trials=None, progress=None, on_data=None):
    """All trials of a scenario, ordered by trial index.

    Returns a dict ``variant label -> list[TrialMetrics]``. ``on_data``, if
    given, receives each trial's :class:`TrialData` with the estimates attached.
    ``progress(trial)`` is called as trials complete.
    """
    indices = list(range(spec.trials)) if trials is None else list(trials)
    keep = on_data is not None
    jobs = [(spec, i, keep) for i in indices]
    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers)
        stream = pool.map(_trial_worker, jobs)
    else:
        pool = None
        stream = map(_trial_worker, jobs)
    by_variant = {v.label: [] for v in spec.variants}
    try:
        for trial_metrics, data in stream:
            for m in trial_metrics:
                by_variant[m.variant].append(m)
            if keep:
                on_data(data)
            if progress is not None:
                progress(trial_metrics[0].trial)
    finally:
        if pool is not None:
            pool.shutdown()
    return by_variant


@dataclass
class VariantSummary:
    variant: str
    trials: int
    failures: int
    psi: float
    delta: float
    eta: float
    evaluations: float
    mean_inner_iterations: float
    iteration_curve: np.ndarray


def aggregate(metrics):
    """Mean metrics over successful trials of one variant.

    The iteration curve is the trial mean of the per-trial curves; each
    per-trial curve is already 1.0 at the first iteration.
    """
    ok = [m for m in metrics if not m.failed]
    if not ok:
        raise ValueError("no successful trials to aggregate")
    curves = [m.iteration_curve for m in ok if m.iteration_curve.size]
    curve = np.mean(curves, axis=0) if curves else np.empty(0)
    return VariantSummary(
        variant=ok[0].variant, trials=len(metrics), failures=len(metrics) - len(ok),
        psi=float(np.mean([m.psi for m in ok])),
        delta=float(np.mean([m.delta for m in ok])),
        eta=float(np.mean([m.eta for m in ok])),
        evaluations=float(np.mean([m.evaluations for m in ok])),
        mean_inner_iterations=float(np.mean([m.mean_inner_iterations for m in ok])),
        iteration_curve=curve)


def check_paired(by_variant):
    """True when every variant of each trial saw the same measurement sequence."""
    per_trial = {}
    for metrics in by_variant.values():
        for m in metrics:
            per_trial.setdefault(m.trial, set()).add(m.measurement_hash)
    return all(len(h) == 1 for h in per_trial.values())
