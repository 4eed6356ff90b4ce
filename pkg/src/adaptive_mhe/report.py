"""Result files: per-trial CSVs, iteration curves, summary tables and SVG plots.

Layout under an output directory::

    <scenario>/<variant>/trials.csv           one row per trial, ascending index
    <scenario>/<variant>/timing.jsonl         wall-clock eta per trial
    <scenario>/<variant>/iteration_curve.csv  adaptive variants only
    <scenario>/iteration_curve.svg
    <scenario>/dump/trial_NNNN.csv            optional trajectory logs
    <scenario>/dump/trial_NNNN_<variant>.csv  estimates for those logs
    summary.md

Wall-clock times live in ``timing.jsonl`` rather than in a CSV, so every CSV
is a pure function of the configuration and seed. Floats are written with
``repr`` and read back bit-exactly.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .bench import TrialData, TrialMetrics, VariantSummary
from .vehicle import CONTROL_NAMES, OUTPUT_NAMES, STATE_NAMES, X0, X1, Y0, Y1


class ParseError(ValueError):
    """Malformed result or trajectory file; the message names the line."""


TRIAL_COLUMNS = ("trial", "failed", "psi", "delta", "evaluations",
                 "mean_inner_iterations", "measurement_hash")
CURVE_COLUMNS = ("iteration", "normalized_error")
FLAG_NAMES = tuple(f"outlier_{n}" for n in OUTPUT_NAMES)
TRAJECTORY_COLUMNS = (("k",) + STATE_NAMES + tuple(f"{n}_prev" for n in CONTROL_NAMES)
                      + OUTPUT_NAMES + FLAG_NAMES)
ESTIMATE_COLUMNS = ("k",) + tuple(f"{n}_hat" for n in STATE_NAMES)


def _f(x):
    return repr(float(x))


def write_rows(path, header, rows, comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _read_rows(path, header):
    """Rows as string lists plus ``#`` comment lines; checks header and widths."""
    text = Path(path).read_text(encoding="utf-8")
    comments, rows, seen_header = [], [], False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        if not line.strip():
            continue
        fields = next(csv.reader([line]))
        if not seen_header:
            if tuple(fields) != tuple(header):
                raise ParseError(f"{path}:{lineno}: unexpected header {fields}")
            seen_header = True
            continue
        if len(fields) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, "
                             f"got {len(fields)}")
        rows.append((lineno, fields))
    if not seen_header:
        raise ParseError(f"{path}: missing header line")
    return rows, comments


def _convert(path, lineno, conv, text):
    try:
        return conv(text)
    except ValueError as exc:
        raise ParseError(f"{path}:{lineno}: {exc}") from None


# --- trials -------------------------------------------------------------------

def write_trials(path, metrics):
    rows = [(m.trial, int(m.failed), _f(m.psi), _f(m.delta), m.evaluations,
             _f(m.mean_inner_iterations), m.measurement_hash)
            for m in sorted(metrics, key=lambda m: m.trial)]
    write_rows(path, TRIAL_COLUMNS, rows)


def read_trials(path, variant=""):
    rows, _ = _read_rows(path, TRIAL_COLUMNS)
    out = []
    for lineno, r in rows:
        c = lambda conv, t: _convert(path, lineno, conv, t)
        out.append(TrialMetrics(trial=c(int, r[0]), variant=variant,
                                failed=bool(c(int, r[1])), psi=c(float, r[2]),
                                delta=c(float, r[3]), evaluations=c(int, r[4]),
                                mean_inner_iterations=c(float, r[5]),
                                measurement_hash=r[6]))
    return out


def write_timing(path, metrics):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for m in sorted(metrics, key=lambda m: m.trial):
            fh.write(json.dumps({"trial": m.trial, "eta": m.eta}) + "\n")


def read_timing(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out[int(rec["trial"])] = float(rec["eta"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return out


def write_curve(path, curve):
    write_rows(path, CURVE_COLUMNS, [(i + 1, _f(v)) for i, v in enumerate(curve)])


def read_curve(path):
    rows, _ = _read_rows(path, CURVE_COLUMNS)
    return np.array([_convert(path, n, float, r[1]) for n, r in rows])


def emit_scenario(out_dir, scenario, by_variant, summaries):
    """Write per-variant files of one scenario and its iteration-curve plot."""
    root = Path(out_dir) / scenario
    for label, metrics in by_variant.items():
        vdir = root / label
        write_trials(vdir / "trials.csv", metrics)
        write_timing(vdir / "timing.jsonl", metrics)
        s = summaries.get(label)
        if s is not None and s.iteration_curve.size:
            write_curve(vdir / "iteration_curve.csv", s.iteration_curve)
    curves = {k: s.iteration_curve for k, s in summaries.items()
              if s is not None and s.iteration_curve.size}
    if curves:
        plot_iteration_curves(root / "iteration_curve.svg", curves, title=scenario)


def load_scenario(out_dir, scenario):
    """Read back ``variant -> list[TrialMetrics]`` (eta merged from timing files)."""
    root = Path(out_dir) / scenario
    if not root.is_dir():
        raise FileNotFoundError(f"no results for scenario {scenario!r} under {out_dir}")
    by_variant = {}
    for vdir in sorted(p for p in root.iterdir() if (p / "trials.csv").is_file()):
        metrics = read_trials(vdir / "trials.csv", vdir.name)
        if (vdir / "timing.jsonl").is_file():
            eta = read_timing(vdir / "timing.jsonl")
            for m in metrics:
                m.eta = eta.get(m.trial, float("nan"))
        curve_file = vdir / "iteration_curve.csv"
        if curve_file.is_file():
            # only the mean curve is stored; every trial carries it so aggregate() returns it
            curve = read_curve(curve_file)
            for m in metrics:
                m.iteration_curve = curve
        by_variant[vdir.name] = metrics
    return by_variant


# --- summary table --------------------------------------------------------------

def summary_markdown(tables, order=None):
    """``tables``: scenario -> variant -> VariantSummary. One row per variant."""
    scenarios = list(tables)
    variants = []
    for sc in scenarios:
        for v in tables[sc]:
            if v not in variants:
                variants.append(v)
    if order:
        variants = [v for v in order if v in variants] + [v for v in variants if v not in order]
    head = ["variant"]
    for sc in scenarios:
        head += [f"Ψ ({sc})", f"Δ ({sc})", f"η ({sc}) [s]", f"failed ({sc})"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for v in variants:
        row = [v]
        for sc in scenarios:
            s: VariantSummary = tables[sc].get(v)
            if s is None:
                row += ["", "", "", ""]
            else:
                row += [f"{s.psi:.4g}", f"{s.delta:.4g}", f"{s.eta:.4g}",
                        f"{s.failures}/{s.trials}"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def write_summary(path, tables, order=None):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(summary_markdown(tables, order), encoding="utf-8")


# --- trajectory logs ------------------------------------------------------------

def write_trajectory(path, data: TrialData):
    """Truth, controls, measurements and outlier flags; the prior sits in a comment."""
    rows = []
    for k in range(len(data.measurements)):
        u = data.controls[k - 1] if k else (float("nan"), float("nan"))
        rows.append([k] + [_f(v) for v in data.states[k]] + [_f(v) for v in u]
                    + [_f(v) for v in data.measurements[k]]
                    + [int(f) for f in data.flags[k]])
    prior = " ".join(_f(v) for v in data.prior)
    write_rows(path, TRAJECTORY_COLUMNS, rows,
                comments=(f"trial: {data.trial}", f"prior: {prior}"))


def read_trajectory(path) -> TrialData:
    """Inverse of :func:`write_trajectory`.

    Raises ``ParseError`` naming the line for malformed rows and ``ValueError``
    for an empty log or one without samples.
    """
    text = Path(path).read_text(encoding="utf-8")
    if not any(line.strip() and not line.startswith("#") for line in text.splitlines()):
        raise ValueError(f"{path}: trajectory log is empty")
    rows, comments = _read_rows(path, TRAJECTORY_COLUMNS)
    if not rows:
        raise ValueError(f"{path}: trajectory log has no samples")
    meta = {}
    for c in comments:
        key, _, val = c.partition(":")
        meta[key.strip()] = val.strip()
    if "prior" not in meta:
        raise ParseError(f"{path}: missing '# prior:' header line")
    try:
        prior = np.array([float(t) for t in meta["prior"].split()])
    except ValueError as exc:
        raise ParseError(f"{path}: bad prior line ({exc})") from None
    if prior.shape != (7,):
        raise ParseError(f"{path}: prior must have 7 values")
    T = len(rows)
    states, ys = np.empty((T, 7)), np.empty((T, 4))
    us, flags = np.empty((T, 2)), np.zeros((T, 4), dtype=bool)
    for i, (lineno, r) in enumerate(rows):
        vals = [_convert(path, lineno, float, t) for t in r[1:14]]
        if _convert(path, lineno, int, r[0]) != i:
            raise ParseError(f"{path}:{lineno}: expected step index {i}")
        states[i], us[i], ys[i] = vals[:7], vals[7:9], vals[9:13]
        flags[i] = [bool(_convert(path, lineno, int, t)) for t in r[14:18]]
    trial = int(meta.get("trial", 0))
    return TrialData(trial, states, us[1:].copy(), ys, flags, prior)


def write_estimates(path, estimates):
    rows = [[k] + [_f(v) for v in x] for k, x in enumerate(estimates)]
    write_rows(path, ESTIMATE_COLUMNS, rows)


def read_estimates(path):
    rows, _ = _read_rows(path, ESTIMATE_COLUMNS)
    return np.array([[_convert(path, n, float, t) for t in r[1:]] for n, r in rows])


# --- plots ----------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    # fixed ids and no timestamp keep SVG bytes reproducible
    plt.rcParams["svg.hashsalt"] = "adaptive-mhe"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt
    plt.close(fig)


def plot_iteration_curves(path, curves, title=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, curve in curves.items():
        ax.plot(np.arange(1, len(curve) + 1), curve, marker="o", label=label)
    ax.set_xlabel("inner iteration")
    ax.set_ylabel("normalized error")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_loss(path, r, curves, c=1.0):
    """``curves``: alpha -> (rho, phi) sampled on ``r``."""
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    for alpha, (rho_v, phi_v) in curves.items():
        a1.plot(r, rho_v, label=f"α = {alpha:g}")
        a2.plot(r, phi_v, label=f"α = {alpha:g}")
    a2.plot(r, r ** 2 / c ** 4, "k:", lw=0.8, label="r²/c⁴")
    a1.set_title("ρ(r, α, c)")
    a2.set_title("φ(r, α, c)")
    for ax in (a1, a2):
        ax.set_xlabel("r")
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_trajectory(path, data: TrialData, estimates, title=""):
    """Ground truth, measurements and estimated tractor/trailer paths."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data.states[:, X0], data.states[:, Y0], "k-", lw=1.5, label="tractor")
    ax.plot(data.states[:, X1], data.states[:, Y1], "k--", lw=1.0, label="trailer")
    ok = ~data.flags[:, 2]
    ax.plot(data.measurements[ok, 2], data.measurements[ok, 3], ".", ms=2, color="0.6",
            label="measured")
    ax.plot(data.measurements[~ok, 2], data.measurements[~ok, 3], "x", ms=4,
            color="tab:red", label="outliers")
    for label, est in estimates.items():
        ax.plot(est[:, X0], est[:, Y0], lw=1.0, label=label)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def dump_dir(out_dir, scenario):
    return Path(out_dir) / scenario / "dump"


def trajectory_file(out_dir, scenario, trial):
    return dump_dir(out_dir, scenario) / f"trial_{trial:04d}.csv"


def estimate_file(out_dir, scenario, trial, variant):
    return dump_dir(out_dir, scenario) / f"trial_{trial:04d}_{variant}.csv"


def list_dumps(out_dir, scenario):
    d = dump_dir(out_dir, scenario)
    if not d.is_dir():
        return []
    return sorted(p for p in d.iterdir()
                  if p.suffix == ".csv" and p.stem.count("_") == 1)

