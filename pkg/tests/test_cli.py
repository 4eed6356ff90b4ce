import json
from pathlib import Path

import numpy as np
import pytest

from adaptive_mhe import report
from adaptive_mhe.cli import build_parser, main, resolve_config
from adaptive_mhe.robust_loss import ALPHA_MAX, phi

SHORT = ["--set", "bench.duration=4"]


def csv_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(Path(root).rglob("*.csv"))}


@pytest.fixture(scope="module")
def bench_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    args = ["bench", "--trials", "1", "--seed", "7", "--dump", *SHORT]
    assert main(args + ["--out", str(out / "a")], environ={}) == 0
    assert main(args + ["--out", str(out / "b")], environ={}) == 0
    return out


def test_bench_is_byte_identical(bench_run):
    a, b = csv_bytes(bench_run / "a"), csv_bytes(bench_run / "b")
    assert a and a == b
    svg_a = sorted((bench_run / "a").rglob("*.svg"))
    assert svg_a and all(p.read_bytes() == (bench_run / "b" / p.relative_to(bench_run / "a"))
                         .read_bytes() for p in svg_a)


def test_bench_summary_rows(bench_run):
    md = (bench_run / "a" / "summary.md").read_text().splitlines()
    assert [row.split("|")[1].strip() for row in md[2:]] == \
        ["prop_m10", "prop_m3", "grid_m3", "fixed"]


def test_estimate_reproduces_bench_psi(bench_run, tmp_path):
    root = bench_run / "a"
    log = root / "uniform" / "dump" / "trial_0000.csv"
    target = tmp_path / "e.jsonl"
    assert main(["estimate", str(log), "--jsonl", str(target), *SHORT], environ={}) == 0
    records = [json.loads(l) for l in target.read_text().splitlines()]
    psi = {r["variant"]: r["psi"] for r in records if "psi" in r}
    for variant, value in psi.items():
        (m,) = report.read_trials(root / "uniform" / variant / "trials.csv")
        assert value == m.psi
    steps = [r for r in records if r.get("variant") == "fixed" and "k" in r]
    assert len(steps) == 40 and {"cost_trace", "alpha", "state"} <= set(steps[0])


def test_estimate_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["estimate", str(empty)], environ={}) == 1
    assert main(["estimate", str(tmp_path / "missing.csv")], environ={}) == 1


def test_estimate_truncated_row(bench_run, tmp_path, caplog):
    lines = (bench_run / "a" / "normal" / "dump" / "trial_0000.csv").read_text().splitlines()
    bad = tmp_path / "cut.csv"
    bad.write_text("\n".join(lines[:9] + ["8,0.1"]) + "\n")
    assert main(["estimate", str(bad)], environ={}) == 1
    assert "cut.csv:10" in caplog.text


def test_plot_regenerates(bench_run):
    root = bench_run / "a"
    assert main(["plot", "--out", str(root), *SHORT], environ={}) == 0
    assert (root / "uniform" / "dump" / "trial_0000.svg").is_file()


def test_plot_without_results(tmp_path):
    assert main(["plot", "--out", str(tmp_path)], environ={}) == 1


def test_loss_command(tmp_path):
    assert main(["loss", "--out", str(tmp_path)], environ={}) == 0
    for a in (1.1, 1.5, 1.9):
        rows = np.loadtxt(tmp_path / "loss" / f"loss_alpha{a:g}.csv", delimiter=",",
                          skiprows=1)
        assert rows.shape == (201, 3)
        centre = rows[np.argmin(np.abs(rows[:, 0]))]
        assert centre[0] == 0.0 and centre[1] == 0.0 and centre[2] == 0.0
    assert (tmp_path / "loss" / "loss.svg").is_file()
    assert main(["loss", "--out", str(tmp_path), "--alpha", "2.5"], environ={}) == 1


def test_quadratic_limit_overlay():
    r = np.linspace(-5, 5, 201)
    r = r[r != 0]
    assert np.max(np.abs(phi(r, ALPHA_MAX, 1.0) / r ** 2 - 1)) < 1e-3


def test_missing_config_exit_code(tmp_path):
    assert main(["bench", "--config", str(tmp_path / "none.ini")], environ={}) == 1


def test_unknown_config_key_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[bench]\ntrails = 1\n")
    assert main(["bench", "--config", str(cfg)], environ={}) == 1


def test_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[bench]\nout = from_file\ntrials = 5\nseed = 1\n")
    parse = build_parser().parse_args
    r = resolve_config(parse(["bench", "--config", str(cfg)]), environ={})
    assert (r["bench"]["out"], r["bench"]["trials"]) == ("from_file", 5)
    r = resolve_config(parse(["bench", "--config", str(cfg)]),
                       environ={"ADAPTIVE_MHE_OUT": "from_env"})
    assert r["bench"]["out"] == "from_env"
    r = resolve_config(parse(["bench", "--config", str(cfg), "--out", "from_flag",
                              "--trials", "2", "--seed", "9", "--scenario", "uniform",
                              "--variant", "fixed,prop_m3", "--full-scale", "--workers", "3"]),
                       environ={"ADAPTIVE_MHE_OUT": "from_env"})
    b = r["bench"]
    assert (b["out"], b["trials"], b["seed"], b["scenarios"], b["full_scale"], b["workers"]) == \
        ("from_flag", 2, 9, ("uniform",), True, 3)
    assert r.variant_names() == ["fixed", "prop_m3"]
    r = resolve_config(parse(["bench"]), environ={})
    assert r["bench"]["out"] == "results"


def test_every_flag_has_config_key():
    from adaptive_mhe.config import SCHEMA
    for key in ("trials", "seed", "scenarios", "out", "full_scale", "workers", "dump"):
        assert key in SCHEMA["bench"]
    assert "names" in SCHEMA["variants"]


def test_print_config_round_trips(capsys):
    from adaptive_mhe.config import default_config, parse_config
    assert main(["bench", "--print-config"], environ={}) == 0
    assert parse_config(capsys.readouterr().out).values == default_config().values


def test_failed_trial_exit_code(monkeypatch, tmp_path):
    from adaptive_mhe import bench
    from adaptive_mhe.mhe import SolverFailure

    def boom(self):
        raise SolverFailure("non-finite objective")

    monkeypatch.setattr(bench.MovingHorizonEstimator, "solve", boom)
    assert main(["bench", "--trials", "1", "--out", str(tmp_path), "--variant", "fixed",
                 *SHORT], environ={}) == 2
