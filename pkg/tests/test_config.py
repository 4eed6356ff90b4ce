import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_mhe.config import (ConfigError, cost_params, default_config, dump_config,
                                 load_config, parse_config, scenario_spec, trial_count, variant)


def test_default_round_trip():
    cfg = default_config()
    assert parse_config(dump_config(cfg)).values == cfg.values


def test_file_round_trip(tmp_path):
    text = "[bench]\ntrials = 7\nseed = 3\n[cost]\ngamma = 0.2, 0.2, 0.3, 0.3\n"
    (tmp_path / "c.ini").write_text(text)
    cfg = load_config(tmp_path / "c.ini")
    assert cfg["bench"]["trials"] == 7 and cfg["cost"]["gamma"] == (0.2, 0.2, 0.3, 0.3)
    again = parse_config(dump_config(cfg))
    assert again.values == cfg.values


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5000), st.integers(0, 2**31), st.floats(1e-6, 0.5))
def test_round_trip_property(trials, seed, eps):
    cfg = default_config()
    cfg.set("bench.trials", trials)
    cfg.set("bench.seed", seed)
    cfg.set("estimator.epsilon", eps)
    assert parse_config(dump_config(cfg)).values == cfg.values


def test_defaults_match_experiment_setup():
    cfg = default_config()
    spec = scenario_spec(cfg, "uniform")
    assert spec.horizon == 10 and spec.cost.c == 1.0 and spec.initial_sigma == 3.0
    assert spec.cost.W[0, 0] == 1e6 and spec.cost.w_bound == 0.01
    assert [v.label for v in spec.variants] == ["prop_m10", "prop_m3", "grid_m3", "fixed"]
    assert variant(cfg, "prop_m10").epsilon == 1e-3
    assert variant(cfg, "grid_m3").grid == (1.1, 1.5, 1.8)
    assert variant(cfg, "fixed").alpha0 == 1.5
    assert spec.noise.outlier_scale == 10.0 and spec.trials == 100


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="bench.trails"):
        parse_config("[bench]\ntrails = 3\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[benchmark]\ntrials = 3\n")


def test_invalid_values_name_the_key():
    with pytest.raises(ConfigError, match="bench.trials"):
        parse_config("[bench]\ntrials = many\n")
    with pytest.raises(ConfigError, match="cost"):
        parse_config("[cost]\nc = -1\n")
    with pytest.raises(ConfigError, match="cost.delta"):
        parse_config("[cost]\ndelta = 1, 1\n")
    with pytest.raises(ConfigError, match="variant.nope"):
        parse_config("[variants]\nnames = nope\n")
    with pytest.raises(ConfigError, match="noise.uniform"):
        parse_config("[noise.uniform]\noutlier_prob = 2\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/config.ini")


def test_custom_variant_section():
    cfg = parse_config("[variants]\nnames = mine\n[variant.mine]\nkind = grid\ngrid = 1.2, 1.7\n")
    assert variant(cfg, "mine").grid == (1.2, 1.7)
    assert parse_config(dump_config(cfg)).values == cfg.values


def test_full_scale_switch():
    cfg = default_config()
    assert trial_count(cfg) == 100
    cfg.set("bench.full_scale", "true")
    assert trial_count(cfg) == 1000


def test_cost_builder():
    p = cost_params(parse_config("[cost]\nw_weight = 5\n"))
    assert p.W[3, 3] == 5.0
