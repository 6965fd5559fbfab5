import json
from pathlib import Path

import pytest
import tomli

from sketchavg import moments
from sketchavg.experiments import (AGGREGATE_COLUMNS, ConfigError,
                                   config_from_dict, config_to_toml,
                                   load_config, run_experiment)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def ridge_cfg_dict():
    return {
        "trials": 2,
        "master_seed": 7,
        "problem": {"kind": "ridge", "n": 80, "d": 8, "identical_sv": True,
                    "sigma0": 1.0, "lambda1": 5.0},
        "cluster": {"q": 3, "m": 20, "kind": "gaussian"},
        "solver": {"algorithm": "ridge-average", "sigma": 1.0},
        "output": {"write_traces": True},
        "variants": [
            {"label": "zero-bias", "solver": {"correction": "zero-bias"}},
            {"label": "vanilla", "solver": {"correction": "vanilla"}},
        ],
    }


def ihs_cfg_dict():
    return {
        "trials": 3,
        "master_seed": 11,
        "problem": {"kind": "lstsq", "n": 100, "d": 5, "noise": 0.5},
        "cluster": {"q": 2, "m": 25},
        "solver": {"algorithm": "ihs", "T": 4, "eps": 1e-2},
    }


def test_round_trip_through_toml():
    cfg = config_from_dict(ridge_cfg_dict())
    text = config_to_toml(cfg)
    cfg2 = config_from_dict(tomli.loads(text), source="<roundtrip>")
    assert cfg2.problem == cfg.problem
    assert cfg2.cluster == cfg.cluster
    assert cfg2.solver == cfg.solver
    assert cfg2.output == cfg.output
    assert cfg2.trials == cfg.trials
    assert cfg2.master_seed == cfg.master_seed
    assert cfg2.variants == cfg.variants


def test_load_config_file(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(config_to_toml(config_from_dict(ihs_cfg_dict())))
    cfg = load_config(path)
    assert cfg.source == str(path)
    assert cfg.solver["algorithm"] == "ihs"
    bad = tmp_path / "bad.toml"
    bad.write_text("= nope\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(bad)


def test_validation_messages():
    with pytest.raises(ConfigError, match="missing required key 'problem'"):
        config_from_dict({"cluster": {}, "solver": {}})
    base = ridge_cfg_dict()

    data = ridge_cfg_dict()
    data["problem"]["rows"] = 5
    with pytest.raises(ConfigError, match=r"unknown key 'rows' in \[problem\]"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    del data["problem"]["kind"]
    with pytest.raises(ConfigError, match="missing required key 'kind'"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    del data["cluster"]["m"]
    with pytest.raises(ConfigError, match="needs 'm' or 'm_list'"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    del data["solver"]["algorithm"]
    with pytest.raises(ConfigError, match="missing required key 'algorithm'"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    data["trials"] = 0
    with pytest.raises(ConfigError, match="trials must be >= 1"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    data["extra"] = 1
    with pytest.raises(ConfigError, match="unknown key 'extra'"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    data["variants"][1]["label"] = "zero-bias"
    with pytest.raises(ConfigError, match="duplicate variant label"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    data["variants"][0]["label"] = "bad label"
    with pytest.raises(ConfigError, match="label must match"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    data["variants"][0]["solver"] = {"algorithm": "ihs", "reps": 3}
    with pytest.raises(ConfigError, match="unknown key 'reps'"):
        config_from_dict(data)

    data = ridge_cfg_dict()
    data["variants"] = "zero-bias"
    with pytest.raises(ConfigError, match="array of tables"):
        config_from_dict(data)

    assert config_from_dict(base).trials == 2


def test_run_experiment_outputs(tmp_path):
    cfg = config_from_dict(ridge_cfg_dict())
    out = tmp_path / "run"
    summary = run_experiment(cfg, str(out))
    assert summary["trials"] == 2
    assert sorted(summary["variants"]) == ["vanilla", "zero-bias"]

    agg = (out / "aggregate.csv").read_text().splitlines()
    assert agg[0] == ",".join(AGGREGATE_COLUMNS)
    labels = {line.split(",")[0] for line in agg[1:]}
    assert labels == {"zero-bias", "vanilla"}
    # q = 3 partial-average rows per variant.
    assert len(agg) == 1 + 2 * 3

    trace = (out / "traces" / "zero-bias" / "trial_0000.csv").read_text()
    assert trace.splitlines()[0] == \
        "t,cost_gap,errA_sq,rel_x_err,comm_scalars,wall_time_s"
    assert (out / "traces" / "vanilla" / "trial_0001.csv").exists()

    with open(out / "summary.json", encoding="utf-8") as fh:
        loaded = json.load(fh)
    assert loaded["variants"]["vanilla"]["solver"]["correction"] == "vanilla"
    # Both variants share the base problem table.
    assert loaded["variants"]["vanilla"]["problem"] == \
        loaded["variants"]["zero-bias"]["problem"]


def test_run_experiment_thread_determinism(tmp_path):
    cfg = config_from_dict(ridge_cfg_dict())
    out1, out2 = tmp_path / "serial", tmp_path / "threaded"
    run_experiment(cfg, str(out1), threads=1)
    run_experiment(cfg, str(out2), threads=3)
    assert (out1 / "aggregate.csv").read_bytes() == \
        (out2 / "aggregate.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == \
        (out2 / "summary.json").read_bytes()
    # Traces match except the wall clock column.
    for f1 in sorted((out1 / "traces").rglob("*.csv")):
        f2 = out2 / f1.relative_to(out1)
        rows1 = [ln.rsplit(",", 1)[0] for ln in f1.read_text().splitlines()]
        rows2 = [ln.rsplit(",", 1)[0] for ln in f2.read_text().splitlines()]
        assert rows1 == rows2


def test_run_experiment_overrides(tmp_path):
    cfg = config_from_dict(ihs_cfg_dict())
    summary = run_experiment(cfg, str(tmp_path / "o"), trials=1, seed=123)
    assert summary["trials"] == 1
    assert summary["master_seed"] == 123


def test_run_experiment_ihs_predictions(tmp_path):
    cfg = config_from_dict(ihs_cfg_dict())
    summary = run_experiment(cfg, str(tmp_path / "p"))
    var = summary["variants"]["base"]
    assert var["predicted"]["rate"] == pytest.approx(
        moments.ihs_rate(2, 25, 5), rel=1e-14)
    assert var["predicted"]["iterations"] == pytest.approx(
        moments.predict_iterations(1e-2, 2, 25, 5), rel=1e-12)
    assert "one_step_contraction" in var["observed"]
    assert "iterations" in var["observed"]


def test_run_experiment_svg_and_no_traces(tmp_path):
    data = ridge_cfg_dict()
    data["output"] = {"write_traces": False, "svg": ["rel_x_err"],
                      "svg_logy": True}
    cfg = config_from_dict(data)
    out = tmp_path / "s"
    run_experiment(cfg, str(out))
    assert not (out / "traces").exists()
    svg = (out / "rel_x_err.svg").read_text()
    assert svg.startswith("<svg")
    assert "polyline" in svg

    data["output"] = {"svg": ["quality"]}
    with pytest.raises(ConfigError, match="svg column"):
        run_experiment(config_from_dict(data), str(tmp_path / "bad"))


def test_run_experiment_validation(tmp_path):
    cfg = config_from_dict(ridge_cfg_dict())
    with pytest.raises(ConfigError, match="threads"):
        run_experiment(cfg, str(tmp_path / "x"), threads=0)
    with pytest.raises(ConfigError, match="trials"):
        run_experiment(cfg, str(tmp_path / "x"), trials=0)
    data = ihs_cfg_dict()
    del data["solver"]["T"]
    with pytest.raises(ConfigError, match="needs 'T'"):
        run_experiment(config_from_dict(data), str(tmp_path / "x"))
    data = ihs_cfg_dict()
    data["solver"] = {"algorithm": "sgd"}
    with pytest.raises(ConfigError, match="unknown solver algorithm"):
        run_experiment(config_from_dict(data), str(tmp_path / "x"))


def test_shipped_presets_parse():
    presets = sorted(CONFIG_DIR.glob("*.toml"))
    assert len(presets) == 6
    for path in presets:
        cfg = load_config(path)
        assert cfg.solver["algorithm"] in ("ihs", "ridge-average",
                                           "newton-sketch")
