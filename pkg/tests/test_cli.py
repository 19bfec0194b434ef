import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from mlmc_opt.cli import main
from mlmc_opt.config import ConfigError, build_config, load_config, parse_json
from mlmc_opt.output import ResultTable, emit_plot, render_svg

HERE = os.path.dirname(__file__)
CONFIGS = os.path.join(HERE, "..", "configs")


def test_minimal_config_defaults():
    cfg = build_config({"experiment": "moments"})
    assert cfg.replicates == 100_000 and cfg.mlmc["T_grid"][-1] == 512
    assert cfg.problem["x0"] == 2.0 and cfg.seed == 0


def test_invalid_schedule_lists_condition():
    with pytest.raises(ConfigError) as exc:
        build_config({"experiment": "optimize", "schedule": {"gamma_exp": 0.9, "eps_exp": 0.3}})
    assert any("2*gamma + eps_exp < 2" in p for p in exc.value.problems)
    cfg = build_config({"experiment": "optimize", "allow_invalid_schedule": True,
                        "schedule": {"gamma_exp": 0.9, "eps_exp": 0.3}})
    assert cfg.schedule.gamma_exp == 0.9


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_json('{"experiment": "iwae", "seed": 1, "seed": 2}')


def test_parse_error_has_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_json('{"experiment":\n  moments}')


def test_unknown_keys_full_path():
    with pytest.raises(ConfigError) as exc:
        build_config({"experiment": "optimize", "schedule": {"C_gama": 1.0}, "extra": 1})
    assert "unknown key schedule.C_gama" in exc.value.problems
    assert "unknown key extra" in exc.value.problems


def test_missing_experiment():
    with pytest.raises(ConfigError, match="missing required key experiment"):
        build_config({"seed": 3})


def test_shipped_configs_load():
    for name in sorted(os.listdir(CONFIGS)):
        cfg = load_config(os.path.join(CONFIGS, name))
        assert cfg.experiment in name


def test_table_roundtrip(tmp_path):
    t = ResultTable(["a", "b"], [(1, 0.1), (2, 1 / 3)], {"seed": 5, "config_hash": "abc"})
    p = tmp_path / "t.csv"
    t.write(p)
    back = ResultTable.read(p)
    assert back.rows == t.rows and back.meta == {"seed": "5", "config_hash": "abc"}
    text = p.read_text()
    assert text.splitlines()[1].startswith("# meta:") and "0.33333333333333331" in text
    with pytest.raises(ValueError):
        t.append((1, 2, 3))


def test_plot_errors(tmp_path):
    empty = ResultTable(["N", "grad_sq_norm"])
    p = tmp_path / "x.svg"
    with pytest.raises(ValueError):
        emit_plot(empty, "loglog_gradnorm", p)
    assert not p.exists()
    with pytest.raises(ValueError):
        emit_plot(ResultTable(["T"], [(1,)]), "bias_vs_T", p)


def test_loglog_plot_structure():
    t = ResultTable(["N", "grad_sq_norm"], [(100, 5.0), (1000, 1.5), (10000, 0.5)])
    svg = render_svg(t, "loglog_gradnorm")
    assert svg.count("<path") == 2 and svg.count("stroke-dasharray") == 1
    assert render_svg(t, "loglog_gradnorm") == svg


def _run(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def _small_optimize(tmp_path):
    cfg = {"experiment": "optimize", "seed": 3, "replicates": 3, "iterations": 300,
           "eval_N": [10, 100, 300], "problem": {"d": 3, "theta0": 2.0},
           "schedule": {"C_gamma": 1.0}, "optimizer": {"delta": 1.0}}
    p = tmp_path / "opt.json"
    p.write_text(json.dumps(cfg))
    return p


def test_cli_optimize_outputs(tmp_path):
    cfgp = _small_optimize(tmp_path)
    res = _run(["optimize", "--config", str(cfgp), "--out", str(tmp_path / "o")])
    assert res.exit_code == 0, res.output
    t = ResultTable.read(tmp_path / "o" / "optimize.csv")
    assert len(t.rows) == 302 and t.rows[-1][0] == -1
    assert sum(r[3] for r in t.rows[:-1]) == 3
    assert (tmp_path / "o" / "replicate_2.csv").exists()
    svg = (tmp_path / "o" / "loglog_gradnorm.svg").read_text()
    assert svg.count("<path") == 2


def test_cli_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"experiment": "optimize", "schedule": {"gamma_exp": 0.95, "eps_exp": 0.2}}')
    res = CliRunner().invoke(main, ["optimize", "--config", str(p)])
    assert res.exit_code != 0
    payload = json.loads(res.output.strip().splitlines()[-1])
    assert payload["status"] == "error" and payload["failures"]


def test_cli_wrong_subcommand(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"experiment": "moments"}')
    assert CliRunner().invoke(main, ["iwae", "--config", str(p)]).exit_code != 0


def test_cli_seed_override_changes_output(tmp_path):
    cfgp = _small_optimize(tmp_path)
    _run(["optimize", "--config", str(cfgp), "--out", str(tmp_path / "a"), "--seed", "1"])
    _run(["optimize", "--config", str(cfgp), "--out", str(tmp_path / "b"), "--seed", "2"])
    a = (tmp_path / "a" / "optimize.csv").read_text()
    b = (tmp_path / "b" / "optimize.csv").read_text()
    assert a != b and "seed=1" in a and "seed=2" in b


def test_threads_do_not_change_results(tmp_path, monkeypatch):
    cfgp = _small_optimize(tmp_path)
    _run(["optimize", "--config", str(cfgp), "--out", str(tmp_path / "a"), "--threads", "1"])
    monkeypatch.setenv("MLMC_OPT_THREADS", "3")
    _run(["optimize", "--config", str(cfgp), "--out", str(tmp_path / "b")])
    for f in ("optimize.csv", "gradnorm_vs_N.csv", "cost_axis.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_moments_and_report(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"experiment": "moments", "replicates": 2000,
                             "mlmc": {"T_grid": [2, 4, 8, 16]}}))
    assert _run(["moments", "--config", str(p), "--out", str(tmp_path / "m")]).exit_code == 0
    t = ResultTable.read(tmp_path / "m" / "moments.csv")
    assert [r[0] for r in t.rows] == [2, 4, 8, 16]
    r = tmp_path / "r.json"
    r.write_text(json.dumps({"experiment": "report", "input": str(tmp_path / "m" / "moments.csv")}))
    assert _run(["report", "--config", str(r), "--out", str(tmp_path / "r")]).exit_code == 0
    fit = ResultTable.read(tmp_path / "r" / "report.csv")
    assert fit.rows[0][0] == 4 and fit.rows[0][1] < 0
    assert (tmp_path / "r" / "bias_vs_T.svg").exists()


def test_cli_iwae(tmp_path):
    p = tmp_path / "i.json"
    p.write_text(json.dumps({"experiment": "iwae", "replicates": 5000, "mlmc": {"T_grid": [2, 8]}}))
    assert _run(["iwae", "--config", str(p), "--out", str(tmp_path / "i")]).exit_code == 0
    t = ResultTable.read(tmp_path / "i" / "iwae.csv")
    assert [r[0] for r in t.rows] == [1, 2, 8]
    assert t.rows[0][4] == 5
