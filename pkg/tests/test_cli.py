"""Experiment runner: config parsing, report emission, exit codes, reruns."""

import json

import pytest
from click.testing import CliRunner

from kmslab.cli import (
    ConfigError,
    canonical_json,
    config_hash,
    emit_report,
    load_config,
    main,
)

GAUSSIAN_TOML = """
kind = "gaussian-diagnostics"
seed = 11

[sampler]
beta = 1.0
d = 1
n = 1
nsamples = 4000
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run_cli(args):
    return CliRunner().invoke(main, args)


def test_load_config_toml_and_json_agree(tmp_path):
    t = write(tmp_path, GAUSSIAN_TOML)
    j = tmp_path / "cfg.json"
    j.write_text(json.dumps(load_config(t)))
    assert load_config(j) == load_config(t)


def test_unknown_extension_rejected(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("kind: gaussian")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_hash_ignores_key_order():
    a = {"kind": "gaussian-diagnostics", "seed": 1, "sampler": {"beta": 1.0, "d": 1}}
    b = {"sampler": {"d": 1, "beta": 1.0}, "seed": 1, "kind": "gaussian-diagnostics"}
    assert canonical_json(a) == canonical_json(b)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "seed": 2})


def test_negative_beta_names_the_field(tmp_path):
    cfg = write(tmp_path, GAUSSIAN_TOML.replace("beta = 1.0", "beta = -1.0"))
    res = run_cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert "sampler.beta" in res.stderr


def test_unknown_kind_lists_choices(tmp_path):
    cfg = write(tmp_path, GAUSSIAN_TOML.replace('"gaussian-diagnostics"', '"nope"'))
    res = run_cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert "kind" in res.stderr and "gaussian-diagnostics" in res.stderr


def test_missing_seed_rejected(tmp_path):
    cfg = write(tmp_path, GAUSSIAN_TOML.replace("seed = 11\n", ""))
    res = run_cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert "seed" in res.stderr


def test_gaussian_run_emits_report(tmp_path):
    cfg = write(tmp_path, GAUSSIAN_TOML)
    out = tmp_path / "out"
    res = run_cli(["run", "--config", str(cfg), "--out", str(out)])
    assert res.exit_code == 0, res.output + str(res.exception)
    payload = json.loads((out / "report.json").read_text())
    assert payload["schema_version"] == 1
    assert payload["kind"] == "gaussian-diagnostics"
    assert payload["seed"] == 11
    assert payload["all_passed"] is True
    assert payload["config_hash"] == config_hash(payload["config"])
    assert len(payload["results"]) > 4
    csv_text = (out / "summary.csv").read_text()
    assert csv_text.splitlines()[0] == "name,value_re,value_im,stderr_re,stderr_im,passed"


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, GAUSSIAN_TOML)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(["run", "--config", str(cfg), "--out", str(out1)]).exit_code == 0
    assert run_cli(["run", "--config", str(cfg), "--out", str(out2)]).exit_code == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_worker_env_does_not_change_report(tmp_path, monkeypatch):
    cfg = write(tmp_path, GAUSSIAN_TOML)
    monkeypatch.setenv("KMSLAB_WORKERS", "1")
    out1 = tmp_path / "w1"
    run_cli(["run", "--config", str(cfg), "--out", str(out1)])
    monkeypatch.setenv("KMSLAB_WORKERS", "5")
    out2 = tmp_path / "w5"
    run_cli(["run", "--config", str(cfg), "--out", str(out2)])
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_seed_and_samples_overrides(tmp_path):
    cfg = write(tmp_path, GAUSSIAN_TOML)
    out = tmp_path / "o"
    res = run_cli(
        ["run", "--config", str(cfg), "--seed", "99", "--samples", "2000", "--out", str(out)]
    )
    assert res.exit_code == 0
    payload = json.loads((out / "report.json").read_text())
    assert payload["seed"] == 99
    assert payload["config"]["sampler"]["nsamples"] == 2000


def test_failing_gates_exit_one(tmp_path):
    text = GAUSSIAN_TOML + "\n[options]\nmultiplier = 0.05\n"
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    res = run_cli(["run", "--config", str(cfg), "--out", str(out)])
    assert res.exit_code == 1
    payload = json.loads((out / "report.json").read_text())
    assert payload["all_passed"] is False


def test_emit_report_refuses_empty_results(tmp_path):
    with pytest.raises(ConfigError):
        emit_report([], {"kind": "gaussian-diagnostics", "seed": 1}, tmp_path)


def test_density_ode_kind_runs(tmp_path):
    text = """
kind = "density-ode"
seed = 61

[sampler]
beta = 1.0
d = 1
n = 4
nsamples = 6

[interaction]
variant = "nls1d"
power = 4
"""
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    res = run_cli(["run", "--config", str(cfg), "--out", str(out)])
    assert res.exit_code == 0, res.output + str(res.exception)


def test_estimates_kind_requires_some_check(tmp_path):
    text = 'kind = "estimates"\nseed = 1\n'
    cfg = write(tmp_path, text)
    res = run_cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2


def test_estimates_conv_emits_side_table(tmp_path):
    text = """
kind = "estimates"
seed = 1

[[estimates.conv]]
d = 2
delta = 0.5
probes = [2, 4, 8]
"""
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    res = run_cli(["run", "--config", str(cfg), "--out", str(out)])
    assert res.exit_code == 0, res.output + str(res.exception)
    tables = list(out.glob("conv*.csv"))
    assert tables, "expected a per-check ratio table"


def test_interaction_beta_conflict_detected(tmp_path):
    text = """
kind = "kms-gibbs"
seed = 7

[sampler]
beta = 1.0
d = 1
n = 2
nsamples = 500

[interaction]
variant = "nls1d"
power = 4
beta = 2.0
"""
    cfg = write(tmp_path, text)
    res = run_cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert "conflicts" in res.stderr
