import csv
import io
import json
import math

import numpy as np
import pytest

from psi_pareto import harness
from psi_pareto.harness import (CSV_COLUMNS, ConfigError, ExperimentConfig, enumerate_trials, gen_instance_file,
                                main, parallel_map, resolve_instance, run_experiment, splitmix64, trial_seed)
from psi_pareto.instance import InstanceError, instance_from_dict, load_instance


def _small_config(**overrides):
    doc = dict(instance="rotation", algos=["psips", "uniform"], deltas=[0.1], runs=2, seed=7, max_rounds=20000)
    doc.update(overrides)
    return ExperimentConfig.from_mapping(doc)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_splitmix_reference_outputs():
    # first two outputs of the reference generator seeded with zero
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert trial_seed(5, 0) == 5 ^ 0xE220A8397B1DCDAF


def test_trial_seeds_distinct():
    cfg = _small_config(runs=50, algos=["psips", "uniform", "ape-style"], deltas=[0.1, 0.01])
    trials = enumerate_trials(cfg)
    assert [t.index for t in trials] == list(range(300))
    assert len({t.seed for t in trials}) == 300


def test_csv_row_count_and_header():
    text, summary = run_experiment(_small_config(), workers=1)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 5
    assert sum(g["runs"] for g in summary["groups"]) == 4


def test_rerun_byte_identical(tmp_path):
    a, _ = run_experiment(_small_config(out=str(tmp_path / "a.csv")), workers=1)
    b, _ = run_experiment(_small_config(out=str(tmp_path / "b.csv")), workers=1)
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_serial_matches_parallel():
    cfg = _small_config(runs=3, algos=["psips", "ape-style"])
    serial, _ = run_experiment(cfg, workers=1)
    parallel, _ = run_experiment(cfg, workers=2)
    key = lambda r: int(r["trial_index"])
    assert sorted(_rows(serial), key=key) == sorted(_rows(parallel), key=key)


def test_parallel_map_preserves_order():
    assert parallel_map(abs, list(range(-20, 0)), workers=2) == list(range(20, 0, -1))


def test_summary_error_rate_recomputed():
    cfg = _small_config(instance="bai:gap=0.2", algos=["uniform", "ape-style"], deltas=[0.4, 0.2], runs=15)
    text, summary = run_experiment(cfg, workers=1)
    rows = _rows(text)
    for group in summary["groups"]:
        mine = [r for r in rows if r["algo"] == group["algo"] and float(r["delta"]) == group["delta"]]
        assert group["runs"] == len(mine)
        assert group["error_rate"] == sum(r["correct"] == "false" for r in mine) / len(mine)
        assert 0.0 <= group["error_rate"] <= 1.0
        assert group["tau_mean"] == pytest.approx(np.mean([int(r["tau"]) for r in mine]))


def test_float_fields_round_trip():
    text, _ = run_experiment(_small_config(timing=True), workers=1)
    for row in _rows(text):
        for key in ("delta", "avg_m_t", "avg_m_t_delta", "wall_ms"):
            value = float(row[key])
            if not math.isnan(value):
                assert format(value, ".17g") == row[key]
    for value in (0.1, 1 / 3, 2.0 ** -40, 123456.789e-300):
        assert float(format(value, ".17g")) == value


def test_timing_column_blank_by_default():
    text, _ = run_experiment(_small_config(), workers=1)
    assert all(r["wall_ms"] == "" for r in _rows(text))


def test_config_validation():
    with pytest.raises(ConfigError):
        _small_config(runs=0).validate()
    with pytest.raises(ConfigError):
        _small_config(deltas=[1.5]).validate()
    with pytest.raises(ConfigError):
        _small_config(algos=["thompson"]).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"bogus": 1})


def test_config_digest_ignores_output():
    assert _small_config(out="x.csv").digest() == _small_config(out="y.csv").digest()
    assert _small_config(seed=1).digest() != _small_config(seed=2).digest()


def test_resolve_builtin_sources():
    assert resolve_instance("covboost").K == 20
    rot = resolve_instance("rotation:K=4,rho=-0.5")
    assert rot.K == 4 and rot.sigma[0, 1] == -0.5
    assert resolve_instance("bai:gap=0.5").theta[1, 0] == 0.5
    a = resolve_instance("random-gaussian:K=4,d=3", seed=1, run_index=2)
    b = resolve_instance("random-gaussian:K=4,d=3", seed=1, run_index=2)
    c = resolve_instance("random-gaussian:K=4,d=3", seed=1, run_index=3)
    assert np.array_equal(a.theta, b.theta) and not np.array_equal(a.theta, c.theta)
    with pytest.raises(ConfigError):
        resolve_instance("nowhere")


def test_rotation_file_matches_closed_form(tmp_path):
    path = gen_instance_file("rotation", 0, tmp_path / "rot.json", K=5)
    means = load_instance(path).answer_means
    for i in range(5):
        angle = i * math.pi / 5
        expected = (math.cos(angle) - math.sin(angle), math.sin(angle) + math.cos(angle))
        assert np.allclose(means[i], expected, atol=1e-12, rtol=0)


@pytest.mark.parametrize("spec", ["rotation", "gaussian-cube", "bernoulli-box", "covboost", "bai"])
def test_instance_file_round_trip(tmp_path, spec):
    first = gen_instance_file(spec, 3, tmp_path / "a.json", K=4, d=2)
    inst = load_instance(first)
    from psi_pareto.instance import save_instance
    save_instance(inst, tmp_path / "b.json")
    assert first.read_bytes() == (tmp_path / "b.json").read_bytes()


def test_bernoulli_mean_outside_unit_interval(tmp_path):
    doc = {"K": 2, "d": 1, "h": 2, "A": [[1, 0], [0, 1]], "theta": [[0.5], [1.5]], "sigma": [[0.25]],
           "noise": "bernoulli"}
    with pytest.raises(InstanceError):
        instance_from_dict(doc)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["run", "--instance", str(path), "--runs", "1"]) == 1


def test_cli_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res.csv"
    code = main(["run", "--instance", "rotation", "--algo", "psips,uniform", "--runs", "2", "--delta", "0.1",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    assert len(out.read_text().splitlines()) == 5
    summary = json.loads(out.with_suffix(".summary.json").read_text())
    assert {g["algo"] for g in summary["groups"]} == {"psips", "uniform"}


def test_cli_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": "bai", "algo": "uniform", "delta": [0.2], "runs": 5, "seed": 1}))
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), "--runs", "3", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 4


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert main(["run", "--runs", "0"]) == 1
    assert main(["run", "--algo", "nope"]) == 1
    assert main(["run", "--instance", "missing.json"]) == 1
    assert main(["frobnicate"]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--instance", "bai", "--runs", "1", "--out", str(blocker / "sub" / "r.csv")]) == 2
    monkeypatch.setattr(harness, "reproduce", lambda *a, **k: {"threshold": False})
    assert main(["reproduce", "covboost", "--check", "--out-dir", str(tmp_path)]) == 3
    assert main(["reproduce", "covboost", "--out-dir", str(tmp_path)]) == 0


def test_psi_threads_bounds_pool(monkeypatch):
    monkeypatch.setenv("PSI_THREADS", "3")
    assert harness.worker_count() == 3
    monkeypatch.setenv("PSI_THREADS", "zero")
    with pytest.raises(ConfigError):
        harness.worker_count()


def test_reproduce_rejections_rows(tmp_path):
    checks = harness.reproduce("rejections", tmp_path, scale=0.005, seed=1, workers=1, horizon=200)
    rows = list(csv.reader(open(tmp_path / "rejections.csv")))
    assert rows[0] == ["t", "mean_m_t", "mean_m_t_delta"]
    assert len(rows) == 201
    assert checks["one row per round"]
    assert json.loads((tmp_path / "rejections_checks.json").read_text()) == checks


def test_reproduce_noc_without_features(tmp_path):
    with pytest.warns(RuntimeWarning):
        harness.reproduce("noc", tmp_path, scale=0.01, seed=1, workers=1)
    assert (tmp_path / "noc_theta.csv").exists()


def test_reproduce_rejects_bad_scale(tmp_path):
    with pytest.raises(ConfigError):
        harness.reproduce("covboost", tmp_path, scale=0.0)
