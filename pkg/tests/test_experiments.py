import csv
import json

import numpy as np
import pytest

from starnoma.cli import main
from starnoma.experiments import (
    CSV_COLUMNS,
    SweepSpec,
    TrialResult,
    aggregate,
    emit_amplitude_report,
    read_jsonl,
    replay,
    run_trial,
    sweep,
    write_jsonl,
)
from starnoma.scenario import ScenarioConfig

TINY = ScenarioConfig(
    cluster_centers=((0.0, 35.0, 0.0), (0.0, 25.0, 0.0)),
    users_per_cluster=(2, 1),
    num_elements=4,
    num_antennas=2,
)


@pytest.fixture(scope="module")
def tiny_trial():
    return run_trial(TINY, "proposed", 4)


def test_trial_checks_and_replay(tiny_trial):
    r = tiny_trial
    assert r.error == "" and r.check_failures == []
    assert r.sum_rate == pytest.approx(sum(r.rates), abs=1e-9)
    assert np.allclose(replay(r), r.rates, atol=1e-9)
    assert np.allclose(np.add(r.beta_t, r.beta_r), 1.0, atol=1e-8)


def test_trial_is_deterministic(tiny_trial):
    again = run_trial(TINY, "proposed", 4)
    a, b = json.loads(tiny_trial.to_json()), json.loads(again.to_json())
    a.pop("wall_time")
    b.pop("wall_time")
    assert a == b


def test_oma_trial_replays():
    r = run_trial(TINY, "ris_oma", 1)
    assert r.check_failures == []
    assert np.allclose(replay(r), r.rates, atol=1e-9)


def test_jsonl_round_trip(tmp_path, tiny_trial):
    path = tmp_path / "t.jsonl"
    write_jsonl([tiny_trial], path)
    back = read_jsonl(path)
    assert back[0] == tiny_trial


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("K", [1])
    with pytest.raises(ValueError):
        SweepSpec("M", [])
    with pytest.raises(ValueError):
        SweepSpec("M", [4], trials=0)
    with pytest.raises(ValueError):
        SweepSpec("M", [4], baselines=["nope"])


def test_empty_baseline_set_gives_empty_table():
    rows, results = sweep(SweepSpec("M", [4], trials=1, baselines=[]), TINY)
    assert rows == [] and results == []


def test_sweep_rows():
    rows, results = sweep(SweepSpec("P_max", [20, 30], trials=2, baselines=["mrt"]), TINY)
    assert [r["value"] for r in rows] == [20, 30]
    assert all(r["n"] == 2 for r in rows)
    assert [r.config["p_max_dbm"] for r in results] == [20.0, 20.0, 30.0, 30.0]


def test_aggregate():
    def fake(x):
        return TrialResult({}, 0, "proposed", x, [], [], [], {}, 0.0, True)

    mean, se, n = aggregate([fake(1.0), fake(3.0), fake(float("nan"))])
    assert (mean, n) == (2.0, 2) and se == pytest.approx(1.0)
    assert aggregate([])[2] == 0


def test_amplitude_report(tiny_trial):
    rep = emit_amplitude_report([tiny_trial])
    assert len(rep["rows"]) == 4
    for row in rep["rows"]:
        assert row["beta_t"] + row["beta_r"] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        emit_amplitude_report([])


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY.to_dict()))
    return path


def test_cli_run(tmp_path, tiny_config_file, capsys):
    out = tmp_path / "run"
    code = main(["run", "--config", str(tiny_config_file), "--seed", "2", "--out", str(out), "--baselines", "proposed,mrt"])
    assert code == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.strip().splitlines()]
    assert [x["baseline"] for x in lines] == ["proposed", "mrt"]
    assert len(read_jsonl(out / "trials.jsonl")) == 2


def test_cli_sweep_is_reproducible(tmp_path, tiny_config_file):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        args = ["sweep", "--config", str(tiny_config_file), "--param", "M", "--values", "2,4", "--trials", "2"]
        assert main(args + ["--out", str(out), "--baselines", "zf"]) == 0
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]
    with open(tmp_path / "a" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == CSV_COLUMNS and len(rows) == 2


def test_cli_bench(tmp_path, tiny_config_file, capsys):
    out = tmp_path / "bench"
    code = main(["bench", "--config", str(tiny_config_file), "--trials", "1", "--out", str(out), "--baselines", "proposed,ris_oma"])
    assert code == 0
    assert (out / "bench.csv").exists() and (out / "amplitudes.csv").exists()
    assert "mean beta_t" in capsys.readouterr().out


def test_cli_rejects_unknown_baseline(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--out", str(tmp_path), "--baselines", "bogus"])
