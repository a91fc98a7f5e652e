import csv
import io
import json

import pytest

from psmdp.cli import main
from psmdp.report import FRONT_COLUMNS, SWEEP_COLUMNS


def _config(tmp_path, **extra):
    cfg = {
        "env": {"kind": "corridor"},
        "search": {"strides": [1, 2, 3, 4], "length": 4,
                   "filter": {"enabled": True, "margin": 0.0, "distributions": ["initial", "uniform"]}},
        "outputs": "out",
    }
    cfg.update(extra)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_front_unfiltered(tmp_path):
    cfg = _config(tmp_path)
    assert main(["front", "--config", str(cfg), "--no-filter"]) == 0
    out = tmp_path / "out"
    rows = _rows(out / "front.csv")
    assert tuple(rows[0]) == FRONT_COLUMNS
    hits = [r for r in rows if r["schedule"] == "22(3)"]
    assert hits and all(r["on_final_front"] == "true" for r in hits)
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["filter_enabled"] is False
    assert [s["sequences"] for s in rep["stages"]] == [4, 16, 64, 256]
    assert (out / "front.svg").read_text().startswith("<?xml")


def test_front_outputs_are_byte_stable(tmp_path):
    cfg = _config(tmp_path)
    main(["front", "--config", str(cfg), "--out", str(tmp_path / "a"), "--alphas", "0.5"])
    main(["front", "--config", str(cfg), "--out", str(tmp_path / "b"), "--alphas", "0.5"])
    for name in ("report.json", "front.csv", "front.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = _rows(tmp_path / "a" / "front.csv")
    assert {r["distribution_id"] for r in rows} == {"initial", "uniform"}
    assert any(r["policy_kind"] == "alpha" and r["alpha"] == "0.5" for r in rows)
    for r in rows:
        float(r["exec_cost"]), float(r["checkin_cost"])


def test_missing_config(tmp_path, capsys):
    assert main(["front", "--config", str(tmp_path / "nope.json")]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_bad_config_key(tmp_path):
    cfg = _config(tmp_path, colour="blue")
    assert main(["front", "--config", str(cfg)]) == 2


def test_rollout(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["rollout", "--config", str(cfg), "--schedule", "22(3)", "--n", "2000"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["n"] == 2000 and stats["schedule"] == "22(3)"
    assert abs(stats["mean_checkin"] - stats["analytic_checkin"]) < 5 * stats["stderr_checkin"]


@pytest.mark.parametrize("args,code", [
    (["--schedule", "22(3"], 2),
    (["--schedule", "22(3)", "--policy", "alpha=0.3"], 3),
    (["--schedule", "25(3)"], 3),
    (["--schedule", "22(3)", "--n", "0"], 2),
])
def test_rollout_errors(tmp_path, args, code):
    cfg = _config(tmp_path)
    assert main(["rollout", "--config", str(cfg), *args]) == code


def test_sweep_rows(tmp_path):
    cfg = _config(tmp_path, sweep={"margins": [0, 0.05, 0.1],
                                   "distributions": [["uniform"], ["initial"], ["initial", "uniform"]]})
    assert main(["sweep", "--config", str(cfg), "--length", "3"]) == 0
    rows = _rows(tmp_path / "out" / "sweep.csv")
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 10
    assert rows[0]["margin"] == "" and rows[0]["quality"] == "1"
    assert (tmp_path / "out" / "sweep.svg").exists()


def test_gen_env(tmp_path, capsys):
    assert main(["gen-env", "corridor", "--param", "cadences=[3,3]", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "corridor.txt").read_text()
    assert text == capsys.readouterr().out
    assert json.loads((tmp_path / "corridor.json").read_text())["width"] == 7


def test_gen_env_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen-env", "maze"])
    assert exc.value.code == 2
    assert main(["gen-env", "corridor", "--param", "height=1", "--out", str(tmp_path)]) == 2
    assert main(["gen-env", "corridor", "--param", "colour=1", "--out", str(tmp_path)]) == 2


def test_mdp_file_env(tmp_path):
    import numpy as np
    from oracles import random_mdp
    mdp = random_mdp(np.random.default_rng(0), n_states=4)
    (tmp_path / "m.json").write_text(json.dumps(mdp.to_json()))
    cfg = {"env": {"mdp": "m.json"}, "search": {"strides": [1, 2], "length": 3}, "plot": False}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert main(["front", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert not (tmp_path / "o" / "front.svg").exists()
    cfg["env"]["initial"] = [0.5, 0.5]
    path.write_text(json.dumps(cfg))
    assert main(["front", "--config", str(path)]) == 2


def test_grid_env_from_gen_env(tmp_path):
    assert main(["gen-env", "splitter", "--param", "width=7", "--param", "height=12",
                 "--param", "west_slots=[1,2]", "--out", str(tmp_path)]) == 0
    grid = json.loads((tmp_path / "splitter.json").read_text())
    cfg = {"env": {"grid": grid}, "search": {"strides": [2, 3], "length": 2}, "plot": False}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert main(["front", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
