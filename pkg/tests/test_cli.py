import csv
import json
import math

import pytest

from wavelab.cli import main
from wavelab.config import SCENARIOS, RunConfig
from wavelab.errors import ConfigInvalid


def _cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("scenario", sorted(SCENARIOS))
def test_config_round_trip(scenario):
    cfg = RunConfig.default(scenario, seed=7)
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg and again.to_json() == cfg.to_json()


@pytest.mark.parametrize("data,path", [
    ({"scenario": "peakon_simulate", "peakon": {"state": {"p": [1.0], "q": ["a"]}}},
     "peakon.state.q[0]"),
    ({"scenario": "peakon_simulate", "peakon": {"bogus": 1}}, "peakon.bogus"),
    ({"scenario": "peakon_simulate", "metric": {}}, "peakon"),
    ({"scenario": "nope"}, "scenario"),
    ({"scenario": "broadwell_run", "broadwell": {"frame": "lab"}}, "broadwell.frame"),
])
def test_config_errors_carry_paths(data, path):
    with pytest.raises(ConfigInvalid) as exc:
        RunConfig.from_dict(data)
    assert exc.value.path == path


def test_peakon_run_single(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["peakon", "run", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["drift"] < 1e-9 and summary["collisions"] == 0
    lines = _rows(out / "worldlines.csv")
    # straight world-line of slope p = 1
    assert all(abs(float(r["q"]) - float(r["t"])) < 1e-9 for r in lines)
    assert "drift=" in capsys.readouterr().out


def test_peakon_collide_worldlines(tmp_path):
    out = tmp_path / "c"
    assert main(["peakon", "collide", "--out", str(out), "--quiet"]) == 0
    ev = json.loads((out / "events.json").read_text())
    assert len(ev) == 1
    tau = ev[0]["t"]
    wl = _rows(out / "worldlines.csv")
    before = [float(r["q"]) for r in wl if abs(float(r["t"]) - tau) > 0.2]
    assert before  # both world-lines recorded
    series = _rows(out / "series.csv")
    es = [float(r["E"]) for r in series]
    assert max(es) - min(es) < 1e-7 * es[0]


def test_empty_run_writes_headers(tmp_path):
    cfg = _cfg(tmp_path, {"scenario": "peakon_simulate", "peakon": {"state": {"p": [], "q": []}}})
    out = tmp_path / "e"
    assert main(["peakon", "run", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert (out / "profiles.csv").read_text() == "t,x,u\n"
    assert (out / "worldlines.csv").read_text() == "t,index,p,q\n"


def test_metric_distance_same_state(tmp_path):
    u = tmp_path / "u.json"
    u.write_text(json.dumps({"p": [1.0, -0.5], "q": [-1.0, 1.0]}))
    out = tmp_path / "d.json"
    assert main(["metric", "distance", "--u", str(u), "--v", str(u), "--out", str(out),
                 "--quiet"]) == 0
    res = json.loads(out.read_text())
    assert res["J"] < 1e-9
    assert set(res) >= {"J", "plan", "iterations", "phi_violations"}


def test_broadwell_rescaled_uniform(tmp_path):
    cfg = _cfg(tmp_path, {"scenario": "broadwell_rescaled",
                          "broadwell": {"nx": 24, "ny": 24, "t_end": 1.0, "amplitude": 0.8}})
    out = tmp_path / "b"
    assert main(["broadwell", "run", "--rescaled", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 0
    rows = _rows(out / "run.csv")
    last = rows[-1]
    top = max(float(last[f"sup_w{i}"]) for i in range(1, 5))
    assert top < math.exp(-float(last["t"])) * 0.8 * 1.01
    assert (out / "final.bwg").read_bytes()[:4] == b"BWG1"


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"scenario": "peakon_simulate", "peakon": {"alpha": 2.0}})
    assert main(["peakon", "run", "--config", cfg, "--out", str(tmp_path / "x")]) == 1
    assert "peakon.alpha" in capsys.readouterr().err


def test_violation_exit_code(tmp_path):
    cfg = _cfg(tmp_path, {"scenario": "peakon_collide", "peakon": {"drift_tol": 1e-16}})
    assert main(["peakon", "collide", "--config", cfg, "--out", str(tmp_path / "v"),
                 "--quiet"]) == 2


def test_determinism(tmp_path):
    cfg = _cfg(tmp_path, {"scenario": "broadwell_run",
                          "broadwell": {"frame": "original", "periodic": True, "init": "random",
                                        "nx": 16, "ny": 16, "t_end": 0.3}})
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert main(["broadwell", "run", "--config", cfg, "--seed", "5", "--out", str(d),
                     "--quiet"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_approx_and_stability(tmp_path):
    cfg = _cfg(tmp_path, {"scenario": "approximate_data", "approx": {"N": [8, 16]}})
    out = tmp_path / "a"
    assert main(["approx", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    errs = [float(r["h1_error"]) for r in _rows(out / "approx.csv")]
    assert errs[1] < errs[0]
    cfg = _cfg(tmp_path, {"scenario": "metric_stability", "metric": {"samples": 3,
               "u": {"p": [1.0, 0.5], "q": [-1.0, 1.0]}, "v": {"p": [1.05, 0.5], "q": [-1.0, 1.05]}}},
               "s.json")
    out = tmp_path / "s"
    assert main(["metric", "stability", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert len(_rows(out / "stability.csv")) == 3
