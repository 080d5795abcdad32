import json
import subprocess
import sys

import pytest

from supplyrestore import data_path
from supplyrestore.belief import Belief
from supplyrestore.cli import main
from supplyrestore.engine import Trace
from supplyrestore.planner import Plan


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_example(capsys):
    code, out, _ = cli(capsys, "validate")
    assert code == 0
    assert "3 feeders" in out
    assert "CB1: 7 lines, 5 areas" in out


def test_validate_json(capsys):
    code, out, _ = cli(capsys, "validate", "--format", "json")
    summary = json.loads(out)
    assert [f["cb"] for f in summary["feeders"]] == ["CB1", "CB5", "CB6"]
    assert len(summary["feeders"][0]["areas"]) == 5


def test_validate_empty_file(capsys, tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    code, _, err = cli(capsys, "validate", "--network", str(p))
    assert code == 1
    assert "parse error" in err


def test_validate_loop_network(capsys, tmp_path):
    doc = {
        "lines": [{"id": ln, "load_kw": 1.0, "capacity_kw": 10.0, "consumer_weight": 1.0}
                  for ln in ("L1", "L2")],
        "devices": [
            {"id": "CB1", "kind": "cb", "endpoints": ["S1", "L1"], "capacity_kw": 10.0},
            {"id": "CB2", "kind": "cb", "endpoints": ["S2", "L2"], "capacity_kw": 10.0},
            {"id": "R3", "kind": "rsd", "endpoints": ["L1", "L2"]},
        ],
        "normal_positions": {"CB1": "closed", "CB2": "closed", "R3": "closed"},
    }
    p = tmp_path / "loop.json"
    p.write_text(json.dumps(doc))
    code, _, err = cli(capsys, "validate", "--network", str(p))
    assert code == 1
    assert "multi-feed" in err


def test_missing_file(capsys):
    code, _, err = cli(capsys, "validate", "--network", "/nonexistent/net.json")
    assert code == 1 and "cannot read" in err


def test_run_sample_session(capsys):
    code, out, _ = cli(capsys, "run")
    assert code == 0
    lines = out.splitlines()
    assert sum(ln.startswith("PLAN") for ln in lines) == 4
    assert lines[-1].startswith("END    finished")


def test_run_json_round_trip(capsys, tmp_path):
    out_file = tmp_path / "trace.jsonl"
    code, out, _ = cli(capsys, "run", "--format", "json", "--out", str(out_file))
    assert code == 0 and out == ""
    text = out_file.read_text()
    trace = Trace.from_jsonl(text)
    assert trace.outcome == "Finished"
    assert trace.to_jsonl() == text


def test_run_no_fault(capsys):
    code, out, _ = cli(capsys, "run", "--scenario", str(data_path("no_fault.json")))
    assert code == 0
    assert out.splitlines()[-1].startswith("END    finished after 0 operations")


def test_run_aborts_past_fault_ceiling(capsys, tmp_path, default_config_doc):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**default_config_doc, "k_max": 1}))
    code, out, _ = cli(capsys, "run", "--config", str(cfg))
    assert code == 2
    assert out.splitlines()[-1].startswith("END    aborted")


def test_seed_flag_overrides(capsys, tmp_path, default_config_doc):
    cfg = tmp_path / "cfg.json"
    noisy = {**default_config_doc, "stochastic": {"p_ac_to_liar": 0.3, "p_ac_to_broken": 0.3, "seed": 1}}
    cfg.write_text(json.dumps(noisy))
    runs = {s: cli(capsys, "run", "--config", str(cfg), "--seed", str(s), "--format", "json")[1]
            for s in (1, 2, 3, 4)}
    assert runs[1] == cli(capsys, "run", "--config", str(cfg), "--format", "json")[1]
    assert len(set(runs.values())) > 1


def test_bad_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kmax": 2}))
    assert cli(capsys, "run", "--config", str(cfg))[0] == 1


def test_plans_for_fault_16_18(capsys):
    code, out, _ = cli(capsys, "plans", "--format", "json")
    assert code == 0
    ranked = json.loads(out)
    top = Plan.from_dict(ranked[0]["plan"])
    assert set(top.opens) == {"RSD16", "RSD18"}
    assert set(top.closes) == {"CB1", "RSD53"}
    assert len(ranked) < 100
    scores = [r["score"] for r in ranked]
    assert scores == sorted(scores, reverse=True)
    assert [Plan.from_dict(r["plan"]).to_dict() for r in ranked] == [r["plan"] for r in ranked]


def test_plans_for_restored_state(capsys, tmp_path):
    p = tmp_path / "cand.json"
    p.write_text("{}")
    code, out, _ = cli(capsys, "plans", "--candidate", str(p), "--format", "json")
    assert code == 0
    assert json.loads(out) == [{"plan": {"open": [], "close": []}, "score": 0.0}]


def test_belief_step_0(capsys, topo):
    code, out, _ = cli(capsys, "belief", "--format", "json")
    assert code == 0
    dump = json.loads(out)
    assert len(dump["candidates"]) == 5
    assert abs(sum(c["probability"] for c in dump["candidates"]) - 1) <= 1e-9
    b = Belief.from_dict(topo, dump)
    assert json.loads(json.dumps({"step": 0, **b.to_dict()})) == dump


def test_belief_after_cb1_retrip(capsys):
    dump = json.loads(cli(capsys, "belief", "--step", "2", "--format", "json")[1])
    assert dump["candidates"][0]["summary"]["fault_areas"] == ["L12"]


def test_belief_step_out_of_range(capsys):
    code, _, err = cli(capsys, "belief", "--step", "99")
    assert code == 1 and "out of range" in err


def test_belief_text(capsys):
    code, out, _ = cli(capsys, "belief")
    assert code == 0
    assert out.startswith("step 0, k=1, 5 candidates")


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "supplyrestore.cli", "validate"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "3 feeders" in proc.stdout


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
