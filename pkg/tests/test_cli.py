import json
import subprocess
import sys

import pytest

from stochbenders.cli import main

from instances import DATA, envelope_tree


@pytest.fixture
def envelope_file(tmp_path):
    path = tmp_path / "envelope.json"
    path.write_text(envelope_tree().to_json())
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("method", ["detequiv", "lshaped", "nested"])
def test_solve_envelope(capsys, envelope_file, method):
    code, out, _ = run(capsys, "solve", "--input", envelope_file, "--method", method)
    report = json.loads(out)
    assert code == 0
    assert report["status"] == "optimal"
    assert report["objective"] == pytest.approx(6.0, abs=1e-6)
    assert set(report) == {"status", "objective", "decisions", "iterations", "cuts", "bounds"}
    assert report["decisions"]["0"] == pytest.approx([6.0], abs=1e-6)


def test_ten_node_trace(capsys, tmp_path):
    trace = tmp_path / "trace.jsonl"
    out = tmp_path / "report.json"
    code, stdout, _ = run(
        capsys, "solve", "--input", DATA / "ten_node.json", "--method", "nested", "--protocol", "fffb",
        "--trace", trace, "--output", out,
    )
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["status"] == "optimal"
    events = [json.loads(line) for line in trace.read_text().splitlines()]
    first = next(e for e in events if e["event"] == "CUT")
    assert (first["kind"], first["from"], first["to"]) == ("feas", 3, 0)
    assert events[-1]["event"] == "TERMINATE"


def test_generate_is_deterministic(capsys):
    args = ["generate", "--stages", 2, "--branching", 3, "--vars", 2, "--rows", 2, "--seed", 7]
    code, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert code == 0 and a == b
    assert len(json.loads(a)["nodes"]) == 4


def test_generated_file_solves_the_same_every_way(capsys, tmp_path):
    _, text, _ = run(capsys, "generate", "--stages", 2, "--branching", 3, "--vars", 2, "--rows", 2, "--seed", 3,
                     "--infeas-frac", 0.5)
    path = tmp_path / "g.json"
    path.write_text(text)
    objs = []
    for method in ("detequiv", "lshaped", "nested"):
        code, out, _ = run(capsys, "solve", "--input", path, "--method", method)
        assert code == 0
        objs.append(json.loads(out)["objective"])
    assert objs == pytest.approx([objs[0]] * 3, abs=1e-6)


def test_single_stage_generated(capsys, tmp_path):
    _, text, _ = run(capsys, "generate", "--stages", 1, "--branching", 2, "--vars", 2, "--rows", 2, "--seed", 1)
    path = tmp_path / "one.json"
    path.write_text(text)
    for method in ("detequiv", "lshaped", "nested"):
        code, out, _ = run(capsys, "solve", "--input", path, "--method", method)
        assert code == 0 and json.loads(out)["iterations"] >= 1


def test_discretize(capsys):
    code, out, _ = run(capsys, "discretize", "--mean", 0, "--std", 1, "--n", 2)
    values = [p["value"] for p in json.loads(out)]
    assert code == 0 and values == pytest.approx([-0.67449, 0.67449], abs=1e-5)
    _, out, _ = run(capsys, "discretize", "--mean", 8, "--std", 1, "--n", 1)
    assert json.loads(out) == [{"value": 8.0, "prob": 1.0}]
    _, a, _ = run(capsys, "discretize", "--mean", 0, "--std", 1, "--n", 5, "--seed", 4)
    _, b, _ = run(capsys, "discretize", "--mean", 0, "--std", 1, "--n", 5, "--seed", 4)
    assert a == b


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "discretize", "--mean", 0, "--std", 0, "--n", 2)[0] == 1
    assert run(capsys, "solve", "--input", tmp_path / "missing.json")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "solve", "--input", bad)[0] == 1
    assert run(capsys, "nonsense")[0] == 1
    assert run(capsys, "generate", "--stages", 0, "--branching", 2, "--vars", 1, "--rows", 1, "--seed", 0)[0] == 1

    infeasible = {"nodes": [{"id": 0, "stage": 0, "parent": None, "prob": 1.0, "q": [1.0], "W": [[1.0], [1.0]],
                             "T": None, "h": [1.0, 2.0], "relations": ["le", "ge"], "children": []}], "root": 0}
    path = tmp_path / "infeasible.json"
    path.write_text(json.dumps(infeasible))
    code, out, _ = run(capsys, "solve", "--input", path)
    assert code == 2 and json.loads(out)["status"] == "infeasible"
    unbounded = dict(infeasible)
    unbounded["nodes"] = [dict(infeasible["nodes"][0], q=[-1.0], W=[[1.0]], h=[0.0], relations=["ge"])]
    path.write_text(json.dumps(unbounded))
    assert run(capsys, "solve", "--input", path)[0] == 3


def test_iteration_limit_exit_code(capsys, envelope_file):
    code, out, _ = run(capsys, "solve", "--input", envelope_file, "--method", "lshaped", "--max-iters", 1)
    assert code == 4 and json.loads(out)["status"] == "limit"


def test_lshaped_rejects_deep_trees(capsys):
    code, _, err = run(capsys, "solve", "--input", DATA / "ten_node.json", "--method", "lshaped")
    assert code == 1 and "two stages" in err


def test_module_entry_point(envelope_file):
    proc = subprocess.run(
        [sys.executable, "-m", "stochbenders", "solve", "--input", str(envelope_file), "--method", "lshaped"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["objective"] == pytest.approx(6.0)
