import json
import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from plastar import api
from plastar.cli import EXIT_CHECK, EXIT_INPUT, EXIT_OK, EXIT_USAGE, main
from plastar.harness.battery import BatteryRow

NET = """network v1
relation R arity=1 parents=
theta R(x) = 1/2
let q(x) = closed{exists r; E(r,x)};
let p(x,y) = closed{exists r; E(r,x); E(x,y)};
"""


@pytest.fixture
def files(tmp_path):
    (tmp_path / "r.net").write_text(NET)
    (tmp_path / "g.txt").write_text("a b\nb a\nb c\nc a\n")
    (tmp_path / "world.json").write_text(json.dumps({"R": {"arity": 1, "tuples": [[1]]}}))
    (tmp_path / "spec.json").write_text(json.dumps({
        "tree": {"profile": "uniform", "delta": 1}, "n_list": [3, 4], "network_file": "r.net",
        "queries": [{"name": "frac", "formula": "am(R(y) : y : q(y))"}], "samples": 100}))
    return tmp_path


def _out(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_eval(files, capsys):
    assert main(["eval", "--tree", "uniform:delta=1,n=2", "--formula", "am(R(y) : y : closed{exists r; E(r,y)})",
                 "--world", str(files / "world.json")]) == EXIT_OK
    assert _out(capsys) == ["1/2"]
    assert main(["eval", "--tree", "uniform:delta=1,n=2", "--formula", "implies(0.8, 0.5)"]) == EXIT_OK
    assert _out(capsys) == ["7/10"]


def test_exact(files, capsys):
    assert main(["exact", "--tree", "uniform:delta=1,n=2", "--net", str(files / "r.net"),
                 "--query", "exists x (R(x))"]) == EXIT_OK
    assert _out(capsys) == ["7/8"]
    assert main(["exact", "--tree", "uniform:delta=1,n=2", "--net", str(files / "r.net"),
                 "--query", "R(x)", "--at", "x=1", "--given", "R(x)"]) == EXIT_OK
    assert _out(capsys) == ["1"]


def test_sample_is_reproducible(files, capsys):
    args = ["sample", "--tree", "uniform:delta=1,n=3", "--net", str(files / "r.net"), "--seed", "4", "--count", "3"]
    assert main(args) == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert len(first["worlds"]) == 3 and first["nodes"] == 4
    assert main(args + ["--out", str(files / "w.json")]) == EXIT_OK
    assert json.loads((files / "w.json").read_text()) == first


def test_eliminate(files, capsys):
    report = files / "rep.json"
    assert main(["eliminate", "--net", str(files / "r.net"), "--delta", "2", "--report", str(report),
                 "--formula", "am(and(R(x), am(and(p(x,y), R(y)) : y : p(x,y))) : x : q(x))"]) == EXIT_OK
    assert json.loads(report.read_text())["output_entries"][0]["value"] == "1/4"


def test_experiment(files, capsys):
    assert main(["experiment", "--spec", str(files / "spec.json"), "--gnuplot"]) == EXIT_OK
    lines = _out(capsys)
    assert lines[0].startswith("n=3") and lines[-1].startswith("wrote")
    for ext in (".json", ".csv", ".gp"):
        assert (files / f"spec.out{ext}").exists()


def test_check_and_its_failure_exit(monkeypatch, capsys):
    assert main(["check"]) == EXIT_OK
    bad = BatteryRow("max", "forced", [], 1.0, None, "converges", False)
    monkeypatch.setattr(api, "check_battery", lambda seed, trials: [bad])
    assert main(["check"]) == EXIT_CHECK
    assert _out(capsys)[-1].startswith("FAIL")


def test_pagerank(files, capsys):
    assert main(["pagerank", "--graph", str(files / "g.txt"), "--k", "3"]) == EXIT_OK
    assert _out(capsys) == ["a\t5/12", "b\t1/3", "c\t1/4", "total\t1"]


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["pagerank", "--graph", "g.txt"],
    ["pagerank", "--graph", "g.txt", "--k", "two"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["pagerank", "--graph", "/nonexistent/g.txt", "--k", "1"],
    ["eval", "--tree", "uniform:delta=1,n=2", "--formula", "am(R(x)"],
    ["eval", "--tree", "uniform:delta=1,n=2", "--formula", "1", "--at", "x"],
    ["eval", "--tree", "wobbly:n=2", "--formula", "1"],
])
def test_input_errors(argv, capsys):
    assert main(argv) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error:")


def test_dangling_graph_is_an_input_error(tmp_path, capsys):
    (tmp_path / "g.txt").write_text("a b\n")
    assert main(["pagerank", "--graph", str(tmp_path / "g.txt"), "--k", "1"]) == EXIT_INPUT
    assert "DanglingNode" in capsys.readouterr().err


# -- service routes --------------------------------------------------------------


@pytest.fixture
def client():
    return TestClient(api.app)


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_routes(client):
    r = client.post("/exact", json={"tree": "uniform:delta=1,n=2", "network": NET, "query": "exists x (R(x))"})
    assert r.status_code == 200 and r.json()["exact"] == "7/8"
    r = client.post("/pagerank", json={"graph": "a b\nb a\n", "k": 2})
    assert r.json()["ranks"]["a"]["exact"] == "1/2"
    r = client.post("/eliminate", json={"network": NET, "formula": "am(R(y) : y : q(y))", "delta": 1})
    assert r.json()["output_entries"][0]["value"] == "1/2"


def test_route_errors(client):
    r = client.post("/eval", json={"tree": "uniform:delta=1,n=2", "formula": "Q(x)"})
    assert r.status_code == 400 and r.json()["error"] == "UnknownSymbol"
    r = client.post("/eval", json={"tree": "file:/etc/passwd", "formula": "1"})
    assert r.status_code == 400
    r = client.post("/sample", json={"tree": "uniform:delta=1,n=2", "network": NET, "count": 0})
    assert r.status_code == 422
