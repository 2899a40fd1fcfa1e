import random
from fractions import Fraction

import numpy as np
import pytest

from plastar.errors import BadConfig, DanglingNode
from plastar.harness.battery import battery_table, check_battery
from plastar.harness.experiment import (ExperimentSpec, Query, dumps_result, gnuplot_script, histogram,
                                        result_csv, run_experiment, spec_from_dict, write_outputs)
from plastar.harness.pagerank import loads_graph, pagerank_demo
from plastar.trees import TreeGenConfig

from oracles import pagerank_iterate

LEAVES = """network v1
relation R arity=1 parents=
theta R(x) = 1/2
let q(x) = closed{exists r; E(r,x)};
let p(x,y) = closed{exists r; E(r,x); E(x,y)};
"""


def test_battery_passes_and_covers_every_builtin():
    rows = check_battery(seed=0)
    assert all(r.passed for r in rows)
    names = {r.function.split("(")[0] for r in rows}
    assert names == {"max", "min", "am", "gm", "lengthpow", "noisy-or", "tsum"}
    assert "FAIL" not in battery_table(rows)


# -- pagerank ------------------------------------------------------------------


def test_pagerank_two_cycle():
    names, edges = loads_graph("a b\nb a\n")
    for k in range(4):
        assert pagerank_demo(names, edges, k) == {"a": Fraction(1, 2), "b": Fraction(1, 2)}


def test_pagerank_matches_iteration():
    rng = random.Random(2)
    for _ in range(5):
        n = rng.randrange(3, 7)
        edges = {(i, (i + 1) % n) for i in range(n)}
        edges |= {(rng.randrange(n), rng.randrange(n)) for _ in range(n)}
        edges = sorted((a, b) for a, b in edges if a != b)
        text = "\n".join(f"{a} {b}" for a, b in edges)
        names, parsed = loads_graph(text)
        for k in range(4):
            ranks = pagerank_demo(names, parsed, k)
            assert [ranks[s] for s in names] == pagerank_iterate(n, parsed, k)
            assert sum(ranks.values()) == 1


def test_pagerank_rejects_dangling_nodes():
    names, edges = loads_graph("a b\n")
    with pytest.raises(DanglingNode):
        pagerank_demo(names, edges, 1)


# -- experiments ---------------------------------------------------------------


def _spec(**kw):
    base = dict(family=TreeGenConfig(2, "mixed-leaves", 0), n_list=[6, 8], network=LEAVES,
                queries=[Query("chi", "am(am(and(p(x,y), R(x), R(y)) : y : p(x,y)) : x : q(x))"),
                         Query("phi", "am(and(p(x,y), R(x), R(y)) : y : p(x,y))")],
                samples=120, seed=3, bucket_width=0.1)
    base.update(kw)
    return ExperimentSpec(**base)


def test_histogram_masses():
    h = histogram(np.array([0.0, 0.05, 0.5, 1.0]), 0.25)
    assert [b["mass"] for b in h] == [0.5, 0.0, 0.25, 0.25]
    assert h[-1]["hi"] == 1.0


def test_experiment_is_reproducible(tmp_path):
    spec = _spec()
    a = run_experiment(spec)
    assert dumps_result(a) == dumps_result(run_experiment(_spec()))
    for row in a["results"]:
        assert abs(sum(b["mass"] for b in row["histogram"]) - 1) <= 1e-9
        assert 0 <= row["mean"] <= 1
    paths = write_outputs(a, str(tmp_path / "out"), True)
    assert len(paths) == 3
    csv = result_csv(a)
    assert csv.splitlines()[0] == "n,query,lo,hi,mass"
    assert "plot" in gnuplot_script(a, "out.csv")


def test_experiment_config_validation(tmp_path):
    with pytest.raises(BadConfig):
        _spec(samples=10)
    with pytest.raises(BadConfig):
        _spec(n_list=[8, 6])
    with pytest.raises(BadConfig):
        spec_from_dict({"tree": {"profile": "uniform", "delta": 1}, "n_list": [2], "network": LEAVES,
                        "queries": [], "colour": "red"}, str(tmp_path))
    (tmp_path / "leaves.net").write_text(LEAVES)
    s = spec_from_dict({"tree": {"profile": "uniform", "delta": 1}, "n_list": [2], "network_file": "leaves.net",
                        "queries": [{"name": "r", "formula": "exists x (R(x))"}]}, str(tmp_path))
    assert s.network == LEAVES
