"""Monte Carlo experiments: value histograms of queries over sampled worlds.

For each n the tree family is instantiated, `samples` worlds are drawn from
the network (world i uses sampler index i, so every run is reproducible),
each query is evaluated at its scheduled argument tuples and the values are
bucketed.  Output is plain JSON and CSV; the optional gnuplot script only
references the CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from ..eliminate import valuation_tuples
from ..errors import BadConfig, InputError
from ..logic.formula import Formula
from ..logic.parser import parse
from ..logic.registry import Registry
from ..logic.vector import batch_evaluate
from ..network import RNG_NAME, Network, loads_network, sample_many
from ..trees import TreeGenConfig, generate_tree

MIN_SAMPLES = 100
PEAK_MASS = 0.05     # buckets below this mass do not start a concentration point


@dataclass
class Query:
    name: str
    formula: str
    valuation: Any = "auto"          # "auto" or {"x": node, ...}


@dataclass
class ExperimentSpec:
    family: TreeGenConfig
    n_list: list[int]
    network: str                     # network v1 text
    queries: list[Query]
    samples: int = 500
    seed: int = 0
    bucket_width: float = 0.05
    output: Optional[str] = None

    def __post_init__(self):
        if not self.n_list or any(a >= b for a, b in zip(self.n_list, self.n_list[1:])):
            raise BadConfig("n_list must be non-empty and strictly increasing")
        if self.samples < MIN_SAMPLES:
            raise BadConfig(f"samples must be at least {MIN_SAMPLES}")
        if not 0 < self.bucket_width <= 1:
            raise BadConfig("bucket_width must lie in (0, 1]")
        if not self.queries:
            raise BadConfig("no queries")
        names = [q.name for q in self.queries]
        if len(set(names)) != len(names):
            raise BadConfig("query names must be distinct")


def spec_from_dict(d: Mapping[str, Any], base_dir: str = ".") -> ExperimentSpec:
    """Build a spec from parsed JSON; `network_file` is read relative to base_dir."""
    d = dict(d)
    tree = dict(d.pop("tree", {}))
    try:
        family = TreeGenConfig(delta=int(tree.pop("delta", 2)), profile=tree.pop("profile", "uniform"),
                               counts=tuple(int(c) for c in tree.pop("counts", ())),
                               assumption_tag=tree.pop("assumption_tag", ""))
    except (TypeError, ValueError) as e:
        raise BadConfig(f"bad tree family: {e}") from None
    if tree:
        raise BadConfig(f"unknown tree options {sorted(tree)}")
    if "network" in d:
        net_text = d.pop("network")
    elif "network_file" in d:
        path = os.path.join(base_dir, d.pop("network_file"))
        try:
            with open(path) as fh:
                net_text = fh.read()
        except OSError as e:
            raise InputError(f"cannot read network file: {e}") from None
    else:
        raise BadConfig("spec needs 'network' or 'network_file'")
    try:
        queries = [Query(q["name"], q["formula"], q.get("valuation", "auto")) for q in d.pop("queries")]
        spec = ExperimentSpec(family, [int(n) for n in d.pop("n_list")], net_text, queries,
                              samples=int(d.pop("samples", 500)), seed=int(d.pop("seed", 0)),
                              bucket_width=float(d.pop("bucket_width", 0.05)), output=d.pop("output", None))
    except (KeyError, TypeError) as e:
        raise BadConfig(f"bad experiment spec: missing or malformed {e}") from None
    if d:
        raise BadConfig(f"unknown spec fields {sorted(d)}")
    return spec


def spec_to_dict(spec: ExperimentSpec) -> dict:
    f = spec.family
    return {"tree": {"profile": f.profile, "delta": f.delta, "counts": list(f.counts),
                     "assumption_tag": f.tag()},
            "n_list": list(spec.n_list), "network": spec.network,
            "queries": [{"name": q.name, "formula": q.formula, "valuation": q.valuation} for q in spec.queries],
            "samples": spec.samples, "seed": spec.seed, "bucket_width": spec.bucket_width,
            "output": spec.output}


# ---------------------------------------------------------------------------
# histograms


def bucket_edges(width: float) -> np.ndarray:
    k = math.ceil(1 / width - 1e-12)
    return np.minimum(np.round(np.arange(k + 1) * width, 12), 1.0)


def histogram(values: np.ndarray, width: float) -> list[dict]:
    edges = bucket_edges(width)
    k = len(edges) - 1
    idx = np.clip(np.floor(values / width + 1e-12).astype(np.int64), 0, k - 1)
    counts = np.bincount(idx, minlength=k)
    total = counts.sum()
    # integer counts over one total, so the masses add to 1 up to rounding
    return [{"lo": float(edges[i]), "hi": float(edges[i + 1]), "mass": float(counts[i] / total)}
            for i in range(k)]


def concentration_points(values: np.ndarray, hist: list[dict]) -> list[dict]:
    """Runs of adjacent heavy buckets, each reported as the mean of its values and its mass."""
    points, run = [], []
    for i, b in enumerate(hist + [{"mass": 0.0}]):
        if b["mass"] >= PEAK_MASS:
            run.append(i)
            continue
        if run:
            lo, hi = hist[run[0]]["lo"], hist[run[-1]]["hi"]
            last = run[-1] == len(hist) - 1
            inside = values[(values >= lo) & ((values <= hi) if last else (values < hi))]
            points.append({"value": float(inside.mean()), "lo": lo, "hi": hi,
                           "mass": float(sum(hist[j]["mass"] for j in run))})
            run = []
    return points


# ---------------------------------------------------------------------------
# running


def _parse_queries(spec: ExperimentSpec, net: Network, registry: Optional[Registry]) -> list[tuple[Query, Formula]]:
    out = []
    for q in spec.queries:
        phi = parse(q.formula, net.signature, registry, net.macros)
        if q.valuation != "auto":
            if not isinstance(q.valuation, Mapping):
                raise BadConfig(f"query {q.name}: valuation must be 'auto' or a variable map")
            missing = phi.free_vars - set(q.valuation)
            if missing:
                raise BadConfig(f"query {q.name}: no value for {sorted(missing)}")
        out.append((q, phi))
    return out


def _schedule(q: Query, phi: Formula, tree, seed: int):
    variables = sorted(phi.free_vars)
    if q.valuation != "auto":
        n = len(tree)
        for x in variables:
            if not 0 <= int(q.valuation[x]) < n:
                raise BadConfig(f"query {q.name}: node {q.valuation[x]} not in the tree")
        return {x: np.array([int(q.valuation[x])]) for x in variables}, 1, False
    tuples, flagged = valuation_tuples(tree, len(variables), seed)
    if tuples is None:
        return {}, 1, False
    return {x: tuples[:, i] for i, x in enumerate(variables)}, len(tuples), flagged


def run_experiment(spec: ExperimentSpec, registry: Optional[Registry] = None) -> dict:
    net = loads_network(spec.network, registry)
    queries = _parse_queries(spec, net, registry)
    results = []
    for n in spec.n_list:
        f = spec.family
        tree = generate_tree(TreeGenConfig(f.delta, f.profile, n, f.counts, f.child_count, f.assumption_tag))
        plans = [(q, phi, *_schedule(q, phi, tree, spec.seed)) for q, phi in queries]
        values: dict[str, list[np.ndarray]] = {q.name: [] for q in spec.queries}
        for A in sample_many(tree, net, spec.seed, spec.samples, registry=registry):
            for q, phi, env, size, _ in plans:
                values[q.name].append(batch_evaluate(A, phi, env, registry, size=size))
        for q, phi, env, size, flagged in plans:
            vals = np.concatenate(values[q.name])
            hist = histogram(vals, spec.bucket_width)
            results.append({"n": n, "nodes": len(tree), "query": q.name,
                            "tuples": size, "subsampled": flagged,
                            "mean": float(vals.mean()), "histogram": hist,
                            "concentration": concentration_points(vals, hist)})
    return {"spec": spec_to_dict(spec), "rng": RNG_NAME, "results": results}


# ---------------------------------------------------------------------------
# writers


def dumps_result(result: dict) -> str:
    return json.dumps(result, indent=2, sort_keys=True) + "\n"


def result_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "query", "lo", "hi", "mass"])
    for r in result["results"]:
        for b in r["histogram"]:
            w.writerow([r["n"], r["query"], repr(b["lo"]), repr(b["hi"]), repr(b["mass"])])
    return buf.getvalue()


def gnuplot_script(result: dict, csv_name: str) -> str:
    """One histogram panel per (n, query), read straight from the CSV."""
    rows = result["results"]
    width = result["spec"]["bucket_width"]
    lines = ["set datafile separator ','", "set style fill solid 0.6", f"set boxwidth {width}",
             "set xrange [0:1]", "set yrange [0:1]", f"set multiplot layout {len(rows)},1"]
    for r in rows:
        lines.append(f"set title 'n={r['n']} {r['query']}'")
        lines.append(f"plot '{csv_name}' using (($1=={r['n']} && strcol(2) eq '{r['query']}') ? "
                     f"($3+$4)/2 : 1/0):5 with boxes notitle")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def write_outputs(result: dict, prefix: str, gnuplot: bool = False) -> list[str]:
    written = []
    csv_path = prefix + ".csv"
    for path, text in ((prefix + ".json", dumps_result(result)), (csv_path, result_csv(result))):
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)
    if gnuplot:
        with open(prefix + ".gp", "w") as fh:
            fh.write(gnuplot_script(result, os.path.basename(csv_path)))
        written.append(prefix + ".gp")
    return written
