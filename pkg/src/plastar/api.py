"""HTTP service over the library.

Every request carries text, never paths: the CLI reads files and sends their
contents, so the service behaves the same in-process and over the network.
Input errors come back as 400 with the exception class name.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .eliminate import eliminate
from .errors import BadConfig, InputError
from .harness.battery import check_battery, rows_as_dicts
from .harness.experiment import gnuplot_script, result_csv, run_experiment, spec_from_dict
from .harness.pagerank import loads_graph, pagerank_demo
from .logic.evaluate import Evaluator
from .logic.parser import parse
from .logic.registry import DEFAULT
from .network import RNG_NAME, Network, event_probability, exact_distribution, loads_network, sample_many
from .structures import SigmaStructure
from .trees import Signature, Tree, loads_tree, parse_tree_spec, resolve_tree

app = FastAPI(title="plastar", version=__version__)


@app.exception_handler(InputError)
async def input_error(request: Request, exc: InputError):
    return JSONResponse(status_code=400, content={"error": type(exc).__name__, "detail": str(exc)})


def _value(x) -> dict:
    return {"value": float(x), "exact": str(x) if isinstance(x, (Fraction, int)) else None}


def _tree(text: str) -> Tree:
    if text.lstrip().startswith("tree v1"):
        return loads_tree(text)
    if text.startswith("file:"):
        raise BadConfig("send the tree file contents, not a path")
    return resolve_tree(parse_tree_spec(text))


def _valuation(at: dict[str, int], tree: Tree) -> dict[str, int]:
    for x, a in at.items():
        if not 0 <= a < len(tree):
            raise BadConfig(f"{x}={a} is not a node of the tree")
    return dict(at)


class WorldRelation(BaseModel):
    arity: int = Field(ge=1)
    tuples: list[list[int]] = []


class EvalRequest(BaseModel):
    tree: str
    formula: str
    at: dict[str, int] = {}
    world: dict[str, WorldRelation] = {}
    network: Optional[str] = None          # evaluate on a sampled world instead
    seed: int = 0
    index: int = Field(0, ge=0)


class ExactRequest(BaseModel):
    tree: str
    network: str
    query: str
    at: dict[str, int] = {}
    given: Optional[str] = None


class SampleRequest(BaseModel):
    tree: str
    network: str
    seed: int = 0
    count: int = Field(1, ge=1, le=10_000)
    start: int = Field(0, ge=0)


class EliminateRequest(BaseModel):
    network: str
    formula: str
    delta: int = Field(ge=1)
    variables: Optional[list[str]] = None
    assumption: str = "full"
    mc_fallback: bool = False
    seed: int = 0


class ExperimentRequest(BaseModel):
    spec: dict[str, Any]
    gnuplot: bool = False
    csv_name: str = "histograms.csv"


class CheckRequest(BaseModel):
    seed: int = 0
    trials: int = Field(10, ge=1)


class PagerankRequest(BaseModel):
    graph: str
    k: int = Field(ge=0, le=50)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/eval")
def eval_formula(req: EvalRequest):
    tree = _tree(req.tree)
    if req.network is not None:
        net = loads_network(req.network)
        A = next(sample_many(tree, net, req.seed, 1, start=req.index))
        sig = net.signature
        macros = net.macros
    else:
        sig = Signature(tuple((r, w.arity) for r, w in sorted(req.world.items())))
        A = SigmaStructure(tree, sig, {r: w.tuples for r, w in req.world.items()})
        macros = None
    phi = parse(req.formula, sig, DEFAULT, macros)
    v = _valuation(req.at, tree)
    missing = phi.free_vars - set(v)
    if missing:
        raise BadConfig(f"no value for free variables {sorted(missing)}")
    return _value(Evaluator(A, DEFAULT).run(phi, v))


@app.post("/exact")
def exact(req: ExactRequest):
    tree = _tree(req.tree)
    net = loads_network(req.network)
    phi = parse(req.query, net.signature, DEFAULT, net.macros)
    given = parse(req.given, net.signature, DEFAULT, net.macros) if req.given else None
    table = exact_distribution(tree, net, DEFAULT)
    p = event_probability(table, phi, _valuation(req.at, tree), given)
    return {**_value(p), "worlds": len(table.worlds), "tuples": len(table.tuples)}


def _world_json(A: SigmaStructure, net: Network) -> dict:
    return {r: [list(t) for t in A.interp[r].tuples()] for r in net.order}


@app.post("/sample")
def sample(req: SampleRequest):
    tree = _tree(req.tree)
    net = loads_network(req.network)
    worlds = [{"index": req.start + i, "relations": _world_json(A, net)}
              for i, A in enumerate(sample_many(tree, net, req.seed, req.count, start=req.start))]
    return {"rng": RNG_NAME, "seed": req.seed, "nodes": len(tree), "worlds": worlds}


@app.post("/eliminate")
def eliminate_route(req: EliminateRequest):
    if req.assumption not in ("full", "light"):
        raise BadConfig("assumption must be 'full' or 'light'")
    net = loads_network(req.network)
    phi = parse(req.formula, net.signature, DEFAULT, net.macros)
    _, report = eliminate(net, phi, req.delta, req.variables, DEFAULT, req.assumption,
                          req.mc_fallback, req.seed)
    return report.to_json()


@app.post("/experiment")
def experiment(req: ExperimentRequest):
    spec = spec_from_dict(req.spec)
    result = run_experiment(spec)
    out = {"result": result, "csv": result_csv(result)}
    if req.gnuplot:
        out["gnuplot"] = gnuplot_script(result, req.csv_name)
    return out


@app.post("/check")
def check(req: CheckRequest):
    rows = check_battery(req.seed, req.trials)
    return {"passed": all(r.passed for r in rows), "rows": rows_as_dicts(rows)}


@app.post("/pagerank")
def pagerank(req: PagerankRequest):
    names, edges = loads_graph(req.graph)
    ranks = pagerank_demo(names, edges, req.k)
    return {"k": req.k, "ranks": {a: _value(r) for a, r in ranks.items()},
            "total": _value(sum(ranks.values()))}
