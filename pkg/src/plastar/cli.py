"""Command line client.

Runs the service in-process by default; `--server URL` talks to a running
one instead (start it with `plastar serve`).  Exit codes: 0 ok, 1 usage,
2 input error, 3 failed check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class CliInputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise CliInputError(f"cannot read {path}: {e.strerror}") from None


def _tree_arg(spec: str) -> str:
    return _read(spec[5:]) if spec.startswith("file:") else spec


def _at(text: Optional[str]) -> dict[str, int]:
    out = {}
    for item in filter(None, (text or "").split(",")):
        name, eq, val = item.partition("=")
        if not eq or not val.strip().lstrip("-").isdigit():
            raise CliInputError(f"bad --at entry {item!r}; expected x=3")
        out[name.strip()] = int(val)
    return out


def _client(server: Optional[str]):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")   # starlette deprecation note about httpx
        from fastapi.testclient import TestClient
    from .api import app

    return TestClient(app)


def _call(client, route: str, payload: dict) -> dict:
    r = client.post(route, json=payload)
    if r.status_code != 200:
        try:
            body = r.json()
        except ValueError:
            body = {"detail": r.text}
        name = body.get("error", f"HTTP {r.status_code}")
        raise CliInputError(f"{name}: {body.get('detail')}")
    return r.json()


def _show(value: dict) -> str:
    return value["exact"] if value["exact"] is not None else repr(value["value"])


def _write(path: str, text: str):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise CliInputError(f"cannot write {path}: {e.strerror}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(client, a) -> int:
    payload = {"tree": _tree_arg(a.tree), "formula": a.formula, "at": _at(a.at),
               "seed": a.seed, "index": a.index}
    if a.world:
        try:
            payload["world"] = json.loads(_read(a.world))
        except json.JSONDecodeError as e:
            raise CliInputError(f"bad world file: {e}") from None
    if a.net:
        payload["network"] = _read(a.net)
    print(_show(_call(client, "/eval", payload)))
    return EXIT_OK


def cmd_exact(client, a) -> int:
    out = _call(client, "/exact", {"tree": _tree_arg(a.tree), "network": _read(a.net),
                                   "query": a.query, "at": _at(a.at), "given": a.given})
    print(_show(out))
    return EXIT_OK


def cmd_sample(client, a) -> int:
    out = _call(client, "/sample", {"tree": _tree_arg(a.tree), "network": _read(a.net),
                                    "seed": a.seed, "count": a.count, "start": a.start})
    text = json.dumps(out, sort_keys=True) + "\n"
    if a.out:
        _write(a.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eliminate(client, a) -> int:
    variables = [v.strip() for v in a.variables.split(",") if v.strip()] if a.variables else None
    report = _call(client, "/eliminate", {"network": _read(a.net), "formula": a.formula, "delta": a.delta,
                                          "variables": variables, "assumption": a.assumption,
                                          "mc_fallback": a.mc_fallback, "seed": a.seed})
    if a.report:
        _write(a.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(report["output_formula"])
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_experiment(client, a) -> int:
    try:
        spec = json.loads(_read(a.spec))
    except json.JSONDecodeError as e:
        raise CliInputError(f"bad spec file: {e}") from None
    if not isinstance(spec, dict):
        raise CliInputError("spec file must hold a JSON object")
    if "network_file" in spec:
        spec["network"] = _read(os.path.join(os.path.dirname(a.spec), spec.pop("network_file")))
    prefix = a.out or spec.get("output") or os.path.splitext(a.spec)[0] + ".out"
    csv_path = prefix + ".csv"
    out = _call(client, "/experiment", {"spec": spec, "gnuplot": a.gnuplot,
                                        "csv_name": os.path.basename(csv_path)})
    _write(prefix + ".json", json.dumps(out["result"], indent=2, sort_keys=True) + "\n")
    _write(csv_path, out["csv"])
    written = [prefix + ".json", csv_path]
    if a.gnuplot:
        _write(prefix + ".gp", out["gnuplot"])
        written.append(prefix + ".gp")
    for r in out["result"]["results"]:
        peaks = ", ".join(f"{p['value']:.4f} ({p['mass']:.2f})" for p in r["concentration"])
        print(f"n={r['n']:<6} {r['query']:<12} mean={r['mean']:.4f}  peaks: {peaks}")
    print("wrote " + " ".join(written))
    return EXIT_OK


def cmd_check(client, a) -> int:
    out = _call(client, "/check", {"seed": a.seed, "trials": a.trials})
    for r in out["rows"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['function']:<16} {r['probe']:<32} "
              f"discrepancy={r['discrepancy']:.4f} expect={r['expect']}")
    return EXIT_OK if out["passed"] else EXIT_CHECK


def cmd_pagerank(client, a) -> int:
    out = _call(client, "/pagerank", {"graph": _read(a.graph), "k": a.k})
    for name, v in out["ranks"].items():
        print(f"{name}\t{_show(v)}")
    print(f"total\t{_show(out['total'])}")
    return EXIT_OK


def cmd_serve(a) -> int:
    import uvicorn

    uvicorn.run("plastar.api:app", host=a.host, port=a.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plastar", description="PLA* evaluation, sampling and elimination")
    p.add_argument("--server", help="URL of a running plastar service")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("eval", help="evaluate a formula on one world")
    s.add_argument("--tree", required=True, help="generator spec like uniform:delta=2,n=3, or file:path")
    s.add_argument("--formula", required=True)
    s.add_argument("--at", help="valuation, e.g. x=3,y=7")
    s.add_argument("--world", help="JSON file {R: {arity, tuples}}")
    s.add_argument("--net", help="network file; evaluates on sampled world --index")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--index", type=int, default=0)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("exact", help="exact probability of a 0/1 query")
    s.add_argument("--tree", required=True)
    s.add_argument("--net", required=True)
    s.add_argument("--query", required=True)
    s.add_argument("--at")
    s.add_argument("--given", help="condition on this 0/1 formula")
    s.set_defaults(fn=cmd_exact)

    s = sub.add_parser("sample", help="draw worlds from a network")
    s.add_argument("--tree", required=True)
    s.add_argument("--net", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("eliminate", help="compile to a closure-basic formula")
    s.add_argument("--net", required=True)
    s.add_argument("--formula", required=True)
    s.add_argument("--delta", type=int, required=True, help="tree height")
    s.add_argument("--variables", help="free variable order, e.g. x,y")
    s.add_argument("--assumption", choices=("full", "light"), default="full")
    s.add_argument("--mc-fallback", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.set_defaults(fn=cmd_eliminate)

    s = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    s.add_argument("--spec", required=True)
    s.add_argument("--gnuplot", action="store_true")
    s.add_argument("--out", help="output prefix; defaults to the spec's output field")
    s.set_defaults(fn=cmd_experiment)

    s = sub.add_parser("check", help="aggregation-function battery")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=10)
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("pagerank", help="PageRank stages as formulas")
    s.add_argument("--graph", required=True)
    s.add_argument("--k", type=int, required=True)
    s.set_defaults(fn=cmd_pagerank)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(fn=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    try:
        with _client(args.server) as client:
            return args.fn(client, args)
    except CliInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
