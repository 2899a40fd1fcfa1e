"""PageRank stages written as PLA* formulas over a link graph.

PR_0(x) = length^-1(x = x : w : 1) and
PR_{k+1}(x) = tsum(x = x and PR_k(u) * out(u) : u : E(u, x)) with
out(u) = length^-1(u = u : z : E(u, z)).  Each stage uses its own bound
variable names so that substituting PR_k never captures a variable.
"""

from __future__ import annotations

from fractions import Fraction

from ..errors import DanglingNode, InputError
from ..logic.evaluate import Evaluator
from ..logic.formula import TOP, Agg, Atom, Conn, Eq, Formula
from ..logic.registry import DEFAULT
from ..structures import FiniteStructure


def pagerank_formula(k: int, x: str = "x") -> Formula:
    if k == 0:
        return Agg("lengthpow", (Eq(x, x),), ("w0",), (TOP,))
    u, z = f"u{k}", f"z{k}"
    out = Agg("lengthpow", (Eq(u, u),), (z,), (Atom("E", (u, z)),))
    body = Conn("and", (Eq(x, x), Conn("product", (pagerank_formula(k - 1, u), out))))
    return Agg("tsum", (body,), (u,), (Atom("E", (u, x)),))


def loads_graph(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Edge list, one `source target` pair per line; `#` starts a comment."""
    labels: dict[str, int] = {}
    raw = []
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 2:
            raise InputError(f"bad edge line {ln!r}")
        raw.append(tuple(parts))
        for p in parts:
            labels.setdefault(p, 0)
    names = sorted(labels, key=lambda s: (not s.isdigit(), int(s) if s.isdigit() else 0, s))
    idx = {s: i for i, s in enumerate(names)}
    return names, sorted({(idx[a], idx[b]) for a, b in raw})


def pagerank_demo(names: list[str], edges: list[tuple[int, int]], k: int) -> dict[str, Fraction]:
    if not names:
        raise InputError("empty graph")
    out_deg = [0] * len(names)
    for a, _ in edges:
        out_deg[a] += 1
    dangling = [names[i] for i, d in enumerate(out_deg) if d == 0]
    if dangling:
        raise DanglingNode(f"nodes without out-links: {dangling}")
    A = FiniteStructure(len(names), {"E": (2, edges)})
    phi = pagerank_formula(k)
    ev = Evaluator(A, DEFAULT)
    return {names[a]: ev.run(phi, {"x": a}) for a in range(len(names))}
