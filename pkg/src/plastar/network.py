"""PLA*-networks and the distributions they induce on expansions of a tree.

A network assigns each relation symbol outside the tree signature a formula
over its parents.  Worlds are built level by level: every tuple of a level-l
symbol R holds independently with probability theta_R evaluated on the world
built so far.

Exact tables enumerate worlds as bitmasks over a global tuple index.  The
sampler is counter based: the uniform that decides tuple number c of R in
world w sits at position w * |T|^arity + c of a Philox stream keyed by
(seed, level, index of R), so any world or tuple can be drawn on its own.
"""

from __future__ import annotations

import gc
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import gcd
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import (ArityMismatch, CyclicDependency, FormulaSyntaxError, IllegalSymbolInTheta,
                     InputError, NotZeroOne, TooLarge)
from .logic.evaluate import Evaluator
from .logic.formula import Formula, is_aggregation_free, render, symbols
from .logic.parser import Macro, parse, parse_macros
from .logic.registry import DEFAULT, Registry
from .logic.vector import batch_evaluate
from .structures import DENSE_CAP, Relation, SigmaStructure
from .trees import TREE_SYMBOL, Signature, Tree

RNG_NAME = "philox4x64-v1"
MAX_EXACT_TUPLES = 24
MAX_SAMPLE_TUPLES = 50_000_000


@dataclass
class Network:
    signature: Signature                         # the symbols outside the tree signature
    parents: dict[str, tuple[str, ...]]
    theta: dict[str, Formula]
    theta_vars: dict[str, tuple[str, ...]]       # argument order of each theta
    macros: dict[str, Macro] = field(default_factory=dict)
    levels: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.levels = validate(self)

    @property
    def height(self) -> int:
        return max(self.levels.values(), default=-1)

    @property
    def order(self) -> list[str]:
        """Symbols sorted by (level, name); the canonical topological order."""
        return sorted(self.levels, key=lambda r: (self.levels[r], r))

    def at_level(self, level: int) -> list[str]:
        return [r for r in self.order if self.levels[r] == level]

    @property
    def closure_basic(self) -> bool:
        """Every theta is aggregation-free, hence equivalent to a closure-basic formula."""
        return all(is_aggregation_free(t) for t in self.theta.values())

    def ancestors(self, names: Iterable[str]) -> set[str]:
        out, todo = set(), [n for n in names if n in self.parents]
        while todo:
            r = todo.pop()
            if r not in out:
                out.add(r)
                todo.extend(self.parents[r])
        return out

    def induced(self, names: Iterable[str]) -> "Network":
        keep = set(names)
        for r in keep:
            if r not in self.parents:
                raise IllegalSymbolInTheta(f"{r} is not a symbol of the network")
            if not set(self.parents[r]) <= keep:
                raise IllegalSymbolInTheta(f"{r} needs its parents {self.parents[r]} in the subnetwork")
        return Network(self.signature.restrict(keep), {r: self.parents[r] for r in keep},
                       {r: self.theta[r] for r in keep}, {r: self.theta_vars[r] for r in keep},
                       dict(self.macros))

    def theta_env(self, name: str, cols: Sequence) -> dict:
        return dict(zip(self.theta_vars[name], cols))


def validate(net: Network) -> dict[str, int]:
    """Topological levels; raises on cycles, foreign symbols or arity errors."""
    names = set(net.signature.names())
    if TREE_SYMBOL in names:
        raise IllegalSymbolInTheta("the tree symbol has no theta")
    if set(net.parents) != names or set(net.theta) != names:
        raise IllegalSymbolInTheta("every symbol needs exactly one parents entry and one theta")
    for r, ps in net.parents.items():
        bad = set(ps) - names
        if bad:
            raise IllegalSymbolInTheta(f"parents of {r} include unknown symbols {sorted(bad)}")
    levels: dict[str, int] = {}
    state: dict[str, int] = {}

    def visit(r: str, path: list[str]) -> int:
        if state.get(r) == 1:
            raise CyclicDependency(" -> ".join(path[path.index(r):] + [r]))
        if r not in levels:
            state[r] = 1
            levels[r] = 1 + max((visit(p, path + [r]) for p in net.parents[r]), default=-1)
            state[r] = 2
        return levels[r]

    for r in sorted(names):
        visit(r, [])
    for r in names:
        theta, args = net.theta[r], net.theta_vars[r]
        bad = symbols(theta) - set(net.parents[r]) - {TREE_SYMBOL}
        if bad:
            raise IllegalSymbolInTheta(f"theta_{r} mentions non-parents {sorted(bad)}")
        if len(args) != net.signature.arity(r) or len(set(args)) != len(args):
            raise ArityMismatch(f"theta_{r} takes {net.signature.arity(r)} distinct variables")
        if not theta.free_vars <= set(args):
            raise ArityMismatch(f"theta_{r} has free variables {sorted(theta.free_vars - set(args))}")
    return levels


def make_network(relations: Sequence[tuple[str, int, Sequence[str]]],
                 thetas: Mapping[str, Formula | str], variables: Optional[Mapping[str, Sequence[str]]] = None,
                 registry: Optional[Registry] = None, macros: Optional[Mapping[str, Macro]] = None) -> Network:
    """Build a network from (name, arity, parents) triples and theta formulas or texts."""
    sig = Signature(tuple((n, k) for n, k, _ in relations))
    parents = {n: tuple(ps) for n, _, ps in relations}
    variables = dict(variables or {})
    theta, tvars = {}, {}
    for n, k, _ in relations:
        t = thetas[n]
        if isinstance(t, str):
            t = parse(t, sig, registry, macros)
        theta[n] = t
        tvars[n] = tuple(variables[n]) if n in variables else _default_vars(t, k, n)
    return Network(sig, parents, theta, tvars, dict(macros or {}))


def _default_vars(theta: Formula, arity: int, name: str) -> tuple[str, ...]:
    fv = sorted(theta.free_vars)
    if len(fv) == arity:
        return tuple(fv)
    if not fv:
        return tuple(f"x{i + 1}" for i in range(arity))
    raise ArityMismatch(f"theta_{name} has {len(fv)} free variables; declare them as theta {name}(...)")


# ---------------------------------------------------------------------------
# file format

_REL = re.compile(r"relation\s+(\w+)\s+arity=(\d+)\s+parents=([\w,\s]*)$")
_THETA = re.compile(r"theta\s+(\w+)\s*(?:\(([^)]*)\))?\s*=\s*(.*)$", re.S)


def loads_network(text: str, registry: Optional[Registry] = None) -> Network:
    """Parse the `network v1` format.

    Lines: `relation P arity=1 parents=Q,R`, `theta P(x) = <formula>` (the
    variable list is optional), and `let name(vars) = closed{...};` macros
    usable in later thetas.  A line ending in a backslash continues.
    """
    lines = [ln.strip() for ln in text.replace("\\\n", " ").splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != "network v1":
        raise FormulaSyntaxError(0, "'network v1' header", text)
    rels, raw, tvars, lets = [], {}, {}, []
    for ln in lines[1:]:
        if ln.startswith("relation"):
            m = _REL.match(ln)
            if not m:
                raise FormulaSyntaxError(0, "relation NAME arity=K parents=A,B", ln)
            ps = [p.strip() for p in m.group(3).split(",") if p.strip()]
            rels.append((m.group(1), int(m.group(2)), ps))
        elif ln.startswith("theta"):
            m = _THETA.match(ln)
            if not m:
                raise FormulaSyntaxError(0, "theta NAME = formula", ln)
            raw[m.group(1)] = m.group(3)
            if m.group(2) is not None:
                tvars[m.group(1)] = [v.strip() for v in m.group(2).split(",") if v.strip()]
        elif ln.startswith("let"):
            lets.append(ln)
        else:
            raise FormulaSyntaxError(0, "relation, theta or let", ln)
    sig = Signature(tuple((n, k) for n, k, _ in rels))
    macros = parse_macros("\n".join(lets), sig, registry) if lets else {}
    missing = [n for n, _, _ in rels if n not in raw]
    if missing:
        raise IllegalSymbolInTheta(f"no theta for {missing}")
    extra = set(raw) - {n for n, _, _ in rels}
    if extra:
        raise IllegalSymbolInTheta(f"theta for undeclared symbols {sorted(extra)}")
    return make_network(rels, raw, tvars, registry, macros)


def dumps_network(net: Network) -> str:
    out = ["network v1"]
    for r in net.order:
        out.append(f"relation {r} arity={net.signature.arity(r)} parents={','.join(net.parents[r])}")
    for r in net.order:
        out.append(f"theta {r}({', '.join(net.theta_vars[r])}) = {render(net.theta[r])}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# exact tables


@dataclass
class WorldTable:
    """The full distribution: worlds as bitmasks over `tuples`, with probabilities."""

    tree: Tree
    network: Network
    tuples: list[tuple[str, tuple[int, ...]]]
    worlds: list[tuple[int, object]]

    @property
    def index(self) -> dict:
        return {t: i for i, t in enumerate(self.tuples)}

    def structure(self, mask: int) -> SigmaStructure:
        interp: dict[str, list] = {r: [] for r in self.network.signature.names()}
        for i, (r, t) in enumerate(self.tuples):
            if mask >> i & 1:
                interp[r].append(t)
        return SigmaStructure(self.tree, self.network.signature, interp)

    def items(self) -> Iterator[tuple[SigmaStructure, object]]:
        for mask, p in self.worlds:
            yield self.structure(mask), p

    def total(self):
        return sum((p for _, p in self.worlds), Fraction(0))

    def marginal(self, name: str, tup: Sequence[int]):
        bit = self.index[(name, tuple(tup))]
        return sum((p for m, p in self.worlds if m >> bit & 1), Fraction(0))

    def reduct_table(self, names: Iterable[str]) -> dict:
        """Marginal on the reduct to `names`, keyed like SigmaStructure.key()."""
        keep = sorted(set(names))
        bits = [(i, r, t) for i, (r, t) in enumerate(self.tuples) if r in keep]
        out: dict = {}
        for mask, p in self.worlds:
            key = tuple((r, tuple(t for i, rr, t in bits if rr == r and mask >> i & 1)) for r in keep)
            out[key] = out.get(key, Fraction(0)) + p
        return out


def relation_tuples(tree: Tree, net: Network) -> list[tuple[str, tuple[int, ...]]]:
    return [(r, t) for r in net.order for t in product(range(len(tree)), repeat=net.signature.arity(r))]


def _stage_branches(probs) -> list[tuple[int, int, int]]:
    """Joint outcomes of independent bits as (mask, numerator, denominator), zero weights dropped."""
    out = [(0, 1, 1)]
    for bit, q in probs:
        q = Fraction(q)
        if q == 1:
            out = [(m | 1 << bit, n, d) for m, n, d in out]
        elif q != 0:
            a, b = q.numerator, q.denominator
            out = [x for m, n, d in out for x in ((m | 1 << bit, n * a, d * b), (m, n * (b - a), d * b))]
    return out


def exact_distribution(tree: Tree, net: Network, registry: Optional[Registry] = None,
                       max_tuples: int = MAX_EXACT_TUPLES, by_level: bool = True) -> WorldTable:
    """Enumerate all worlds with nonzero probability.

    With by_level=False every symbol is its own stage (one pass over the
    topological order) instead of grouping symbols by level; the table is the
    same either way.
    """
    reg = registry or DEFAULT
    tuples = relation_tuples(tree, net)
    if len(tuples) > max_tuples:
        raise TooLarge(f"{len(tuples)} relation tuples exceed the cap of {max_tuples}")
    index = {t: i for i, t in enumerate(tuples)}
    stages = ([net.at_level(l) for l in range(net.height + 1)] if by_level
              else [[r] for r in net.order])
    table = WorldTable(tree, net, tuples, [(0, Fraction(1))])
    # millions of acyclic tuples: collector passes would only rescan them
    paused = gc.isenabled()
    gc.disable()
    try:
        _expand(table, stages, index, reg)
    finally:
        if paused:
            gc.enable()
    table.worlds.sort()
    return table


def _expand(table: WorldTable, stages, index, reg) -> None:
    tree, net = table.tree, table.network
    for stage in stages:
        nxt: list[tuple[int, object]] = []
        # worlds that give the stage the same theta values share one branch table
        branch_tables: dict[tuple, list[tuple[int, int, int]]] = {}
        for mask, p in table.worlds:
            ev = Evaluator(table.structure(mask), reg)
            probs = []
            for r in stage:
                for t in product(range(len(tree)), repeat=net.signature.arity(r)):
                    probs.append((index[(r, t)], ev.run(net.theta[r], net.theta_env(r, t))))
            key = tuple(probs)
            branches = branch_tables.get(key)
            if branches is None:
                branches = branch_tables[key] = _stage_branches(probs)
            pn, pd = p.numerator, p.denominator
            for bits, wn, wd in branches:
                n, d = pn * wn, pd * wd
                g = gcd(n, d)
                nxt.append((mask | bits, Fraction(n // g, d // g, _normalize=False)))
        table.worlds = nxt


# ---------------------------------------------------------------------------
# sampling


def _stream_key(seed: int, level: int, r_index: int) -> np.ndarray:
    return np.random.SeedSequence([seed, level, r_index]).generate_state(2, np.uint64)


def uniforms(seed: int, level: int, r_index: int, start: int, count: int) -> np.ndarray:
    """Doubles at positions start..start+count-1 of the (seed, level, symbol) stream."""
    block, skip = divmod(start, 4)
    bg = np.random.Philox(key=_stream_key(seed, level, r_index), counter=block)
    raw = bg.random_raw(skip + count)[skip:]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def _tuple_cols(n: int, k: int) -> list[np.ndarray]:
    if k == 0:
        return []
    return [g.ravel() for g in np.indices((n,) * k, dtype=np.int64)]


def _to_structure(tree: Tree, net: Network, bits: Mapping[str, np.ndarray]) -> SigmaStructure:
    n = len(tree)
    interp = {}
    for r, row in bits.items():
        k = net.signature.arity(r)
        interp[r] = (Relation(k, n, dense=row.reshape((n,) * k)) if n ** k <= DENSE_CAP
                     else Relation(k, n, codes=np.flatnonzero(row)))
    return SigmaStructure(tree, net.signature, interp)


def sample_bits(tree: Tree, net: Network, seed: int, start: int = 0, count: int = 1,
                registry: Optional[Registry] = None) -> dict[str, np.ndarray]:
    """Worlds start..start+count-1 as boolean matrices (count, |T|^arity) per symbol.

    Worlds that agree below a level share theta evaluations, which keeps
    large batches on tiny trees cheap.
    """
    n = len(tree)
    bits: dict[str, np.ndarray] = {}
    r_index = {r: i for i, r in enumerate(net.order)}
    for level in range(net.height + 1):
        stage = net.at_level(level)
        sizes = {r: n ** net.signature.arity(r) for r in stage}
        if count * sum(sizes.values()) > MAX_SAMPLE_TUPLES:
            raise TooLarge(f"{count * sum(sizes.values())} tuple draws in one batch")
        done = sorted(bits)
        if done and count > 1:
            rows = np.concatenate([bits[r] for r in done], axis=1)
            uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            offsets = np.cumsum([0] + [bits[r].shape[1] for r in done])
            reps = [{r: uniq[u, offsets[j]:offsets[j + 1]] for j, r in enumerate(done)}
                    for u in range(len(uniq))]
        else:
            inverse = np.zeros(count, dtype=np.int64) if not done else np.arange(count)
            reps = [{r: bits[r][w] for r in done} for w in range(count)] if done else [{}]
        for r in stage:
            k = net.signature.arity(r)
            cols = _tuple_cols(n, k)
            thetas = np.stack([
                batch_evaluate(_to_structure(tree, net, rep), net.theta[r], net.theta_env(r, cols),
                               registry, size=sizes[r])
                for rep in reps])
            u = uniforms(seed, level, r_index[r], start * sizes[r], count * sizes[r])
            bits[r] = u.reshape(count, sizes[r]) < thetas[inverse]
    return bits


def sample(tree: Tree, net: Network, seed: int, index: int = 0,
           registry: Optional[Registry] = None) -> SigmaStructure:
    bits = sample_bits(tree, net, seed, index, 1, registry)
    return _to_structure(tree, net, {r: b[0] for r, b in bits.items()})


def sample_many(tree: Tree, net: Network, seed: int, count: int, start: int = 0,
                registry: Optional[Registry] = None, batch: int = 4096) -> Iterator[SigmaStructure]:
    per_world = sum(len(tree) ** k for _, k in net.signature.relations)
    step = max(1, min(batch, MAX_SAMPLE_TUPLES // max(per_world, 1)))
    for lo in range(start, start + count, step):
        hi = min(start + count, lo + step)
        bits = sample_bits(tree, net, seed, lo, hi - lo, registry)
        for w in range(hi - lo):
            yield _to_structure(tree, net, {r: b[w] for r, b in bits.items()})


# ---------------------------------------------------------------------------
# events


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    count: int


def _zero_one(value) -> bool:
    if value == 1:
        return True
    if value == 0:
        return False
    raise NotZeroOne(f"event formula took the value {value}")


def event_probability(dist: WorldTable, phi: Formula, v: Optional[Mapping[str, int]] = None,
                      given: Optional[Formula] = None, registry: Optional[Registry] = None):
    """Exact P(phi | given) from a world table."""
    reg = registry or DEFAULT
    v = dict(v or {})
    num = den = Fraction(0)
    for A, p in dist.items():
        ev = Evaluator(A, reg)
        if given is not None and not _zero_one(ev.run(given, v)):
            continue
        den += p
        if _zero_one(ev.run(phi, v)):
            num += p
    if den == 0:
        raise InputError("conditioning event has probability 0")
    return num / den


def mc_event_probability(tree: Tree, net: Network, phi: Formula, seed: int, count: int,
                         v: Optional[Mapping[str, int]] = None, given: Optional[Formula] = None,
                         registry: Optional[Registry] = None) -> MCEstimate:
    """Monte Carlo estimate with its standard error.

    Identical sampled worlds are evaluated once, so 10^5 draws on a tiny tree
    cost only as many evaluations as there are distinct worlds.
    """
    v = {k: np.array([a]) for k, a in (v or {}).items()}
    bits = sample_bits(tree, net, seed, 0, count, registry)
    names = sorted(bits)
    if names:
        rows = np.concatenate([bits[r] for r in names], axis=1)
        uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        offsets = np.cumsum([0] + [bits[r].shape[1] for r in names])
    else:
        uniq, inverse, offsets = np.zeros((1, 0), dtype=bool), np.zeros(count, dtype=np.int64), [0]
    hit = np.zeros(len(uniq), dtype=bool)
    keep = np.ones(len(uniq), dtype=bool)
    for u in range(len(uniq)):
        A = _to_structure(tree, net, {r: uniq[u, offsets[j]:offsets[j + 1]] for j, r in enumerate(names)})
        if given is not None:
            keep[u] = batch_evaluate(A, given, v, registry, size=1)[0] >= 1 - 1e-12
        hit[u] = batch_evaluate(A, phi, v, registry, size=1)[0] >= 1 - 1e-12
    mask = keep[inverse]
    m = int(mask.sum())
    if m == 0:
        raise InputError("conditioning event never occurred")
    est = float(hit[inverse][mask].mean())
    return MCEstimate(est, float(np.sqrt(max(est * (1 - est), 0.0) / m)), m)
