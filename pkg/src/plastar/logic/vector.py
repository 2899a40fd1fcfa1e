"""Vectorised float evaluation over batches of valuations.

The exact evaluator is the reference; this one trades exact rationals for
numpy speed so that Monte Carlo experiments on large trees stay cheap.  A
valuation batch is a dict of equally long node-id arrays.  Conditioning sets
given by closure-type atoms are enumerated by walking the tree arrays, so an
aggregation touches only its witnesses.
"""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from ..closure import ClosureType
from ..errors import SignatureMismatch, TooLarge, UnboundVariable
from ..structures import Structure
from ..trees import TREE_SYMBOL
from .formula import Agg, Atom, Conn, Const, Eq, Formula, TypeAtom
from .registry import DEFAULT, Registry

ONE_TOL = 1e-12
MAX_ROWS = 20_000_000


def batch_evaluate(A: Structure, phi: Formula, env: Mapping[str, np.ndarray],
                   registry: Optional[Registry] = None, size: Optional[int] = None) -> np.ndarray:
    env = {k: np.asarray(v, dtype=np.int64) for k, v in env.items()}
    if size is None:
        size = len(next(iter(env.values()))) if env else 1
    missing = phi.free_vars - set(env)
    if missing:
        raise UnboundVariable(f"no values for {sorted(missing)}")
    return _run(A, phi, env, size, registry or DEFAULT)


def _run(A: Structure, f: Formula, env: dict, size: int, reg: Registry) -> np.ndarray:
    if isinstance(f, Const):
        return np.full(size, float(f.value))
    if isinstance(f, Eq):
        return (env[f.left] == env[f.right]).astype(float)
    if isinstance(f, Atom):
        if f.symbol != TREE_SYMBOL and f.symbol not in A.signature:
            raise SignatureMismatch(f"{f.symbol} is not in the structure's signature")
        return A.holds_batch(f.symbol, [env[x] for x in f.args]).astype(float)
    if isinstance(f, TypeAtom):
        return type_holds_batch(f.ctype, A, [env[x] for x in f.args]).astype(float)
    if isinstance(f, Conn):
        conn = reg.connective(f.name, f.params)
        args = [_run(A, a, env, size, reg) for a in f.args]
        if conn.batch is not None:
            return np.asarray(conn.batch(args), dtype=float)
        return np.array([float(conn.fn(xs)) for xs in zip(*args)], dtype=float).reshape(size)
    if isinstance(f, Agg):
        return _aggregate(A, f, env, size, reg)
    raise TypeError(f"not a formula: {f!r}")


def _aggregate(A: Structure, f: Agg, env: dict, size: int, reg: Registry) -> np.ndarray:
    F = reg.aggregation(f.name, f.params)
    outer = {k: v for k, v in env.items() if k not in f.bound}
    slots = []
    nonempty = np.ones(size, dtype=bool)
    for phi, chi in zip(f.inner, f.cond):
        guide = _zero_guide(F, phi, chi, A)
        if guide is not None:
            # the tuples outside the guide type have value 0, which F ignores
            rows, cols, _ = witnesses_batch(A, guide, f.bound, outer, size)
            sure = True
        else:
            rows, cols, sure = witnesses_batch(A, chi, f.bound, outer, size)
        sub = {k: v[rows] for k, v in outer.items()}
        sub.update(cols)
        if not sure and len(rows):
            keep = _run(A, chi, sub, len(rows), reg) >= 1 - ONE_TOL
            rows = rows[keep]
            sub = {k: v[keep] for k, v in sub.items()}
        vals = _run(A, phi, sub, len(rows), reg) if len(rows) else np.zeros(0)
        nonempty &= np.bincount(rows, minlength=size) > 0
        slots.append((vals, rows))
    if F.batch is not None:
        out = np.asarray(F.batch(slots, size), dtype=float)
    else:
        out = np.zeros(size)
        for r in np.flatnonzero(nonempty):
            out[r] = float(F.fn([vals[rows == r].tolist() for vals, rows in slots]))
    return np.where(nonempty, out, 0.0)


def _zero_guide(F, phi: Formula, chi: Formula, A: Structure) -> Optional[TypeAtom]:
    """A closure-type conjunct of phi that may replace a trivial condition."""
    if not (F.zero_neutral and isinstance(chi, Const) and chi.value == 1 and A.tree is not None):
        return None
    if isinstance(phi, TypeAtom):
        return phi
    if isinstance(phi, Conn) and phi.name == "and":
        for a in phi.args:
            if isinstance(a, TypeAtom):
                return a
    return None


def _anchor(ct: ClosureType, A: Structure, fixed: dict[int, np.ndarray], n: int):
    """Slot nodes forced by the fixed positions; returns (slot arrays, valid mask)."""
    tree = A.tree
    anc = tree.ancestor_table()
    depths = ct.depths
    slot_nodes: list[Optional[np.ndarray]] = [None] * ct.nslots
    valid = np.ones(n, dtype=bool)
    for i, nodes in fixed.items():
        s = ct.var_slots[i]
        if depths[s] > tree.height:
            valid[:] = False
            continue
        valid &= tree.level[nodes] == depths[s]
        for t in ct.chain(s):
            up = anc[depths[t], nodes]
            if slot_nodes[t] is None:
                slot_nodes[t] = up
            else:
                valid &= slot_nodes[t] == up
    if slot_nodes[0] is None:
        slot_nodes[0] = np.full(n, tree.root, dtype=np.int64)
    return slot_nodes, valid


def _finish(ct: ClosureType, A: Structure, slot_nodes: list, valid: np.ndarray) -> np.ndarray:
    depths = ct.depths
    for s in range(ct.nslots):
        for t in range(s + 1, ct.nslots):
            if depths[s] == depths[t]:
                valid &= slot_nodes[s] != slot_nodes[t]
    for name, tup, sign in sorted(ct.literals):
        valid &= A.holds_batch(name, [slot_nodes[s] for s in tup]) == sign
    return valid


def type_holds_batch(ct: ClosureType, A: Structure, cols: list[np.ndarray]) -> np.ndarray:
    if A.tree is None:
        raise SignatureMismatch("closure types need a tree-based structure")
    n = len(cols[0]) if cols else 1
    slot_nodes, valid = _anchor(ct, A, dict(enumerate(cols)), n)
    slot_nodes = [np.where(valid, s, 0) for s in slot_nodes]
    return _finish(ct, A, slot_nodes, valid)


def witnesses_batch(A: Structure, chi: Formula, bound: tuple[str, ...], env: dict, size: int):
    """(row ids, bound columns, surely satisfied) for the candidates of chi."""
    if A.tree is not None:
        atoms = [chi] if isinstance(chi, TypeAtom) else (
            [a for a in chi.args if isinstance(a, TypeAtom)]
            if isinstance(chi, Conn) and chi.name == "and" else [])
        for atom in atoms:
            if set(bound) <= set(atom.args):
                rows, cols = _embed_batch(atom, A, bound, env, size)
                return rows, cols, atom is chi
    n = A.size
    total = size * n ** len(bound)
    if total > MAX_ROWS:
        raise TooLarge(f"{total} candidate tuples; condition on a closure type to enumerate less")
    rows = np.repeat(np.arange(size), n ** len(bound))
    grid = np.indices((n,) * len(bound)).reshape(len(bound), -1)
    cols = {y: np.tile(grid[j], size) for j, y in enumerate(bound)}
    return rows, cols, False


def _embed_batch(atom: TypeAtom, A: Structure, bound: tuple[str, ...], env: dict, size: int):
    ct = atom.ctype
    tree = A.tree
    fixed = {i: env[x] for i, x in enumerate(atom.args) if x not in bound}
    slot_nodes, valid = _anchor(ct, A, fixed, size)
    rows = np.flatnonzero(valid)
    slot_nodes = [None if s is None else s[rows] for s in slot_nodes]
    for s in range(ct.nslots):
        if slot_nodes[s] is not None:
            continue
        par = slot_nodes[ct.parents[s]]
        start = tree.child_ptr[par]
        counts = tree.child_ptr[par + 1] - start
        total = int(counts.sum())
        if total > MAX_ROWS:
            raise TooLarge(f"{total} witness tuples")
        rep = np.repeat(np.arange(len(rows)), counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        child = tree.child_idx[start[rep] + offs]
        rows = rows[rep]
        slot_nodes = [None if t is None else t[rep] for t in slot_nodes]
        slot_nodes[s] = child
    ok = _finish(ct, A, slot_nodes, np.ones(len(rows), dtype=bool))
    cols = {}
    for i, x in enumerate(atom.args):
        col = slot_nodes[ct.var_slots[i]]
        if x in cols:
            ok &= cols[x] == col
        elif x in bound:
            cols[x] = col
    return rows[ok], {y: c[ok] for y, c in cols.items()}
