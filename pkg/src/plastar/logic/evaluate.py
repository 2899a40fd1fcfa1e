"""Exact evaluation of PLA* formulas on finite structures."""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Optional

from ..closure import embeddings
from ..errors import SignatureMismatch, UnboundVariable
from ..structures import Structure
from ..trees import TREE_SYMBOL
from .formula import Agg, Atom, Conn, Const, Eq, Formula, Num, TypeAtom
from .registry import DEFAULT, Registry

ONE, ZERO = Fraction(1), Fraction(0)


def evaluate(A: Structure, phi: Formula, v: Optional[Mapping[str, int]] = None,
             registry: Optional[Registry] = None) -> Num:
    v = dict(v or {})
    missing = phi.free_vars - set(v)
    if missing:
        raise UnboundVariable(f"no value for {sorted(missing)}")
    for x, a in v.items():
        if not 0 <= a < A.size:
            raise UnboundVariable(f"{x} = {a} is not an element of the structure")
    return Evaluator(A, registry or DEFAULT).run(phi, v)


def witness_candidates(A: Structure, chi: Formula, bound: tuple[str, ...],
                       v: Mapping[str, int]) -> tuple[Iterable[tuple[int, ...]], bool]:
    """Tuples for `bound` that may satisfy chi, and whether they surely do.

    When chi is a closure-type atom (or a conjunction containing one) that
    mentions every bound variable, only embeddings of that type are tried.
    """
    if A.tree is not None:
        atoms = [chi] if isinstance(chi, TypeAtom) else (
            [a for a in chi.args if isinstance(a, TypeAtom)]
            if isinstance(chi, Conn) and chi.name == "and" else [])
        for atom in atoms:
            if set(bound) <= set(atom.args):
                fixed = {i: v[x] for i, x in enumerate(atom.args) if x not in bound}
                pos = {y: atom.args.index(y) for y in bound}
                out = set()
                for nodes in embeddings(atom.ctype, A, fixed):
                    if all(nodes[atom.args.index(x)] == nodes[i] for i, x in enumerate(atom.args)):
                        out.add(tuple(nodes[pos[y]] for y in bound))
                return sorted(out), atom is chi
    return product(range(A.size), repeat=len(bound)), False


class Evaluator:
    """Exact evaluator bound to one structure; aggregation values are memoised."""

    def __init__(self, A: Structure, reg: Registry):
        self.A = A
        self.reg = reg
        self.memo: dict = {}

    def run(self, f: Formula, v: dict) -> Num:
        if isinstance(f, Const):
            return f.value
        if isinstance(f, Eq):
            return ONE if self.val(v, f.left) == self.val(v, f.right) else ZERO
        if isinstance(f, Atom):
            if f.symbol != TREE_SYMBOL and f.symbol not in self.A.signature:
                raise SignatureMismatch(f"{f.symbol} is not in the structure's signature")
            return ONE if self.A.holds(f.symbol, tuple(self.val(v, x) for x in f.args)) else ZERO
        if isinstance(f, TypeAtom):
            return ONE if f.ctype.holds_at(self.A, [self.val(v, x) for x in f.args]) else ZERO
        if isinstance(f, Conn):
            conn = self.reg.connective(f.name, f.params)
            return conn.fn([self.run(a, v) for a in f.args])
        if isinstance(f, Agg):
            key = (id(f), tuple(sorted((x, v[x]) for x in f.free_vars)))
            if key not in self.memo:
                self.memo[key] = self.aggregate(f, v)
            return self.memo[key]
        raise TypeError(f"not a formula: {f!r}")

    @staticmethod
    def val(v: dict, x: str) -> int:
        try:
            return v[x]
        except KeyError:
            raise UnboundVariable(f"variable {x} is unbound") from None

    def aggregate(self, f: Agg, v: dict) -> Num:
        F = self.reg.aggregation(f.name, f.params)
        seqs = []
        for phi, chi in zip(f.inner, f.cond):
            cands, sure = witness_candidates(self.A, chi, f.bound, v)
            seq = []
            w = dict(v)
            for b in cands:
                w.update(zip(f.bound, b))
                if sure or self.run(chi, w) == 1:
                    seq.append(self.run(phi, w))
            if not seq:
                return ZERO
            seqs.append(seq)
        return F.fn(seqs)
