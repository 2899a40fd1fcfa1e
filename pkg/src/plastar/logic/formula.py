"""PLA* formula AST.

Nodes are frozen dataclasses; connectives and aggregation functions are
referenced by name (plus numeric parameters) and resolved through a registry
at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Union

Num = Union[Fraction, float]


class Formula:
    @cached_property
    def free_vars(self) -> frozenset[str]:
        return _free(self)

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Const(Formula):
    value: Num


@dataclass(frozen=True)
class Eq(Formula):
    left: str
    right: str


@dataclass(frozen=True)
class Atom(Formula):
    symbol: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Conn(Formula):
    name: str
    args: tuple[Formula, ...]
    params: tuple[Num, ...] = ()


@dataclass(frozen=True)
class Agg(Formula):
    name: str
    inner: tuple[Formula, ...]
    bound: tuple[str, ...]
    cond: tuple[Formula, ...]
    params: tuple[Num, ...] = ()

    def __post_init__(self):
        if not self.inner or len(self.inner) != len(self.cond):
            raise ValueError("aggregation needs as many conditioning formulas as inner formulas")
        if len(set(self.bound)) != len(self.bound) or not self.bound:
            raise ValueError("bound variables must be distinct and nonempty")


@dataclass(frozen=True)
class TypeAtom(Formula):
    """A closure type applied to variables; 0/1-valued."""

    ctype: object          # closure.ClosureType
    args: tuple[str, ...]


TOP = Const(Fraction(1))
BOTTOM = Const(Fraction(0))


def _free(f: Formula) -> frozenset[str]:
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, Eq):
        return frozenset((f.left, f.right))
    if isinstance(f, (Atom, TypeAtom)):
        return frozenset(f.args)
    if isinstance(f, Conn):
        return frozenset().union(*(a.free_vars for a in f.args))
    if isinstance(f, Agg):
        # Conditioning formulas count too: their variables must be bound by
        # the valuation just like those of the inner formulas.
        inside = frozenset().union(*(a.free_vars for a in f.inner + f.cond))
        return inside - set(f.bound)
    raise TypeError(f"not a formula: {f!r}")


def subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    if isinstance(f, Conn):
        for a in f.args:
            yield from subformulas(a)
    elif isinstance(f, Agg):
        for a in f.inner + f.cond:
            yield from subformulas(a)


def symbols(f: Formula) -> set[str]:
    out = set()
    for g in subformulas(f):
        if isinstance(g, Atom):
            out.add(g.symbol)
        elif isinstance(g, TypeAtom):
            out.update(r for r, _, _ in g.ctype.literals)
    return out


def aggregations(f: Formula) -> list[Agg]:
    return [g for g in subformulas(f) if isinstance(g, Agg)]


def is_aggregation_free(f: Formula) -> bool:
    return not aggregations(f)


def depth(f: Formula) -> int:
    if isinstance(f, Conn):
        return 1 + max((depth(a) for a in f.args), default=0)
    if isinstance(f, Agg):
        return 1 + max(depth(a) for a in f.inner + f.cond)
    return 0


def fmt_num(x: Num) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _head(name: str, params: tuple) -> str:
    if not params:
        return name
    return f"{name}({', '.join(fmt_num(p) for p in params)})"


def render(f: Formula) -> str:
    if isinstance(f, Const):
        return fmt_num(f.value)
    if isinstance(f, Eq):
        return f"{f.left} = {f.right}"
    if isinstance(f, Atom):
        return f"{f.symbol}({', '.join(f.args)})"
    if isinstance(f, Conn):
        return f"{_head(f.name, f.params)}({', '.join(render(a) for a in f.args)})"
    if isinstance(f, Agg):
        inner = ", ".join(render(a) for a in f.inner)
        cond = ", ".join(render(a) for a in f.cond)
        return f"{_head(f.name, f.params)}({inner} : {', '.join(f.bound)} : {cond})"
    if isinstance(f, TypeAtom):
        return f.ctype.render(f.args)
    raise TypeError(f"not a formula: {f!r}")


def rename(f: Formula, mapping: dict[str, str]) -> Formula:
    """Rename free variables (bound ones are left alone)."""
    if not mapping:
        return f
    if isinstance(f, Const):
        return f
    if isinstance(f, Eq):
        return Eq(mapping.get(f.left, f.left), mapping.get(f.right, f.right))
    if isinstance(f, Atom):
        return Atom(f.symbol, tuple(mapping.get(a, a) for a in f.args))
    if isinstance(f, TypeAtom):
        return TypeAtom(f.ctype, tuple(mapping.get(a, a) for a in f.args))
    if isinstance(f, Conn):
        return Conn(f.name, tuple(rename(a, mapping) for a in f.args), f.params)
    if isinstance(f, Agg):
        inner_map = {k: v for k, v in mapping.items() if k not in f.bound}
        return Agg(f.name, tuple(rename(a, inner_map) for a in f.inner), f.bound,
                   tuple(rename(a, inner_map) for a in f.cond), f.params)
    raise TypeError(f"not a formula: {f!r}")
