"""First-order formulas and their 0/1-valued embedding into PLA*."""

from __future__ import annotations

from dataclasses import dataclass

from .formula import TOP, Agg, Atom, Conn, Eq, Formula


class FO:
    pass


@dataclass(frozen=True)
class FOAtom(FO):
    symbol: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class FOEq(FO):
    left: str
    right: str


@dataclass(frozen=True)
class FONot(FO):
    arg: FO


@dataclass(frozen=True)
class FOAnd(FO):
    args: tuple[FO, ...]


@dataclass(frozen=True)
class FOOr(FO):
    args: tuple[FO, ...]


@dataclass(frozen=True)
class FOImplies(FO):
    left: FO
    right: FO


@dataclass(frozen=True)
class FOExists(FO):
    var: str
    body: FO


@dataclass(frozen=True)
class FOForall(FO):
    var: str
    body: FO


def embed_fo(f: FO) -> Formula:
    """Quantifiers become max/min over the trivial condition; connectives keep their names."""
    if isinstance(f, FOAtom):
        return Atom(f.symbol, tuple(f.args))
    if isinstance(f, FOEq):
        return Eq(f.left, f.right)
    if isinstance(f, FONot):
        return Conn("not", (embed_fo(f.arg),))
    if isinstance(f, FOAnd):
        return Conn("and", tuple(embed_fo(a) for a in f.args))
    if isinstance(f, FOOr):
        return Conn("or", tuple(embed_fo(a) for a in f.args))
    if isinstance(f, FOImplies):
        return Conn("implies", (embed_fo(f.left), embed_fo(f.right)))
    if isinstance(f, FOExists):
        return Agg("max", (embed_fo(f.body),), (f.var,), (TOP,))
    if isinstance(f, FOForall):
        return Agg("min", (embed_fo(f.body),), (f.var,), (TOP,))
    raise TypeError(f"not a first-order formula: {f!r}")
