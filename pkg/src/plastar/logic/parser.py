"""Recursive-descent parser for PLA* formulas.

    formula := const | var '=' var | NAME '(' vars ')' | CONN '(' formula,* ')'
             | AGG '(' formula,+ ':' var+ ':' formula,+ ')'
             | 'exists' var+ '(' formula ')' | 'forall' var+ '(' formula ')'
             | 'closed' '{' ['exists' var,+ ';'] item (';' item)* '}'
    const   := 1/3 | 0.25 | 1
    item    := ['!'] NAME '(' vars ')' | var '=' var | var

Connectives and aggregations may carry numeric parameters:
`lengthpow(1/2)(x = x : y : E(x, y))`.  A text may start with macro
definitions `let child1(x, y) = closed{...};`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from ..closure import ClosureType, from_literals
from ..errors import (ArityMismatch, FormulaSyntaxError, InvalidType, RebindingBoundVar,
                      UnknownSymbol)
from ..trees import TREE_SYMBOL, Signature
from .formula import TOP, Agg, Atom, Conn, Const, Eq, Formula, TypeAtom
from .registry import DEFAULT, Registry

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_']*(?:-[A-Za-z][A-Za-z0-9_']*)*)
  | (?P<op>[(){}:;,=!/\-])
""", re.VERBOSE)

KEYWORDS = {"exists", "forall", "closed", "let"}


@dataclass(frozen=True)
class Macro:
    params: tuple[str, ...]
    ctype: ClosureType
    order: tuple[int, ...]      # ctype outer position i takes params[order[i]]


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaSyntaxError(pos, "a token", text)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, signature: Optional[Signature], registry: Registry,
                 macros: Mapping[str, Macro]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.sig = signature
        self.reg = registry
        self.macros = dict(macros)
        self.arities: dict[str, int] = {TREE_SYMBOL: 2}

    # -- token helpers ---------------------------------------------------

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value: str, k: int = 0) -> bool:
        kind, v, _ = self.peek(k)
        return v == value and kind in ("op", "name")

    def expect(self, value: str):
        kind, v, pos = self.peek()
        if v != value or kind == "num":
            raise FormulaSyntaxError(pos, repr(value), self.text)
        self.i += 1

    def name(self, what: str = "a name") -> str:
        kind, v, pos = self.peek()
        if kind != "name":
            raise FormulaSyntaxError(pos, what, self.text)
        self.i += 1
        return v

    def var(self) -> str:
        kind, v, pos = self.peek()
        if kind != "name" or v in KEYWORDS:
            raise FormulaSyntaxError(pos, "a variable", self.text)
        self.i += 1
        return v

    def number(self) -> Fraction:
        neg = False
        if self.at("-"):
            neg = True
            self.i += 1
        kind, v, pos = self.peek()
        if kind != "num":
            raise FormulaSyntaxError(pos, "a number", self.text)
        self.i += 1
        x = Fraction(v)
        if self.at("/"):
            self.i += 1
            kind, d, pos = self.peek()
            if kind != "num":
                raise FormulaSyntaxError(pos, "a denominator", self.text)
            self.i += 1
            if Fraction(d) == 0:
                raise FormulaSyntaxError(pos, "a nonzero denominator", self.text)
            x = x / Fraction(d)
        return -x if neg else x

    # -- grammar -------------------------------------------------------

    def document(self) -> Formula:
        while self.at("let"):
            self.let()
        f = self.formula(frozenset())
        if self.peek()[0] != "eof":
            raise FormulaSyntaxError(self.peek()[2], "end of input", self.text)
        return f

    def let(self):
        self.expect("let")
        name = self.name("a macro name")
        self.expect("(")
        params = self.var_list(")")
        self.expect(")")
        self.expect("=")
        pos = self.peek()[2]
        body = self.formula(frozenset())
        if not isinstance(body, TypeAtom) or set(body.args) != set(params) or len(set(params)) != len(params):
            raise FormulaSyntaxError(pos, f"a closed{{...}} body over exactly {params}", self.text)
        self.expect(";")
        self.macros[name] = Macro(tuple(params), body.ctype,
                                  tuple(params.index(a) for a in body.args))

    def var_list(self, stop: str) -> list[str]:
        out = [self.var()]
        while not self.at(stop):
            if self.at(","):
                self.i += 1
            out.append(self.var())
        return out

    def formula(self, ctx: frozenset) -> Formula:
        kind, v, pos = self.peek()
        if kind == "num" or v == "-":
            return Const(self.check_unit(self.number(), pos))
        if kind != "name":
            raise FormulaSyntaxError(pos, "a formula", self.text)
        if v in ("exists", "forall") and self.peek(1)[0] == "name":
            return self.quantifier(ctx)
        if v == "closed" and self.at("{", 1):
            self.i += 1
            return self.closed()
        if self.at("=", 1):
            left = self.var()
            self.i += 1
            return Eq(left, self.var())
        self.i += 1
        if not self.at("("):
            raise FormulaSyntaxError(self.peek()[2], "'(' or '='", self.text)
        if v in self.reg.connectives:
            params = self.params()
            return self.connective(v, params, ctx)
        if v in self.reg.aggregations:
            params = self.params()
            return self.aggregation(v, params, ctx, pos)
        if v in self.macros:
            return self.macro_call(v, pos)
        return self.atom(v, pos)

    def check_unit(self, x: Fraction, pos: int) -> Fraction:
        if not 0 <= x <= 1:
            raise FormulaSyntaxError(pos, "a constant in [0,1]", self.text)
        return x

    def params(self) -> tuple:
        """Optional numeric parameter list `(p, ...)` followed by another '('."""
        save = self.i
        try:
            self.expect("(")
            vals = [self.number()]
            while self.at(","):
                self.i += 1
                vals.append(self.number())
            self.expect(")")
            if self.at("("):
                return tuple(vals)
        except FormulaSyntaxError:
            pass
        self.i = save
        return ()

    def connective(self, name: str, params: tuple, ctx: frozenset) -> Formula:
        conn = self.reg.connective(name, params)
        pos = self.peek()[2]
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.formula(ctx))
            while self.at(","):
                self.i += 1
                args.append(self.formula(ctx))
        self.expect(")")
        if (conn.arity is not None and len(args) != conn.arity) or not args:
            raise ArityMismatch(f"{name} at {pos} expects {conn.arity or '>= 1'} arguments, got {len(args)}")
        return Conn(name, tuple(args), params)

    def aggregation(self, name: str, params: tuple, ctx: frozenset, pos: int) -> Formula:
        agg = self.reg.aggregation(name, params)
        self.expect("(")
        # bound variables are only known after the first ':', so parse the
        # inner formulas once to find the colon, then again with the context
        start = self.i
        depth = 0
        while True:
            kind, v, p = self.peek()
            if kind == "eof":
                raise FormulaSyntaxError(p, "':'", self.text)
            if v in "({" and kind == "op":
                depth += 1
            elif v in ")}" and kind == "op":
                depth -= 1
            elif v == ":" and depth == 0:
                break
            self.i += 1
        self.i += 1
        bound = self.var_list(":")
        self.expect(":")
        for y in bound:
            if y in ctx:
                raise RebindingBoundVar(f"{y} is already bound by an enclosing aggregation")
        if len(set(bound)) != len(bound):
            raise RebindingBoundVar(f"repeated bound variable in {bound}")
        inner_ctx = ctx | set(bound)
        after_bound = self.i
        self.i = start
        inner = [self.formula(inner_ctx)]
        while self.at(","):
            self.i += 1
            inner.append(self.formula(inner_ctx))
        self.expect(":")
        self.i = after_bound
        cond = [self.formula(inner_ctx)]
        while self.at(","):
            self.i += 1
            cond.append(self.formula(inner_ctx))
        self.expect(")")
        if len(inner) != len(cond):
            raise ArityMismatch(f"{name} at {pos}: {len(inner)} inner vs {len(cond)} conditioning formulas")
        if len(inner) != agg.arity:
            raise ArityMismatch(f"{name} at {pos} aggregates {agg.arity} sequence(s), got {len(inner)}")
        return Agg(name, tuple(inner), tuple(bound), tuple(cond), params)

    def quantifier(self, ctx: frozenset) -> Formula:
        kw = self.name()
        bound = []
        while self.peek()[0] == "name":
            bound.append(self.var())
            if self.at(","):
                self.i += 1
        for y in bound:
            if y in ctx:
                raise RebindingBoundVar(f"{y} is already bound by an enclosing aggregation")
        self.expect("(")
        body = self.formula(ctx | set(bound))
        self.expect(")")
        return Agg("max" if kw == "exists" else "min", (body,), tuple(bound), (TOP,))

    def relation_arity(self, name: str, k: int, pos: int):
        if name == TREE_SYMBOL:
            if k != 2:
                raise ArityMismatch(f"{name} is binary (at {pos})")
            return
        if self.sig is not None:
            if name not in self.sig:
                raise UnknownSymbol(f"unknown relation symbol {name!r} at {pos}")
            if self.sig.arity(name) != k:
                raise ArityMismatch(f"{name} has arity {self.sig.arity(name)}, used with {k} at {pos}")
        elif self.arities.setdefault(name, k) != k:
            raise ArityMismatch(f"{name} used with arities {self.arities[name]} and {k} at {pos}")

    def atom(self, name: str, pos: int) -> Formula:
        self.expect("(")
        args = self.var_list(")")
        self.expect(")")
        self.relation_arity(name, len(args), pos)
        return Atom(name, tuple(args))

    def macro_call(self, name: str, pos: int) -> Formula:
        m = self.macros[name]
        self.expect("(")
        args = self.var_list(")")
        self.expect(")")
        if len(args) != len(m.params):
            raise ArityMismatch(f"macro {name} takes {len(m.params)} arguments (at {pos})")
        return TypeAtom(m.ctype, tuple(args[j] for j in m.order))

    def closed(self) -> Formula:
        start = self.peek()[2]
        self.expect("{")
        existential: list[str] = []
        if self.at("exists"):
            self.i += 1
            existential = self.var_list(";")
            self.expect(";")
        outer: list[str] = []
        edges, eqs, lits = [], [], []
        rels: dict[str, int] = {}

        def mention(v):
            if v not in existential and v not in outer:
                outer.append(v)

        while True:
            neg = False
            if self.at("!"):
                self.i += 1
                neg = True
            kind, v, pos = self.peek()
            if self.at("(", 1):
                self.i += 1
                self.expect("(")
                args = self.var_list(")")
                self.expect(")")
                self.relation_arity(v, len(args), pos)
                for a in args:
                    mention(a)
                if v == TREE_SYMBOL:
                    edges.append((args[0], args[1], not neg))
                else:
                    rels[v] = len(args)
                    lits.append((v, args, not neg))
            elif not neg and self.at("=", 1):
                a = self.var()
                self.i += 1
                b = self.var()
                mention(a)
                mention(b)
                eqs.append((a, b))
            elif not neg and kind == "name":
                mention(self.var())
            else:
                raise FormulaSyntaxError(pos, "a literal", self.text)
            if self.at(";"):
                self.i += 1
                if self.at("}"):
                    break
                continue
            break
        self.expect("}")
        relations = self.sig.relations if self.sig is not None else tuple(rels.items())
        try:
            ct = from_literals(outer, existential, edges, eqs, lits, relations)
        except InvalidType as e:
            raise FormulaSyntaxError(start, f"a consistent closure type ({e})", self.text) from None
        return TypeAtom(ct, tuple(outer))


def parse(text: str, signature: Optional[Signature] = None, registry: Optional[Registry] = None,
          macros: Optional[Mapping[str, Macro]] = None) -> Formula:
    return _Parser(text, signature, registry or DEFAULT, macros or {}).document()


def parse_macros(text: str, signature: Optional[Signature] = None,
                 registry: Optional[Registry] = None) -> dict[str, Macro]:
    """Read a block of `let` definitions."""
    p = _Parser(text, signature, registry or DEFAULT, {})
    while p.at("let"):
        p.let()
    if p.peek()[0] != "eof":
        raise FormulaSyntaxError(p.peek()[2], "'let'", text)
    return p.macros
