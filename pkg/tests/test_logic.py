import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plastar.errors import (ArityMismatch, FormulaSyntaxError, RebindingBoundVar, UnboundVariable,
                            UnknownSymbol)
from plastar.logic.ctprobe import ct_probe, ct_sequence
from plastar.logic.evaluate import evaluate
from plastar.logic.formula import TOP, Agg, Atom, Conn, Const, Eq, render, symbols
from plastar.logic.parser import parse, parse_macros
from plastar.logic.registry import DEFAULT
from plastar.logic.vector import batch_evaluate
from plastar.structures import SigmaStructure
from plastar.trees import Signature, build_tree

from oracles import World, close, random_formula, random_tree, random_world, ref_eval

SIG = [("P", 1), ("S", 2)]


def to_structure(W: World, sig=SIG) -> SigmaStructure:
    return SigmaStructure(build_tree(W.parents), Signature(tuple(sig)),
                          {r: sorted(W.rels.get(r, ())) for r, _ in sig})


# -- parser -----------------------------------------------------------------


def test_parse_examples():
    assert parse("0.5") == Const(Fraction(1, 2))
    assert parse("not(E(x,y))") == Conn("not", (Atom("E", ("x", "y")),))
    sig = Signature((("R", 2),))
    macros = parse_macros("let child(x,y) = closed{exists r; E(r,x); E(x,y)};", sig)
    f = parse("am( R(x,y) : y : child(x,y) )", sig, None, macros)
    assert isinstance(f, Agg) and f.name == "am" and f.bound == ("y",)
    assert f.inner == (Atom("R", ("x", "y")),)


@pytest.mark.parametrize("text, err", [
    ("am(P(x) : x)", FormulaSyntaxError),
    ("Q(x)", UnknownSymbol),
    ("S(x)", ArityMismatch),
    ("am(am(P(x) : x : 1) : x : 1)", RebindingBoundVar),
    ("1.5", FormulaSyntaxError),
    ("implies(1, 1, 1)", ArityMismatch),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse(text, Signature(tuple(SIG)))


def test_quantifier_sugar():
    assert parse("exists y (E(x,y))") == Agg("max", (Atom("E", ("x", "y")),), ("y",), (TOP,))
    assert parse("forall y (E(x,y))").name == "min"


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_render_parse_round_trip(seed):
    f = random_formula(random.Random(seed), SIG, 4, ["x", "y"])
    assert parse(render(f), Signature(tuple(SIG))) == f


# -- evaluation ---------------------------------------------------------------


def test_evaluate_examples():
    t = build_tree([None, 0, 0])
    A = SigmaStructure(t, Signature((("R", 1),)), {"R": [(1,)]})
    assert evaluate(A, parse("implies(0.8, 0.5)")) == Fraction(7, 10)
    sig = Signature((("R", 1),))
    m = parse_macros("let childOfRoot(y) = closed{exists r; E(r,y)};", sig)
    assert evaluate(A, parse("am(R(y) : y : childOfRoot(y))", sig, None, m)) == Fraction(1, 2)
    assert evaluate(A, parse("am(R(y) : y : not(y = y))", sig)) == 0
    assert evaluate(A, parse("exists y (E(x,y))"), {"x": 0}) == 1
    assert evaluate(A, parse("forall y (not(E(y,x)))"), {"x": 0}) == 1
    with pytest.raises(UnboundVariable):
        evaluate(A, parse("R(x)", sig))


def test_builtin_aggregations():
    F = DEFAULT.aggregation
    q = Fraction(1, 4)
    assert F("gm").fn([[q, q]]) == q
    assert F("lengthpow").fn([[q] * 4]) == q
    assert F("noisy-or").fn([[Fraction(1, 2)] * 2]) == Fraction(3, 4)
    assert F("am").ct_limit([[(Fraction(0), Fraction(1, 2)), (Fraction(1), Fraction(1, 2))]]) == Fraction(1, 2)
    assert F("max").ct_limit([[(Fraction(1, 3), Fraction(1))]]) == Fraction(1, 3)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_evaluate_matches_reference(seed):
    rng = random.Random(seed)
    W = random_world(rng, random_tree(rng, 6, 2), SIG)
    f = random_formula(rng, SIG, 3, ["x"])
    v = {"x": rng.randrange(W.n)}
    got = evaluate(to_structure(W), f, v)
    assert close(got, ref_eval(W, f, v))
    assert 0 <= got <= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_relabelling_invariance(seed):
    """Renumbering the nodes permutes the enumeration order of every aggregation."""
    rng = random.Random(seed)
    W = random_world(rng, random_tree(rng, 6, 2), SIG)
    f = random_formula(rng, SIG, 3, [])
    perm = list(range(W.n))
    rng.shuffle(perm)
    inv = {perm[a]: a for a in range(W.n)}
    parents = [None if W.parents[inv[b]] is None else perm[W.parents[inv[b]]] for b in range(W.n)]
    rels = {r: {tuple(perm[a] for a in t) for t in ts} for r, ts in W.rels.items() if r != "E"}
    a = evaluate(to_structure(W), f)
    b = evaluate(to_structure(World(parents, rels)), f)
    assert close(a, b, 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_unused_symbols_do_not_change_values(seed):
    """Symbols a formula does not use cannot change its value."""
    rng = random.Random(seed)
    W = random_world(rng, random_tree(rng, 6, 2), SIG + [("Q", 1)])
    f = random_formula(rng, SIG, 3, ["x"])
    v = {"x": rng.randrange(W.n)}
    full = SigmaStructure(build_tree(W.parents), Signature((("P", 1), ("S", 2), ("Q", 1))),
                          {r: sorted(W.rels[r]) for r in ("P", "S", "Q")})
    used = sorted(symbols(f) - {"E"})
    sub = Signature(tuple((r, k) for r, k in SIG if r in used))
    reduct = SigmaStructure(build_tree(W.parents), sub, {r: sorted(W.rels[r]) for r in used})
    assert evaluate(full, f, v) == evaluate(reduct, f, v)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_batch_matches_exact(seed):
    rng = random.Random(seed)
    W = random_world(rng, random_tree(rng, 7, 2), SIG)
    A = to_structure(W)
    f = random_formula(rng, SIG, 3, ["x", "y"])
    xs = np.repeat(np.arange(W.n), W.n)
    ys = np.tile(np.arange(W.n), W.n)
    got = batch_evaluate(A, f, {"x": xs, "y": ys})
    want = [float(evaluate(A, f, {"x": int(a), "y": int(b)})) for a, b in zip(xs, ys)]
    assert np.allclose(got, want, atol=1e-12, rtol=0)


def test_batch_guided_by_closure_type():
    """A trivially conditioned max over a closure-type conjunct only visits the type's witnesses."""
    sig = Signature((("R", 1),))
    m = parse_macros("let p(x,y) = closed{exists r; E(r,x); E(x,y)};", sig)
    f = parse("exists x (and(p(x,y), R(x)))", sig, None, m)
    t = build_tree([None, 0, 0, 1, 1, 2])
    A = SigmaStructure(t, sig, {"R": [(1,)]})
    got = batch_evaluate(A, f, {"y": np.arange(6)})
    want = [float(evaluate(A, f, {"y": b})) for b in range(6)]
    assert got.tolist() == want == [0, 0, 0, 1, 1, 0]


# -- convergence-testing probes ---------------------------------------------


def test_ct_sequence_shape():
    rng = np.random.default_rng(0)
    params = [(Fraction(1, 4), Fraction(1, 2)), (Fraction(3, 4), Fraction(1, 2))]
    seq = ct_sequence(params, 10_000, rng)
    assert len(seq) == 10_000 and all(0 <= x <= 1 for x in seq)
    assert abs(np.mean(seq) - 0.5) < 0.05


def test_ct_probe_examples():
    mx = DEFAULT.aggregation("max")
    res = ct_probe(mx, [[(Fraction(0), Fraction(1)), (Fraction(1), Fraction(0))]], trials=20, seed=1)
    assert res.discrepancy == 1
    am = ct_probe(DEFAULT.aggregation("am"), [[(Fraction(1, 3), Fraction(1, 2)), (Fraction(1), Fraction(1, 2))]],
                  trials=10, seed=2)
    assert am.discrepancy <= 0.02 and am.limit_error <= 0.02
    lp = ct_probe(DEFAULT.aggregation("lengthpow"), [[(Fraction(1, 2), Fraction(1))]], trials=5, seed=3)
    assert lp.discrepancy <= 1e-4 and lp.limit_error <= 1e-4
