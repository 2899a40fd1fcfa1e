import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plastar.errors import ArityMismatch, CyclicDependency, IllegalSymbolInTheta, NotZeroOne, TooLarge
from plastar.logic.evaluate import evaluate
from plastar.logic.fo import FOAtom, FOExists, embed_fo
from plastar.logic.parser import parse
from plastar.network import (dumps_network, event_probability, exact_distribution, loads_network,
                             make_network, mc_event_probability, relation_tuples, sample, sample_bits,
                             sample_many, uniforms)
from plastar.trees import build_tree

from oracles import brute_table, random_network, random_tree

TINY = """network v1
relation P arity=1 parents=
let child(x) = closed{exists r; E(r,x)};
theta P(x) = product(child(x), 1/3)
"""


def test_levels_of_the_four_symbol_network():
    net = make_network([("P1", 1, []), ("P2", 1, ["P1"]), ("P3", 1, ["P2"]), ("R", 2, ["P2", "P3"])],
                       {"P1": "1/3", "P2": "exists y (P1(y))", "P3": "P2(x)",
                        "R": "and(P2(x), P3(y))"}, {"P1": ("x",), "P2": ("x",), "R": ("x", "y")})
    assert [net.levels[r] for r in ("P1", "P2", "P3", "R")] == [0, 1, 2, 3]
    assert net.height == 3
    assert make_network([], {}).height == -1


def test_network_validation():
    with pytest.raises(IllegalSymbolInTheta):
        make_network([("A", 1, []), ("B", 1, [])], {"A": "B(x)", "B": "1/2"})
    with pytest.raises(CyclicDependency):
        make_network([("A", 1, ["B"]), ("B", 1, ["A"])], {"A": "B(x)", "B": "A(x)"})
    with pytest.raises(ArityMismatch):
        make_network([("A", 1, [])], {"A": "E(x,y)"})


def test_file_round_trip():
    net = loads_network(TINY)
    again = loads_network(dumps_network(net))
    assert again.theta == net.theta and again.parents == net.parents


def test_tiny_table():
    tree = build_tree([None, 0, 0])
    net = loads_network(TINY)
    table = exact_distribution(tree, net)
    assert table.total() == 1
    probs = {m: p for m, p in table.worlds}
    idx = table.index
    both = 1 << idx[("P", (1,))] | 1 << idx[("P", (2,))]
    assert probs[both] == Fraction(1, 9)
    assert table.marginal("P", (1,)) == Fraction(1, 3)
    assert table.marginal("P", (0,)) == 0
    assert event_probability(table, parse("1")) == 1
    sig = net.signature
    cond = event_probability(table, parse("P(x)", sig), {"x": 1, "y": 2}, given=parse("P(y)", sig))
    assert cond == Fraction(1, 3)
    ex = embed_fo(FOExists("x", FOAtom("P", ("x",))))
    assert event_probability(table, ex) == Fraction(5, 9)
    with pytest.raises(NotZeroOne):
        event_probability(table, parse("1/2"))


def test_constant_one_theta():
    net = make_network([("P", 1, [])], {"P": "1"})
    table = exact_distribution(build_tree([None, 0]), net)
    assert table.worlds == [(0b11, 1)]


def test_too_large():
    net = make_network([("P", 2, [])], {"P": "1/2"})
    with pytest.raises(TooLarge):
        exact_distribution(build_tree([None] + [0] * 5), net)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_table_matches_product_oracle(seed):
    rng = random.Random(seed)
    parents = random_tree(rng, 4, 2)
    tree = build_tree(parents)
    net = random_network(rng, len(parents), 10)
    table = exact_distribution(tree, net)
    tuples = relation_tuples(tree, net)
    want = brute_table(parents, net, tuples)
    got = {tuple(bool(m >> i & 1) for i in range(len(tuples))): p for m, p in table.worlds}
    assert got == want
    assert table.total() == 1
    per_symbol = exact_distribution(tree, net, by_level=False)
    assert per_symbol.worlds == table.worlds


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_reduct_of_table_is_table_of_induced_network(seed):
    rng = random.Random(seed)
    parents = random_tree(rng, 4, 2)
    tree = build_tree(parents)
    net = random_network(rng, len(parents), 12)
    top = max(net.order, key=lambda r: net.levels[r])
    keep = net.ancestors([top]) - {top} or {net.order[0]}
    keep = net.ancestors(keep)
    sub = exact_distribution(tree, net.induced(keep))
    direct = {}
    for A, p in sub.items():
        key = tuple((r, tuple(A.interp[r].tuples())) for r in sorted(keep))
        direct[key] = direct.get(key, 0) + p
    assert exact_distribution(tree, net).reduct_table(keep) == direct


# -- sampling -----------------------------------------------------------------


def test_uniform_stream_is_addressable():
    whole = uniforms(7, 0, 1, 0, 40)
    assert np.array_equal(uniforms(7, 0, 1, 13, 9), whole[13:22])
    assert not np.array_equal(uniforms(8, 0, 1, 0, 40), whole)


def test_worlds_are_addressable():
    tree = build_tree([None, 0, 0, 1])
    net = make_network([("P", 1, []), ("Q", 1, ["P"])], {"P": "1/2", "Q": "or(P(x), 1/4)"})
    block = sample_bits(tree, net, 3, 0, 10)
    part = sample_bits(tree, net, 3, 4, 3)
    for r in ("P", "Q"):
        assert np.array_equal(block[r][4:7], part[r])
    many = list(sample_many(tree, net, 3, 5, start=2, batch=2))
    for i, A in enumerate(many):
        B = sample(tree, net, 3, 2 + i)
        assert all(A.interp[r] == B.interp[r] for r in ("P", "Q"))


def test_sampler_degenerate_theta():
    net = make_network([("P", 1, [])], {"P": "0"})
    A = sample(build_tree([None, 0, 0]), net, 0)
    assert len(A.interp["P"]) == 0


def test_sampler_frequencies():
    tree = build_tree([None, 0, 0])
    net = loads_network(TINY)
    bits = sample_bits(tree, net, 11, 0, 100_000)["P"]
    se1 = np.sqrt(1 / 3 * 2 / 3 / 1e5)
    assert abs(bits[:, 1].mean() - 1 / 3) <= 3 * se1
    se2 = np.sqrt(1 / 9 * 8 / 9 / 1e5)
    assert abs((bits[:, 1] & bits[:, 2]).mean() - 1 / 9) <= 3 * se2
    assert not bits[:, 0].any()


def test_sampled_worlds_follow_theta_on_lower_levels():
    """Conditionally on the level below, a tuple holds with frequency theta."""
    tree = build_tree([None, 0, 0, 0])
    net = make_network([("P", 1, []), ("Q", 1, ["P"])],
                       {"P": "1/2", "Q": "am(P(y) : y : not(y = x))"})
    worlds = list(sample_many(tree, net, 5, 20_000))
    hits = {}
    for A in worlds:
        th = evaluate(A, net.theta["Q"], {"x": 1})
        hits.setdefault(th, []).append(A.holds("Q", (1,)))
    for th, xs in hits.items():
        se = np.sqrt(float(th) * (1 - float(th)) / len(xs)) + 1e-12
        assert abs(np.mean(xs) - float(th)) <= 4 * se


def test_mc_event_probability():
    tree = build_tree([None, 0, 0])
    net = loads_network(TINY)
    ex = embed_fo(FOExists("x", FOAtom("P", ("x",))))
    est = mc_event_probability(tree, net, ex, 0, 50_000)
    assert abs(est.estimate - 5 / 9) <= 4 * est.stderr
