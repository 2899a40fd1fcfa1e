"""Reference implementations used as test oracles.

Nothing here calls into plastar's evaluators, registries, samplers or type
machinery.  The formula AST classes are shared as plain data; every meaning
is recomputed from the definitions by brute force.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from itertools import permutations, product

import numpy as np

from plastar.logic.fo import FOAnd, FOAtom, FOEq, FOExists, FOForall, FOImplies, FONot, FOOr
from plastar.logic.formula import Agg, Atom, Conn, Const, Eq, TypeAtom


class World:
    """A tree (parent list) plus relations as sets of tuples; E is derived."""

    def __init__(self, parents, rels=None):
        self.parents = list(parents)
        self.n = len(parents)
        self.rels = {k: set(map(tuple, v)) for k, v in (rels or {}).items()}
        self.rels["E"] = {(p, c) for c, p in enumerate(parents) if p is not None and p >= 0}

    def holds(self, name, tup):
        return tuple(tup) in self.rels.get(name, set())

    def root(self):
        return next(i for i, p in enumerate(self.parents) if p is None or p < 0)

    def ancestors(self, a):
        out = [a]
        while self.parents[a] is not None and self.parents[a] >= 0:
            a = self.parents[a]
            out.append(a)
        return out

    def level(self, a):
        return len(self.ancestors(a)) - 1


# ---------------------------------------------------------------------------
# PLA* semantics, straight from the definition


def _conn(name, params, xs):
    if name == "not":
        return 1 - xs[0]
    if name == "and":
        return min(xs)
    if name == "or":
        return max(xs)
    if name == "implies":
        return min(Fraction(1), 1 - xs[0] + xs[1])
    if name == "product":
        out = Fraction(1)
        for x in xs:
            out *= x
        return out
    if name == "affine":
        a, b = params
        return min(max(a * xs[0] + b, Fraction(0)), Fraction(1))
    raise KeyError(name)


def _agg(name, params, seqs):
    xs = seqs[0]
    if name == "am":
        return sum(xs, Fraction(0)) / len(xs) if all(isinstance(x, Fraction) for x in xs) \
            else math.fsum(map(float, xs)) / len(xs)
    if name == "max":
        return max(xs)
    if name == "min":
        return min(xs)
    if name == "gm":
        if any(x == 0 for x in xs):
            return Fraction(0)
        return math.exp(math.fsum(math.log(float(x)) for x in xs) / len(xs))
    if name == "lengthpow":
        beta = params[0] if params else Fraction(1)
        if beta == 1:
            return Fraction(1, len(xs))
        return len(xs) ** -float(beta)
    if name == "tsum":
        return min(Fraction(1), sum(xs, Fraction(0)))
    if name == "noisy-or":
        out = Fraction(1)
        for x in xs:
            out *= 1 - x
        return 1 - out
    raise KeyError(name)


def ref_eval(W: World, f, v):
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Eq):
        return Fraction(int(v[f.left] == v[f.right]))
    if isinstance(f, Atom):
        return Fraction(int(W.holds(f.symbol, [v[x] for x in f.args])))
    if isinstance(f, TypeAtom):
        return Fraction(int(ref_type_holds(W, f.ctype, [v[x] for x in f.args])))
    if isinstance(f, Conn):
        return _conn(f.name, f.params, [ref_eval(W, a, v) for a in f.args])
    if isinstance(f, Agg):
        seqs = []
        for phi, chi in zip(f.inner, f.cond):
            seq = []
            for bs in product(range(W.n), repeat=len(f.bound)):
                w = dict(v)
                w.update(zip(f.bound, bs))
                if ref_eval(W, chi, w) == 1:
                    seq.append(ref_eval(W, phi, w))
            if not seq:
                return Fraction(0)
            seqs.append(seq)
        return _agg(f.name, f.params, seqs)
    raise TypeError(f)


def close(a, b, tol=1e-12):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= tol


# ---------------------------------------------------------------------------
# closure types by brute-force isomorphism


def ref_type_holds(W: World, ct, nodes) -> bool:
    """Is there a map from ct's slots onto cl(nodes) realising every part of ct?"""
    cl = sorted({W.root()} | {b for a in nodes for b in W.ancestors(a)})
    if len(cl) != ct.nslots:
        return False
    for perm in permutations(cl):
        if perm[0] != W.root():
            continue
        if any(perm[ct.var_slots[i]] != a for i, a in enumerate(nodes)):
            continue
        if any(W.parents[perm[s]] != perm[ct.parents[s]] for s in range(1, ct.nslots)):
            continue
        if all(W.holds(r, [perm[s] for s in t]) == b for r, t, b in ct.literals):
            return True
    return False


def same_type(W1: World, t1, W2: World, t2, rels) -> bool:
    """Do the closures of t1 in W1 and t2 in W2 carry isomorphic tuple-preserving structure?"""
    cl1 = sorted({W1.root()} | {b for a in t1 for b in W1.ancestors(a)})
    cl2 = sorted({W2.root()} | {b for a in t2 for b in W2.ancestors(a)})
    if len(cl1) != len(cl2):
        return False
    for img in permutations(cl2):
        m = dict(zip(cl1, img))
        if any(m[a] != b for a, b in zip(t1, t2)):
            continue
        if any((W1.parents[a] in m and m[W1.parents[a]] != W2.parents[m[a]])
               or (W1.parents[a] is None or W1.parents[a] < 0) != (W2.parents[m[a]] is None or W2.parents[m[a]] < 0)
               for a in cl1):
            continue
        ok = True
        for r, k in rels:
            for tup in product(cl1, repeat=k):
                if W1.holds(r, tup) != W2.holds(r, [m[a] for a in tup]):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


def all_trees(max_nodes, max_height):
    """Every parent list (nodes numbered so parents come first) up to the given size."""
    out = []

    def rec(parents, levels):
        out.append([None] + parents[1:])
        if len(parents) == max_nodes:
            return
        for p in range(len(parents)):
            if levels[p] < max_height and all(q <= p for q in parents[1:]):
                rec(parents + [p], levels + [levels[p] + 1])

    rec([-1], [0])
    return out


# ---------------------------------------------------------------------------
# first-order satisfaction


def fo_sat(W: World, f, v) -> bool:
    if isinstance(f, FOAtom):
        return W.holds(f.symbol, [v[x] for x in f.args])
    if isinstance(f, FOEq):
        return v[f.left] == v[f.right]
    if isinstance(f, FONot):
        return not fo_sat(W, f.arg, v)
    if isinstance(f, FOAnd):
        return all(fo_sat(W, a, v) for a in f.args)
    if isinstance(f, FOOr):
        return any(fo_sat(W, a, v) for a in f.args)
    if isinstance(f, FOImplies):
        return (not fo_sat(W, f.left, v)) or fo_sat(W, f.right, v)
    if isinstance(f, FOExists):
        return any(fo_sat(W, f.body, {**v, f.var: a}) for a in range(W.n))
    if isinstance(f, FOForall):
        return all(fo_sat(W, f.body, {**v, f.var: a}) for a in range(W.n))
    raise TypeError(f)


def random_fo(rng: random.Random, sig, depth, bound=()):
    """A random FO formula whose free variables lie in `bound`."""
    free = list(bound)
    if depth == 0 or rng.random() < 0.25:
        if free and rng.random() < 0.8:
            name, k = rng.choice(sig)
            if rng.random() < 0.2:
                return FOEq(rng.choice(free), rng.choice(free))
            return FOAtom(name, tuple(rng.choice(free) for _ in range(k)))
        var = f"v{len(bound)}"
        return FOExists(var, random_fo(rng, sig, 0, bound + (var,)))
    c = rng.randrange(6)
    if c == 0:
        return FONot(random_fo(rng, sig, depth, bound))
    if c in (1, 2):
        cls = FOAnd if c == 1 else FOOr
        return cls((random_fo(rng, sig, depth - 1, bound), random_fo(rng, sig, depth - 1, bound)))
    if c == 3:
        return FOImplies(random_fo(rng, sig, depth - 1, bound), random_fo(rng, sig, depth - 1, bound))
    var = f"v{len(bound)}"
    cls = FOExists if c == 4 else FOForall
    return cls(var, random_fo(rng, sig, depth - 1, bound + (var,)))


def fo_quantifier_depth(f) -> int:
    if isinstance(f, (FOExists, FOForall)):
        return 1 + fo_quantifier_depth(f.body)
    if isinstance(f, FONot):
        return fo_quantifier_depth(f.arg)
    if isinstance(f, (FOAnd, FOOr)):
        return max(fo_quantifier_depth(a) for a in f.args)
    if isinstance(f, FOImplies):
        return max(fo_quantifier_depth(f.left), fo_quantifier_depth(f.right))
    return 0


# ---------------------------------------------------------------------------
# random PLA* formulas and structures


CONNS = ("not", "and", "or", "implies", "product", "affine")
AGGS = ("am", "max", "min", "gm", "lengthpow", "tsum", "noisy-or")
VARS = ("x", "y", "z", "w")


def random_condition(rng, sig, scope):
    """A 0/1-valued formula over the variables in scope."""
    def atom():
        name, k = rng.choice(sig)
        return Atom(name, tuple(rng.choice(scope) for _ in range(k)))
    c = rng.randrange(5)
    if c == 0:
        return Eq(rng.choice(scope), rng.choice(scope))
    if c == 1:
        return Conn("not", (atom(),))
    if c == 2:
        return Conn("or", (atom(), atom()))
    if c == 3:
        return Const(Fraction(1))
    return atom()


RATIONAL_AGGS = ("am", "max", "min", "lengthpow", "tsum", "noisy-or")


def random_formula(rng: random.Random, sig, depth, scope, bound=frozenset(), aggs=AGGS):
    """Free variables come from scope; aggregations bind fresh names only."""
    if depth == 0 or rng.random() < 0.2:
        c = rng.randrange(4)
        if c == 0 or not scope:
            return Const(Fraction(rng.randrange(0, 5), 4))
        if c == 1:
            return Eq(rng.choice(scope), rng.choice(scope))
        name, k = rng.choice(sig)
        return Atom(name, tuple(rng.choice(scope) for _ in range(k)))
    unused = [x for x in VARS if x not in scope and x not in bound]
    if unused and aggs and rng.random() < 0.45:
        y = rng.choice(unused)
        inner_scope = list(scope) + [y]
        name = rng.choice(aggs)
        params = (Fraction(1, 2),) if name == "lengthpow" and aggs is AGGS and rng.random() < 0.3 else ()
        inner = random_formula(rng, sig, depth - 1, inner_scope, bound | {y}, aggs)
        cond = random_condition(rng, sig, inner_scope)
        return Agg(name, (inner,), (y,), (cond,), params)
    name = rng.choice(CONNS)
    if name in ("not", "affine"):
        args = (random_formula(rng, sig, depth - 1, scope, bound, aggs),)
        params = (Fraction(rng.randrange(-2, 3), 2), Fraction(rng.randrange(0, 3), 2)) if name == "affine" else ()
        return Conn(name, args, params)
    if name == "implies":
        return Conn(name, tuple(random_formula(rng, sig, depth - 1, scope, bound, aggs) for _ in range(2)))
    k = rng.randrange(2, 4)
    return Conn(name, tuple(random_formula(rng, sig, depth - 1, scope, bound, aggs) for _ in range(k)))


def random_tree(rng: random.Random, max_nodes, max_height):
    n = rng.randrange(1, max_nodes + 1)
    parents, levels = [None], [0]
    for i in range(1, n):
        choices = [p for p in range(i) if levels[p] < max_height]
        p = rng.choice(choices)
        parents.append(p)
        levels.append(levels[p] + 1)
    return parents


def random_world(rng: random.Random, parents, sig, density=0.4):
    n = len(parents)
    rels = {name: {t for t in product(range(n), repeat=k) if rng.random() < density} for name, k in sig}
    return World(parents, rels)


# ---------------------------------------------------------------------------
# network distributions by full enumeration


def random_network(rng: random.Random, n_nodes: int, max_tuples: int = 20):
    """A random DAG of symbols with rational-valued thetas; at most max_tuples relation tuples."""
    from plastar.network import make_network

    rels, used = [], 0
    for i in range(rng.randrange(1, 5)):
        k = 2 if rng.random() < 0.25 else 1
        if used + n_nodes ** k > max_tuples:
            continue
        used += n_nodes ** k
        name = f"R{i}"
        parents = [r for r, _, _ in rels if rng.random() < 0.6]
        rels.append((name, k, parents))
    if not rels:
        rels.append(("R0", 1, []))
    arity = {r: k for r, k, _ in rels}
    thetas, variables = {}, {}
    for name, k, parents in rels:
        scope = ["x", "y"][:k]
        sig = [("E", 2)] + [(p, arity[p]) for p in parents]
        theta = random_formula(rng, sig, 3, scope, aggs=RATIONAL_AGGS)
        if rng.random() < 0.75:
            # keep most tuples random instead of decided
            theta = Conn("affine", (theta,), (Fraction(1, 2), Fraction(1, 4)))
        thetas[name] = theta
        variables[name] = tuple(scope)
    return make_network(rels, thetas, variables)


def brute_table(parents, net, order_tuples):
    """P(world) for every world over the listed tuples, as a product of theta terms.

    Each theta is evaluated on the complete world; it only reads its parents'
    symbols, so the product is the network's joint probability.
    """
    out = {}
    for bits in product((False, True), repeat=len(order_tuples)):
        rels = {}
        for (r, t), b in zip(order_tuples, bits):
            rels.setdefault(r, set())
            if b:
                rels[r].add(t)
        W = World(parents, rels)
        p = Fraction(1)
        for (r, t), b in zip(order_tuples, bits):
            th = ref_eval(W, net.theta[r], dict(zip(net.theta_vars[r], t)))
            p *= th if b else 1 - th
            if p == 0:
                break
        if p:
            out[bits] = p
    return out


# ---------------------------------------------------------------------------
# PageRank by direct iteration


def pagerank_iterate(n, edges, k):
    out_deg = [0] * n
    for a, _ in edges:
        out_deg[a] += 1
    pr = [Fraction(1, n)] * n
    for _ in range(k):
        nxt = [Fraction(0)] * n
        for a, b in edges:
            nxt[b] += pr[a] / out_deg[a]
        pr = nxt
    return pr


# ---------------------------------------------------------------------------
# exact law of the rank-1 example sentence


def _half_binomial(m):
    """Law of R * Bin(m, 1/2) with R a fair coin, as a pmf over 0..m."""
    lg = np.array([math.lgamma(i + 1) for i in range(m + 1)])
    pmf = 0.5 * np.exp(lg[m] - lg - lg[::-1] - m * math.log(2))
    pmf[0] += 0.5
    return pmf


def _convolve(a, b):
    size = len(a) + len(b) - 1
    fa, fb = np.fft.rfft(a, 2 * size), np.fft.rfft(b, 2 * size)
    return np.clip(np.fft.irfft(fa * fb)[:size], 0.0, None)


def rank1_success_probability(child_counts, target=0.25, eps=0.05):
    """P(|mean_x R(x) * (share of R among the children of x) - target| <= eps).

    The children of the root fall in two groups of equal child count; the sum
    over the smaller group is tracked exactly as an integer, the larger group
    by FFT convolution.
    """
    n = len(child_counts)
    small = min(child_counts)
    big = [m for m in child_counts if m != small]
    S = np.array([1.0])
    for _ in range(n - len(big)):
        S = np.convolve(S, _half_binomial(small))
    M = big[0] if big else 1
    assert all(m == M for m in big)
    T = np.array([1.0])
    for m in big:
        T = _convolve(T, _half_binomial(m))
    cum = np.concatenate([[0.0], np.cumsum(T)])
    total = 0.0
    for s, ps in enumerate(S):
        # mean = (s / small + t / M) / n
        lo = ((target - eps) * n - s / small) * M
        hi = ((target + eps) * n - s / small) * M
        a, b = max(math.ceil(lo - 1e-9), 0), min(math.floor(hi + 1e-9), len(T) - 1)
        if b >= a:
            total += ps * (cum[b + 1] - cum[a])
    return float(total)
