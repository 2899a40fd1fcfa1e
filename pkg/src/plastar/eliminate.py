"""Asymptotic elimination of aggregations.

`eliminate` rewrites a formula into a closure-basic formula over the complete
closure types of its free variables.  The value of a subformula is computed
per complete type q of the current context:

* aggregation-free parts are read off q's witness structure;
* an aggregation F(phi : y : chi) extends q by the witnesses that chi adds.
  If chi adds no new tree nodes (rank 0) the witnesses are determined and F
  is applied to the finite sequences.  Otherwise the new nodes are generic,
  their literals are enumerated level by level with the probabilities given
  by the network, and F's ct-limit is applied to the resulting (value, weight)
  lists.

The weights are balance constants: the limiting share of chi-witnesses whose
extended type is r.  For networks with aggregation-free thetas they are exact
products of theta values; when a theta contains aggregations it is first
eliminated itself and its limit values are used instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Optional, Sequence

import numpy as np

from .closure import (ClosureBasicFormula, ClosureType, _slot_tree, decompose_rank_step,
                      embeddings, is_y_positive_over_tau, self_contained_transform, skeletons,
                      type_of)
from .errors import (CatalogOverflow, InputError, NotClosureBasic, PositivityUnknown,
                     TooLarge, UnsatisfiablePair, UnsupportedAggregation)
from .logic.evaluate import Evaluator
from .logic.formula import (Agg, Conn, Const, Formula, Num, TypeAtom, fmt_num, is_aggregation_free,
                            render, symbols)
from .logic.registry import ADMISSIBLE, CONTINUOUS, DEFAULT, NEITHER, Registry
from .logic.vector import batch_evaluate
from .network import Network, sample
from .structures import SigmaStructure
from .trees import Signature, Tree, TreeGenConfig, generate_tree

MAX_BRANCHES = 1 << 16
MAX_CATALOG = 1 << 14
MC_DRAWS = 1_000_000
EMPIRICAL = "empirical, asymptotics unverified"


def _num(x: Num):
    """JSON-friendly number: exact rationals as strings."""
    return fmt_num(x) if isinstance(x, Fraction) else float(x)


@dataclass
class ConvergenceConstant:
    p: ClosureType
    base: ClosureType
    value: Num
    provenance: str
    eventually_constant: bool = True
    vacuous: bool = False
    stderr: Optional[float] = None
    samples: Optional[int] = None

    def to_json(self) -> dict:
        out = {"kind": "convergence", "type": self.p.describe(), "base": self.base.describe(),
               "value": _num(self.value), "provenance": self.provenance}
        if self.vacuous:
            out["vacuous"] = True
        if self.stderr is not None:
            out.update(stderr=self.stderr, samples=self.samples)
        return out


@dataclass
class BalanceConstant:
    p: ClosureType
    chi: ClosureType
    q: ClosureType
    value: Num
    provenance: str
    rank: int
    derivation: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"kind": "balance", "type": self.p.describe(), "chi": self.chi.describe(),
                "context": self.q.describe(), "rank": self.rank, "value": _num(self.value),
                "provenance": self.provenance}


@dataclass
class EliminationReport:
    input: str
    variables: tuple[str, ...]
    output: ClosureBasicFormula
    ledger: list[dict]
    constants: list[dict]
    warnings: list[str]
    provenance: str

    def to_json(self) -> dict:
        return {
            "input": self.input,
            "variables": list(self.variables),
            "output_formula": render(self.output.to_formula()),
            "output_entries": [{"type": p.describe(), "value": _num(c)} for p, c in self.output.entries],
            "provenance": self.provenance,
            "ledger": self.ledger,
            "constants": self.constants,
            "warnings": self.warnings,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


@dataclass
class _Component:
    """The generic witnesses of one conditioning type over a context type."""

    parents: tuple[int, ...]
    var_slots: tuple[int, ...]          # context variables, then bound variables
    fixed: dict                          # (R, slot tuple) -> bool
    fresh: tuple[int, ...]
    nongeneric: bool

    @property
    def rank(self) -> int:
        return len(self.fresh)


class Compiler:
    def __init__(self, net: Network, delta: int, registry: Optional[Registry] = None,
                 assumption: str = "full", max_branches: int = MAX_BRANCHES):
        if assumption not in ("full", "light"):
            raise InputError("assumption must be 'full' or 'light'")
        self.net = net
        self.delta = delta
        self.reg = registry or DEFAULT
        self.assumption = assumption
        self.max_branches = max_branches
        self.memo: dict = {}
        self.ledger: dict[int, dict] = {}
        self.constants: dict[str, dict] = {}
        self.warnings: list[str] = []
        self.theta_cbf: dict[str, ClosureBasicFormula] = {}
        self.provenance = "exact-product"
        self.keep: list = []                 # formulas referenced by memo keys stay alive

    # -- signatures ---------------------------------------------------------

    def rels(self, names: Iterable[str]) -> tuple[tuple[str, int], ...]:
        anc = self.net.ancestors(names)
        return tuple(sorted((r, self.net.signature.arity(r)) for r in anc))

    def rels_of(self, f: Formula) -> tuple[tuple[str, int], ...]:
        return self.rels(symbols(f))

    def closure_basic_for(self, names: Iterable[str]) -> bool:
        return all(is_aggregation_free(self.net.theta[r]) for r in self.net.ancestors(names))

    # -- theta values on witness structures ---------------------------------

    def theta_value(self, name: str, A: SigmaStructure, tup: tuple[int, ...]) -> Num:
        theta = self.net.theta[name]
        env = self.net.theta_env(name, tup)
        if is_aggregation_free(theta):
            return Evaluator(A, self.reg).run(theta, env)
        cbf = self.theta_cbf.get(name)
        if cbf is None:
            sub = Compiler(self.net, self.delta, self.reg, self.assumption, self.max_branches)
            cbf, _ = sub.compile(theta, self.net.theta_vars[name])
            self.theta_cbf[name] = cbf
            self.provenance = "limit-product"
            self.warnings.append(f"theta_{name} contains aggregations; its limit values are used")
        return cbf.value_for(type_of(A, tup, cbf.relations))

    def extend(self, parents: Sequence[int], fixed: dict, fresh: Iterable[int],
               rels: Sequence[tuple[str, int]]) -> list[tuple[dict, Num]]:
        """Literal assignments on tuples that touch a fresh slot, with their weights.

        Symbols are decided level by level, so each theta sees exactly the
        lower-level literals it may depend on.  Branches of weight 0 are
        dropped; this is exact because a theta value of 0 (or 1) forces the
        literal in every world.
        """
        tree = _slot_tree(tuple(parents))
        fresh = set(fresh)
        slots = range(len(parents))
        names = {r for r, _ in rels}
        sig = Signature(tuple(rels))
        branches = [(dict(fixed), Fraction(1))]
        for level in range(self.net.height + 1):
            stage = [r for r in self.net.at_level(level) if r in names]
            if not stage:
                continue
            nxt = []
            for lits, w in branches:
                interp: dict = {r: [] for r in names}
                for (r, t), b in lits.items():
                    if b:
                        interp[r].append(t)
                A = SigmaStructure(tree, sig, interp)
                todo = [(r, t) for r in stage for t in product(slots, repeat=self.net.signature.arity(r))
                         if fresh.intersection(t)]
                opts = [(lits, w)]
                for r, t in todo:
                    pr = self.theta_value(r, A, t)
                    forced = lits.get((r, t))
                    out = []
                    for cur, cw in opts:
                        for b, bw in ((True, pr), (False, 1 - pr)):
                            if bw == 0 or (forced is not None and forced != b):
                                continue
                            d = dict(cur)
                            d[(r, t)] = b
                            out.append((d, cw * bw))
                    opts = out
                    if len(opts) * max(len(branches), 1) > self.max_branches:
                        raise CatalogOverflow(f"more than {self.max_branches} literal patterns")
                nxt.extend(opts)
            branches = nxt
        return branches

    # -- structural recursion -----------------------------------------------

    def value(self, f: Formula, q: ClosureType, ctx: tuple[str, ...]) -> Num:
        if is_aggregation_free(f):
            A, var_slots = q.witness()
            return Evaluator(A, self.reg).run(f, {x: var_slots[i] for i, x in enumerate(ctx)})
        if isinstance(f, Conn):
            conn = self.reg.connective(f.name, f.params)
            return conn.fn([self.value(a, q, ctx) for a in f.args])
        if isinstance(f, Agg):
            pos = [i for i, x in enumerate(ctx) if x in f.free_vars]
            sub_ctx = tuple(ctx[i] for i in pos)
            sub_q = q.restrict_vars(pos).restrict_signature(r for r, _ in self.rels_of(f))
            key = (id(f), sub_q, sub_ctx)
            if key not in self.memo:
                self.keep.append(f)
                self.memo[key] = self.aggregate(f, sub_q, sub_ctx)
            return self.memo[key]
        raise TypeError(f"not a formula: {f!r}")

    def component(self, q: ClosureType, ctx: tuple[str, ...], chi: TypeAtom,
                  bound: tuple[str, ...]) -> Optional[_Component]:
        """Glue chi onto q; None when no tuple can satisfy chi over q."""
        ct = chi.ctype
        if ct.height > self.delta:
            return None
        image: dict[int, int] = {0: 0}
        for i, x in enumerate(chi.args):
            if x in bound:
                continue
            s, t = ct.var_slots[i], q.var_slots[ctx.index(x)]
            while s >= 0:
                if t < 0 or ct.depths[s] != q.depths[t]:
                    return None
                if image.setdefault(s, t) != t:
                    return None
                s, t = ct.parents[s], q.parents[t]
        if len(set(image.values())) != len(image):
            return None
        for name, tup, sign in ct.literals:
            if all(s in image for s in tup):
                if q.literal(name, tuple(image[s] for s in tup)) != sign:
                    return None
        parents = list(q.parents)
        fresh = []
        nongeneric = False
        for s in range(ct.nslots):
            if s in image:
                continue
            p = image[ct.parents[s]]
            if ct.parents[s] in image:
                taken = set(image.values())
                if any(q.parents[t] == p and t not in taken for t in range(q.nslots)):
                    nongeneric = True
            image[s] = len(parents)
            parents.append(p)
            fresh.append(image[s])
        fixed = {(r, t): b for r, t, b in q.literals}
        for name, tup, sign in ct.literals:
            fixed[(name, tuple(image[s] for s in tup))] = sign
        bvars = tuple(image[ct.var_slots[chi.args.index(y)]] for y in bound)
        return _Component(tuple(parents), tuple(q.var_slots) + bvars, fixed, tuple(fresh), nongeneric)

    def extensions(self, comp: _Component, rels) -> list[tuple[ClosureType, Num]]:
        branches = self.extend(comp.parents, comp.fixed, comp.fresh, rels)
        total = sum((w for _, w in branches), Fraction(0))
        if total == 0:
            return []
        out = []
        for lits, w in branches:
            r = ClosureType.make(comp.parents, comp.var_slots,
                                 [(n, t, b) for (n, t), b in lits.items()], rels)
            out.append((r, w / total))
        return out

    def aggregate(self, f: Agg, q: ClosureType, ctx: tuple[str, ...]) -> Num:
        F = self.reg.aggregation(f.name, f.params)
        entry = self.ledger.setdefault(id(f), {"agg": render(f), "class": F.cls, "cases": []})
        if F.cls == NEITHER:
            raise UnsupportedAggregation(f"{f.name} has no ct-limit, so it cannot be eliminated")
        for chi in f.cond:
            if not isinstance(chi, TypeAtom) or not set(f.bound) <= set(chi.args):
                raise UnsupportedAggregation(
                    f"conditioning formula {render(chi)} must be a closure type mentioning {', '.join(f.bound)}")
        rels = q.relations
        comps = [self.component(q, ctx, chi, f.bound) for chi in f.cond]
        case = {"context": q.render(ctx) if ctx else q.describe()}
        if any(c is None for c in comps):
            case.update(ranks=None, params=None, limit="0", note="empty conditioning set")
            entry["cases"].append(case)
            return Fraction(0)
        ranks = [c.rank for c in comps]
        case["ranks"] = ranks
        inner_ctx = ctx + f.bound
        if all(r == 0 for r in ranks):
            seqs = []
            for phi, c in zip(f.inner, comps):
                r = ClosureType.make(c.parents, c.var_slots, [(n, t, b) for (n, t), b in c.fixed.items()], rels)
                seqs.append([self.value(phi, r, inner_ctx)])
            val = F.fn(seqs)
            case.update(params=[[[_num(s[0]), "1"]] for s in seqs], limit=_num(val), note="rank 0, exact")
            entry["cases"].append(case)
            return val
        if any(r == 0 for r in ranks):
            raise UnsupportedAggregation(f"{f.name} mixes rank-0 and higher-rank conditioning types")
        if self.assumption == "light" and max(ranks) >= 2:
            raise UnsupportedAggregation("rank >= 2 conditioning is not licensed under the light tree assumption")
        if F.cls == ADMISSIBLE and not self.closure_basic_for(symbols(f)):
            raise UnsupportedAggregation(f"{f.name} is only admissible; that needs aggregation-free thetas")
        params = []
        for phi, chi, c in zip(f.inner, f.cond, comps):
            bpos = [chi.args.index(y) for y in f.bound]
            if is_y_positive_over_tau(chi.ctype, bpos) is not True:
                raise PositivityUnknown(f"cannot decide positivity of {render(chi)} (relation literals at rank >= 1)")
            if F.cls == ADMISSIBLE and c.nongeneric:
                raise UnsupportedAggregation(
                    f"{f.name} is only admissible but {render(chi)} has non-generic witnesses of vanishing share")
            groups: dict = {}
            for r, w in self.extensions(c, rels):
                v = self.value(phi, r, inner_ctx)
                groups[v] = groups.get(v, Fraction(0)) + w
                self.constants.setdefault(
                    f"balance|{r.describe()}|{chi.ctype.describe()}",
                    {"kind": "balance", "type": r.describe(), "chi": chi.ctype.describe(),
                     "rank": c.rank, "value": _num(w), "provenance": self.provenance})
            params.append(sorted(groups.items(), key=lambda kv: (float(kv[0]), float(kv[1]))))
        val = F.ct_limit(params)
        case.update(params=[[[_num(c), _num(a)] for c, a in slot] for slot in params], limit=_num(val))
        entry["cases"].append(case)
        return val

    # -- top level ----------------------------------------------------------

    def catalog(self, nvars: int, rels) -> list[ClosureType]:
        out = []
        for sk in skeletons(nvars, self.delta):
            free = sum(sk.nslots ** k for _, k in rels)
            if len(out) + (1 << free) > MAX_CATALOG:
                raise CatalogOverflow(f"more than {MAX_CATALOG} complete types")
            out.extend(sk.with_relations(rels).completions())
        return out

    def compile(self, phi: Formula, variables: Optional[Sequence[str]] = None):
        variables = tuple(sorted(phi.free_vars) if variables is None else variables)
        if not phi.free_vars <= set(variables):
            raise InputError(f"free variables {sorted(phi.free_vars - set(variables))} not listed")
        rels = self.rels_of(phi)
        entries = [(p, self.value(phi, p, variables)) for p in self.catalog(len(variables), rels)]
        return ClosureBasicFormula(variables, tuple(entries), rels, exhaustive=True), self


def eliminate(net: Network, phi: Formula, delta: int, variables: Optional[Sequence[str]] = None,
              registry: Optional[Registry] = None, assumption: str = "full",
              mc_fallback: bool = False, seed: int = 0) -> tuple[ClosureBasicFormula, EliminationReport]:
    """Asymptotically equivalent closure-basic formula, plus a report."""
    reduced = net.induced(net.ancestors(symbols(phi)))
    comp = Compiler(reduced, delta, registry, assumption)
    try:
        cbf, _ = comp.compile(phi, variables)
        provenance = comp.provenance
    except (UnsupportedAggregation, PositivityUnknown, NotClosureBasic) as e:
        if not mc_fallback:
            raise
        cbf, info = mc_eliminate(reduced, phi, delta, variables, registry, seed)
        comp.warnings.append(f"exact elimination refused ({e}); {EMPIRICAL}")
        comp.constants["mc"] = info
        provenance = "monte-carlo"
    ledger = []
    for entry in comp.ledger.values():
        cases = sorted(entry["cases"], key=lambda c: c["context"])
        first = cases[0] if cases else {}
        ledger.append({"agg": entry["agg"], "class": entry["class"],
                       "ranks": first.get("ranks"), "params": first.get("params"),
                       "limit": first.get("limit"), "cases": cases})
    ledger.sort(key=lambda e: e["agg"])
    report = EliminationReport(render(phi), cbf.variables, cbf, ledger,
                               [comp.constants[k] for k in sorted(comp.constants)],
                               sorted(set(comp.warnings)), provenance)
    return cbf, report


# ---------------------------------------------------------------------------
# constants


def _weight(comp: Compiler, p: ClosureType, rels) -> Num:
    """Probability that the closure of a tuple realises p's literals."""
    fixed = {(r, t): b for r, t, b in p.literals}
    return sum((w for _, w in comp.extend(p.parents, fixed, range(p.nslots), rels)), Fraction(0))


def convergence_constant(net: Network, p: ClosureType, base: Optional[ClosureType] = None,
                         registry: Optional[Registry] = None, mode: str = "exact",
                         delta: Optional[int] = None, seed: int = 0, samples: int = 20) -> ConvergenceConstant:
    """Limit of P(p(a) | base(a)) for tuples a satisfying base.

    Closure types fix the tree shape of cl(a), so p and base must share it.
    The value is the total weight of p's literals over the weight of base's,
    each a sum of theta products over the literals of cl(a).
    """
    if base is None:
        base = p.tau_part()
    p_star, _ = self_contained_transform(p)
    b_star, _ = self_contained_transform(base)
    names = {r for r, _ in p.relations} | {r for r, _ in base.relations}
    sub = net.induced(net.ancestors(names))
    rels = tuple(sorted((r, sub.signature.arity(r)) for r in sub.signature.names()))
    if (p_star.parents, p_star.var_slots) != (b_star.parents, b_star.var_slots):
        return ConvergenceConstant(p, base, Fraction(0), "exact-product", vacuous=True)
    joint = dict(base.literal_map)
    for k, b in p.literal_map.items():
        if joint.setdefault(k, b) != b:
            return ConvergenceConstant(p, base, Fraction(0), "exact-product", vacuous=True)
    if mode == "mc":
        return _mc_convergence(sub, p, base, delta or p.height, registry, seed, samples)
    if not all(is_aggregation_free(sub.theta[r]) for r in sub.signature.names()):
        raise NotClosureBasic("exact convergence constants need aggregation-free thetas")
    comp = Compiler(sub, max(p.height, 1), registry)
    den = _weight(comp, b_star.with_relations(rels), rels)
    if den == 0:
        raise UnsatisfiablePair(f"{base.describe()} has probability 0")
    both = ClosureType(p_star.parents, p_star.var_slots,
                       frozenset((r, t, b) for (r, t), b in joint.items()), rels)
    return ConvergenceConstant(p, base, _weight(comp, both, rels) / den, "exact-product")


def _mc_convergence(net: Network, p: ClosureType, base: ClosureType, delta: int,
                    registry, seed: int, samples: int) -> ConvergenceConstant:
    tree = reference_tree(net, delta, samples)
    hits = total = 0
    for s in range(samples):
        A = sample(tree, net, seed, s, registry)
        for nodes in embeddings(base, A, {}):
            total += 1
            hits += p.holds_at(A, nodes)
    if total == 0:
        raise UnsatisfiablePair("no tuple of the reference trees satisfies the base type")
    est = hits / total
    return ConvergenceConstant(p, base, est, "monte-carlo", eventually_constant=False,
                               stderr=float(np.sqrt(est * (1 - est) / total)), samples=samples)


def balance_constant(net: Network, p: ClosureType, chi: ClosureType, q: ClosureType,
                     registry: Optional[Registry] = None, delta: Optional[int] = None) -> BalanceConstant:
    """Limiting share of chi-witnesses over a q-tuple that also satisfy p.

    p and chi are types of (x, y) with the outer variables x first, in the
    order of q's variables; y are the remaining positions.
    """
    k = q.nvars
    bound_pos = list(range(k, chi.nvars))
    if is_y_positive_over_tau(chi, bound_pos) is not True:
        raise PositivityUnknown("conditioning type outside the decidable positive fragment")
    names = {r for r, _ in p.relations} | {r for r, _ in chi.relations} | {r for r, _ in q.relations}
    sub = net.induced(net.ancestors(names))
    if not all(is_aggregation_free(sub.theta[r]) for r in sub.signature.names()):
        raise NotClosureBasic("exact balance constants need aggregation-free thetas")
    rels = tuple(sorted((r, sub.signature.arity(r)) for r in sub.signature.names()))
    comp = Compiler(sub, delta or max(chi.height, q.height, 1), registry)
    xs = tuple(f"x{i + 1}" for i in range(k))
    ys = tuple(f"y{i + 1}" for i in range(chi.nvars - k))
    qq = q.with_relations(rels)
    if not qq.complete:
        raise InputError("the context type must be complete")
    c = comp.component(qq, xs, TypeAtom(chi, xs + ys), ys)
    rank = chi.rank(bound_pos)
    if c is None:
        return BalanceConstant(p, chi, q, Fraction(0), "exact-product", rank, ["no witnesses"])
    total = Fraction(0)
    for r, w in comp.extensions(c, rels):
        A, vs = r.witness()
        if p.holds_at(A, vs):
            total += w
    note = "rank 0: determined witness" if c.rank == 0 else f"product over literals of {c.rank} new nodes"
    return BalanceConstant(p, chi, q, total, "exact-product", rank, [note])


def balance_by_chain(net: Network, p: ClosureType, q: ClosureType,
                     registry: Optional[Registry] = None) -> BalanceConstant:
    """The same constant for complete, self-contained p, built from rank-1 steps."""
    k = q.nvars
    bound = list(range(k, p.nvars))
    outer = list(range(k))
    if p.rank(bound) <= 1:
        return balance_constant(net, p, p.tau_part(), q, registry)
    u, q1, rest = decompose_rank_step(p, bound)
    first = balance_constant(net, q1, q1.tau_part(), q, registry)
    order = outer + [u] + list(rest)
    remainder = balance_by_chain(net, p.restrict_vars(order), q1, registry)
    return BalanceConstant(p, p.tau_part(), q, first.value * remainder.value, "exact-product",
                           p.rank(bound), [f"step {u}: {fmt_num(first.value)}"] + remainder.derivation)


# ---------------------------------------------------------------------------
# Monte Carlo fallback


def reference_tree(net: Network, delta: int, samples: int) -> Tree:
    """The largest uniform tree whose worlds need at most MC_DRAWS tuple draws in total."""
    def draws(n):
        size = sum(n ** l for l in range(delta + 1))
        return samples * sum(size ** k for _, k in net.signature.relations)
    n = 2
    while draws(n + 1) <= MC_DRAWS:
        n += 1
    return generate_tree(TreeGenConfig(delta=delta, profile="uniform", n=n))


def mc_eliminate(net: Network, phi: Formula, delta: int, variables, registry, seed: int,
                 samples: int = 20, per_world: int = 2000):
    """Average value of phi per complete type on sampled reference worlds."""
    variables = tuple(sorted(phi.free_vars) if variables is None else variables)
    if len(variables) > 1:
        raise UnsupportedAggregation("the Monte Carlo fallback handles sentences and one free variable")
    rels = tuple(sorted((r, net.signature.arity(r)) for r in net.ancestors(symbols(phi))))
    tree = reference_tree(net, delta, samples)
    rng = np.random.default_rng(seed)
    sums: dict = {}
    for s in range(samples):
        A = sample(tree, net, seed, s, registry)
        if variables:
            nodes = np.arange(len(tree))
            if len(nodes) > per_world:
                nodes = np.sort(rng.choice(nodes, per_world, replace=False))
            vals = batch_evaluate(A, phi, {variables[0]: nodes}, registry)
            tuples = [(int(a),) for a in nodes]
        else:
            vals = batch_evaluate(A, phi, {}, registry, size=1)
            tuples = [()]
        for t, v in zip(tuples, vals):
            key = type_of(A, t, rels)
            acc = sums.setdefault(key, [0.0, 0])
            acc[0] += float(v)
            acc[1] += 1
    entries = tuple((p, acc[0] / acc[1]) for p, acc in sorted(sums.items(), key=lambda kv: kv[0].describe()))
    info = {"kind": "monte-carlo", "reference_nodes": len(tree), "samples": samples,
            "types_seen": len(entries), "note": EMPIRICAL}
    return ClosureBasicFormula(variables, entries, rels, exhaustive=False), info


# ---------------------------------------------------------------------------
# asymptotic equivalence harness


def valuation_tuples(tree: Tree, k: int, seed: int, cap_nodes: int = 10_000,
                     subsample: int = 256) -> tuple[Optional[np.ndarray], bool]:
    """Argument tuples to check: all of them for k <= 1 on small trees, else a seeded subsample."""
    n = len(tree)
    if k == 0:
        return None, False
    if k == 1 and n <= cap_nodes:
        return np.arange(n).reshape(-1, 1), False
    rng = np.random.default_rng([seed, k, n])
    return rng.integers(0, n, size=(subsample, k)), True


def check_asymptotic_equivalence(net: Network, phi: Formula, psi: Formula, family: TreeGenConfig,
                                 n_list: Sequence[int], samples: int, eps: float, seed: int = 0,
                                 registry: Optional[Registry] = None) -> dict:
    """Per n, the share of sampled worlds where max over tuples of |phi - psi| <= eps."""
    variables = tuple(sorted(phi.free_vars | psi.free_vars))
    rows = []
    for n in n_list:
        tree = generate_tree(TreeGenConfig(family.delta, family.profile, n, family.counts,
                                           family.child_count, family.assumption_tag))
        tuples, flagged = valuation_tuples(tree, len(variables), seed)
        env = {} if tuples is None else {x: tuples[:, i] for i, x in enumerate(variables)}
        size = 1 if tuples is None else len(tuples)
        ok, gaps = 0, []
        for s in range(samples):
            A = sample(tree, net, seed, s, registry)
            a = batch_evaluate(A, phi, env, registry, size=size)
            b = batch_evaluate(A, psi, env, registry, size=size)
            gap = float(np.max(np.abs(a - b)))
            gaps.append(gap)
            ok += gap <= eps
        rows.append({"n": n, "nodes": len(tree), "fraction": ok / samples,
                     "median_gap": float(np.median(gaps)), "subsampled": flagged})
    return {"variables": list(variables), "eps": eps, "samples": samples, "seed": seed, "rows": rows}
