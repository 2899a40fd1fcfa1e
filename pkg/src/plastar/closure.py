"""Closure types of tuples in expansions of bounded-height trees.

A closure type is stored by its skeleton: the closed set cl(x1..xk) as a small
rooted tree of *slots* (slot 0 is the root), the slot of each outer variable,
and signed relation literals on slot tuples.  Existential witnesses are the
slots that carry no outer variable.  Two variables may share a slot; that is
how equality between outer variables is recorded, so the complete types in
x1..xk partition all k-tuples, not only the injective ones.

Canonical slot order sorts slots by (depth, smallest outer variable below the
slot), which is unique because a variable's ancestor chain meets each depth
at most once.  Equivalence of types is equality of canonical forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidType, NotDecomposable, TooManyVariables
from .structures import SigmaStructure, Structure
from .trees import Signature, Tree

Literal = tuple[str, tuple[int, ...], bool]
MAX_VARS = 8
MAX_DELTA = 4


@dataclass(frozen=True)
class ClosureType:
    parents: tuple[int, ...]
    var_slots: tuple[int, ...]
    literals: frozenset = frozenset()
    relations: tuple[tuple[str, int], ...] = ()

    # -- construction -------------------------------------------------------

    @staticmethod
    def make(parents: Sequence[int], var_slots: Sequence[int],
             literals: Iterable[Literal] = (),
             relations: Iterable[tuple[str, int]] = ()) -> "ClosureType":
        """Validate and canonicalise."""
        parents = list(parents)
        n = len(parents)
        relations = tuple(sorted(set(relations)))
        arity = dict(relations)
        roots = [s for s, p in enumerate(parents) if p < 0]
        if n == 0 or len(roots) != 1:
            raise InvalidType("a closure skeleton needs exactly one root slot")
        if any(p >= n for p in parents):
            raise InvalidType("parent slot out of range")
        depth = [-1] * n
        for s in range(n):
            path, t = [], s
            while depth[t] < 0:
                if parents[t] < 0:
                    depth[t] = 0
                    break
                path.append(t)
                t = parents[t]
                if len(path) > n:
                    raise InvalidType("cyclic skeleton")
            for u in reversed(path):
                depth[u] = depth[parents[u]] + 1
        below: list[Optional[int]] = [None] * n
        for i, s in enumerate(var_slots):
            if not 0 <= s < n:
                raise InvalidType(f"variable slot {s} out of range")
            t = s
            while t >= 0:
                if below[t] is None or below[t] > i:
                    below[t] = i
                t = parents[t]
        root = roots[0]
        if below[root] is None:
            below[root] = 0
        if any(b is None for b in below):
            raise InvalidType("every witness must be an ancestor of an outer variable")
        order = sorted(range(n), key=lambda s: (depth[s], below[s]))
        new = {s: i for i, s in enumerate(order)}
        lits = set()
        for name, tup, sign in literals:
            if name not in arity:
                raise InvalidType(f"relation {name} not in the type's signature")
            if len(tup) != arity[name]:
                raise InvalidType(f"{name} has arity {arity[name]}")
            lits.add((name, tuple(new[s] for s in tup), bool(sign)))
        seen = {}
        for name, tup, sign in lits:
            if seen.setdefault((name, tup), sign) != sign:
                raise InvalidType(f"contradictory literals on {name}{tup}")
        return ClosureType(
            parents=tuple(-1 if parents[s] < 0 else new[parents[s]] for s in order),
            var_slots=tuple(new[s] for s in var_slots),
            literals=frozenset(lits),
            relations=relations,
        )

    # -- basic facts --------------------------------------------------------

    @property
    def nslots(self) -> int:
        return len(self.parents)

    @property
    def nvars(self) -> int:
        return len(self.var_slots)

    @cached_property
    def depths(self) -> tuple[int, ...]:
        d = [0] * self.nslots
        for s in range(1, self.nslots):        # parents precede children
            d[s] = d[self.parents[s]] + 1
        return tuple(d)

    @property
    def height(self) -> int:
        return max(self.depths)

    @cached_property
    def literal_map(self) -> dict:
        return {(r, t): s for r, t, s in self.literals}

    def literal(self, name: str, tup: Sequence[int]) -> Optional[bool]:
        return self.literal_map.get((name, tuple(tup)))

    def all_slot_tuples(self) -> Iterator[tuple[str, tuple[int, ...]]]:
        for name, k in self.relations:
            for t in product(range(self.nslots), repeat=k):
                yield name, t

    @cached_property
    def complete(self) -> bool:
        return all((r, t) in self.literal_map for r, t in self.all_slot_tuples())

    @property
    def existential_slots(self) -> list[int]:
        used = set(self.var_slots)
        return [s for s in range(self.nslots) if s not in used]

    @property
    def self_contained(self) -> bool:
        return not self.existential_slots

    def chain(self, s: int) -> list[int]:
        out = []
        while s >= 0:
            out.append(s)
            s = self.parents[s]
        return out

    def cl_slots(self, positions: Iterable[int]) -> frozenset[int]:
        out = {0}
        for i in positions:
            out.update(self.chain(self.var_slots[i]))
        return frozenset(out)

    def var_levels(self) -> tuple[int, ...]:
        return tuple(self.depths[s] for s in self.var_slots)

    def tau_part(self) -> "ClosureType":
        return ClosureType(self.parents, self.var_slots, frozenset(), ())

    def is_over_tau(self) -> bool:
        return not self.literals

    # -- derived types -----------------------------------------------------

    def with_relations(self, relations: Iterable[tuple[str, int]]) -> "ClosureType":
        rel = tuple(sorted(set(relations)))
        names = {r for r, _ in rel}
        lits = frozenset(l for l in self.literals if l[0] in names)
        return ClosureType(self.parents, self.var_slots, lits, rel)

    def restrict_signature(self, names: Iterable[str]) -> "ClosureType":
        keep = set(names)
        return self.with_relations([(r, k) for r, k in self.relations if r in keep])

    def restrict_vars(self, positions: Sequence[int]) -> "ClosureType":
        keep = sorted(self.cl_slots(positions))
        idx = {s: i for i, s in enumerate(keep)}
        parents = [-1 if self.parents[s] < 0 else idx[self.parents[s]] for s in keep]
        lits = [(r, tuple(idx[s] for s in t), b) for r, t, b in self.literals
                if all(s in idx for s in t)]
        return ClosureType.make(parents, [idx[self.var_slots[i]] for i in positions],
                                lits, self.relations)

    def rank(self, bound: Iterable[int]) -> int:
        bound = set(bound)
        outer = [i for i in range(self.nvars) if i not in bound]
        return self.nslots - len(self.cl_slots(outer)) if bound else 0

    def is_y_independent(self, bound: Iterable[int]) -> bool:
        bound = set(bound)
        outer_cl = self.cl_slots([i for i in range(self.nvars) if i not in bound])
        return all(self.var_slots[i] not in outer_cl for i in bound)

    def completions(self) -> Iterator["ClosureType"]:
        free = [(r, t) for r, t in self.all_slot_tuples() if (r, t) not in self.literal_map]
        for bits in product((False, True), repeat=len(free)):
            lits = set(self.literals)
            lits.update((r, t, b) for (r, t), b in zip(free, bits))
            yield ClosureType(self.parents, self.var_slots, frozenset(lits), self.relations)

    def implies(self, other: "ClosureType") -> bool:
        """self |= other for types in the same variables (other may be incomplete)."""
        if (self.parents, self.var_slots) != (other.parents, other.var_slots):
            return False
        return all(self.literal_map.get((r, t)) == b for r, t, b in other.literals)

    # -- semantics ---------------------------------------------------------

    def holds_at(self, A: Structure, nodes: Sequence[int]) -> bool:
        """Does A satisfy this type at the tuple `nodes`?"""
        tree = A.tree
        if tree is None:
            raise InvalidType("closure types need a tree-based structure")
        par, lev = tree.parent_list, tree.level_list
        depths = self.depths
        slot_node = [-1] * self.nslots
        for s, a in zip(self.var_slots, nodes):
            if lev[a] != depths[s]:
                return False
            while s >= 0:
                cur = slot_node[s]
                if cur < 0:
                    slot_node[s] = a
                elif cur != a:
                    return False
                else:
                    break
                s, a = self.parents[s], par[a]
        if self.nslots == 1 and slot_node[0] < 0:
            slot_node[0] = tree.root
        if len(set(slot_node)) != self.nslots:
            return False
        for name, tup, sign in self.literals:
            if A.holds(name, tuple(slot_node[s] for s in tup)) != sign:
                return False
        return True

    def witness(self) -> tuple[SigmaStructure, tuple[int, ...]]:
        """The skeleton as a tiny tree with the positive literals as relations."""
        tree = _slot_tree(self.parents)
        interp: dict[str, list] = {r: [] for r, _ in self.relations}
        for name, tup, sign in self.literals:
            if sign:
                interp[name].append(tup)
        return SigmaStructure(tree, Signature(self.relations), interp), self.var_slots

    def render(self, args: Sequence[str]) -> str:
        names: list[Optional[str]] = [None] * self.nslots
        eqs = []
        for i, s in enumerate(self.var_slots):
            if names[s] is None:
                names[s] = args[i]
            elif names[s] != args[i]:
                eqs.append(f"{names[s]} = {args[i]}")
        ex = []
        for s in range(self.nslots):
            if names[s] is None:
                names[s] = f"_e{s}"
                ex.append(names[s])
        items = [f"E({names[self.parents[s]]},{names[s]})" for s in range(1, self.nslots)]
        items += eqs
        for name, tup, sign in sorted(self.literals):
            items.append(f"{'' if sign else '!'}{name}({','.join(names[s] for s in tup)})")
        mentioned = {n for item in items for n in _names_in(item)}
        for a in args:
            if a not in mentioned:
                items.insert(0, a)
                mentioned.add(a)
        head = f"exists {','.join(ex)}; " if ex else ""
        return "closed{" + head + "; ".join(items) + "}"

    def describe(self) -> str:
        return self.render([f"x{i + 1}" for i in range(self.nvars)])


def _names_in(item: str) -> list[str]:
    if "(" in item:
        return item[item.index("(") + 1:-1].split(",")
    return [p.strip() for p in item.split("=")]


_SLOT_TREES: dict[tuple, Tree] = {}


def _slot_tree(parents: tuple[int, ...]) -> Tree:
    t = _SLOT_TREES.get(parents)
    if t is None:
        n = len(parents)
        lv = [0] * n
        for s in range(1, n):
            lv[s] = lv[parents[s]] + 1
        t = Tree(np.asarray(parents, dtype=np.int64), np.asarray(lv, dtype=np.int64))
        _SLOT_TREES[parents] = t
    return t


def from_literals(outer: Sequence[str], existential: Sequence[str],
                  edges: Iterable[tuple[str, str, bool]], equalities: Iterable[tuple[str, str]],
                  literals: Iterable[tuple[str, Sequence[str], bool]],
                  relations: Iterable[tuple[str, int]]) -> ClosureType:
    """Build a closure type from named literals (the `closed{...}` macro)."""
    names = list(dict.fromkeys(list(outer) + list(existential)))
    uf = {v: v for v in names}

    def find(v):
        while uf[v] != v:
            uf[v] = uf[uf[v]]
            v = uf[v]
        return v

    edges = list(edges)
    for a, b in equalities:
        uf[find(a)] = find(b)
    classes = sorted({find(v) for v in names}, key=names.index)
    cid = {c: i for i, c in enumerate(classes)}
    slot = {v: cid[find(v)] for v in names}
    parent = [-1] * len(classes)
    for a, b, pos in edges:
        if pos:
            pa, sb = slot[a], slot[b]
            if parent[sb] not in (-1, pa):
                raise InvalidType(f"{b} has two parents")
            if pa == sb:
                raise InvalidType(f"E({a},{b}) with {a} = {b}")
            parent[sb] = pa
    for a, b, pos in edges:
        if not pos and parent[slot[b]] == slot[a]:
            raise InvalidType(f"contradictory E-literals on ({a},{b})")
    if not outer and len(classes) > 1:
        raise InvalidType("a type without outer variables describes only the root")
    if not classes:
        parent = [-1]
    lits = [(r, tuple(slot[v] for v in args), sign) for r, args, sign in literals]
    try:
        return ClosureType.make(parent, [slot[v] for v in outer], lits, relations)
    except InvalidType as e:
        if not outer:
            raise
        raise InvalidType(f"{e} (in closure type over {', '.join(outer)})") from None


# ---------------------------------------------------------------------------
# types of concrete tuples


def type_of(A: Structure, nodes: Sequence[int],
            relations: Optional[Iterable[tuple[str, int]]] = None) -> ClosureType:
    """The complete closure type of `nodes` in A over the given relations."""
    tree = A.tree
    relations = tuple(A.signature.relations if relations is None else relations)
    par = tree.parent_list
    cl: dict[int, None] = {tree.root: None}
    for a in nodes:
        while a >= 0 and a not in cl:
            cl[a] = None
            a = par[a]
    elems = sorted(cl, key=lambda a: tree.level_list[a])
    idx = {a: i for i, a in enumerate(elems)}
    parents = [-1 if par[a] < 0 else idx[par[a]] for a in elems]
    lits = []
    for name, k in relations:
        for t in product(range(len(elems)), repeat=k):
            lits.append((name, t, A.holds(name, tuple(elems[s] for s in t))))
    return ClosureType.make(parents, [idx[a] for a in nodes], lits, relations)


def embeddings(ct: ClosureType, A: Structure, fixed: Mapping[int, int],
               check_literals: bool = True) -> Iterator[list[int]]:
    """All slot assignments realising ct in A that agree with `fixed` (position -> node)."""
    tree = A.tree
    par, lev = tree.parent_list, tree.level_list
    depths = ct.depths
    slot_node = [-1] * ct.nslots
    for i, a in fixed.items():
        s = ct.var_slots[i]
        if lev[a] != depths[s]:
            return
        while s >= 0:
            if slot_node[s] < 0:
                slot_node[s] = a
            elif slot_node[s] != a:
                return
            else:
                break
            s, a = ct.parents[s], par[a]
    slot_node[0] = tree.root
    used = [a for a in slot_node if a >= 0]
    if len(set(used)) != len(used):
        return
    todo = [s for s in range(ct.nslots) if slot_node[s] < 0]
    lits = sorted(ct.literals) if check_literals else []

    def rec(k: int, taken: set):
        if k == len(todo):
            for name, tup, sign in lits:
                if A.holds(name, tuple(slot_node[s] for s in tup)) != sign:
                    return
            yield [slot_node[ct.var_slots[i]] for i in range(ct.nvars)]
            return
        s = todo[k]
        for c in tree.children(slot_node[ct.parents[s]]):
            if c in taken:
                continue
            slot_node[s] = c
            taken.add(c)
            yield from rec(k + 1, taken)
            taken.discard(c)
        slot_node[s] = -1

    yield from rec(0, set(used))


# ---------------------------------------------------------------------------
# enumeration


def skeletons(k: int, delta: int) -> list[ClosureType]:
    """All closure types over tau in k variables for trees of height <= delta."""
    if k > MAX_VARS:
        raise TooManyVariables(f"{k} variables exceed the cap of {MAX_VARS}")
    if delta > MAX_DELTA:
        raise TooManyVariables(f"delta {delta} exceeds the cap of {MAX_DELTA}")
    found: dict[ClosureType, None] = {}

    def rec(parents: list[int], var_slots: list[int]):
        if len(var_slots) == k:
            found.setdefault(ClosureType.make(parents, var_slots), None)
            return
        depth = [0] * len(parents)
        for s in range(1, len(parents)):
            depth[s] = depth[parents[s]] + 1
        # an existing slot
        for s in range(len(parents)):
            rec(parents, var_slots + [s])
        # a fresh chain hanging below an existing slot
        for s in range(len(parents)):
            for length in range(1, delta - depth[s] + 1):
                ps = list(parents)
                at = s
                for _ in range(length):
                    ps.append(at)
                    at = len(ps) - 1
                rec(ps, var_slots + [at])

    rec([-1], [])
    if k == 0:
        return [ClosureType.make([-1], [])]
    return sorted(found, key=_sort_key)


def _sort_key(ct: ClosureType):
    return (ct.nslots, ct.parents, ct.var_slots, sorted(ct.literals))


def enumerate_complete_closure_types(sig: Signature, nvars: int, delta: int,
                                     max_types: int = 1 << 20) -> list[ClosureType]:
    out = []
    for sk in skeletons(nvars, delta):
        free = sum(sk.nslots ** k for _, k in sig.relations)
        if len(out) + (1 << free) > max_types:
            raise TooManyVariables(f"catalog would exceed {max_types} types")
        out.extend(sk.with_relations(sig.relations).completions())
    return out


# ---------------------------------------------------------------------------
# transforms


def self_contained_transform(p: ClosureType) -> tuple[ClosureType, tuple[int, ...]]:
    """Name every existential witness; returns p* and the positions of the new variables."""
    ex = p.existential_slots
    if not ex:
        return p, ()
    star = ClosureType.make(p.parents, list(p.var_slots) + ex, p.literals, p.relations)
    return star, tuple(range(p.nvars, p.nvars + len(ex)))


def decompose_rank_step(p: ClosureType, bound: Sequence[int]) -> tuple[int, ClosureType, tuple[int, ...]]:
    """Split a rank >= 2 type: a pivot u of rank 1 over the outer variables, and the rest.

    Returns (u, q, remainder) where q = p restricted to (outer, u), with u last.
    """
    bound = list(bound)
    outer = [i for i in range(p.nvars) if i not in bound]
    r = p.rank(bound)
    if r < 2:
        raise NotDecomposable(f"rank {r} < 2")
    if not p.is_y_independent(bound):
        raise NotDecomposable("type is not independent of the outer variables")
    outer_cl = p.cl_slots(outer)
    bound_slots = {p.var_slots[i] for i in bound}
    if any(s not in outer_cl and s not in bound_slots for s in range(p.nslots)):
        raise NotDecomposable("bound part has unnamed witnesses; apply self_contained_transform")
    for u in bound:
        if p.parents[p.var_slots[u]] in outer_cl:
            q = p.restrict_vars(outer + [u])
            return u, q, tuple(i for i in bound if i != u)
    raise NotDecomposable("no bound variable is a child of the outer closure")


def is_y_positive_over_tau(chi: ClosureType, bound: Sequence[int]):
    """True when positivity is licensed (over tau, or rank 0); otherwise 'unknown'."""
    if chi.is_over_tau() or chi.rank(bound) == 0:
        return True
    return "unknown"


# ---------------------------------------------------------------------------
# closure-basic formulas


@dataclass(frozen=True)
class ClosureBasicFormula:
    """/\\ (p_i -> c_i) over pairwise inconsistent complete types p_i."""

    variables: tuple[str, ...]
    entries: tuple[tuple[ClosureType, object], ...]
    relations: tuple[tuple[str, int], ...]
    exhaustive: bool = True
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        idx = {}
        for p, c in self.entries:
            if p.nvars != len(self.variables):
                raise InvalidType("type arity differs from the variable list")
            if p in idx:
                raise InvalidType("duplicate type in closure-basic formula")
            idx[p] = c
        object.__setattr__(self, "_index", idx)

    def value_for(self, p: ClosureType):
        return self._index.get(p, Fraction(1))

    def value_at(self, A: Structure, nodes: Sequence[int]):
        return self.value_for(type_of(A, nodes, self.relations))

    def constant(self):
        """The common value when the formula is constant, else None."""
        vals = {c for _, c in self.entries}
        if self.exhaustive and len(vals) == 1:
            return next(iter(vals))
        return None

    def to_formula(self):
        from .logic.formula import Conn, Const, TypeAtom
        if self.constant() is not None:
            return Const(self.constant())
        parts = tuple(Conn("implies", (TypeAtom(p, self.variables), Const(c)))
                      for p, c in self.entries)
        if not parts:
            return Const(Fraction(1))
        return parts[0] if len(parts) == 1 else Conn("and", parts)
