"""Base trees: construction, closure, subtree counting, generators and text I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import (BadConfig, Cycle, DanglingParent, EmptyTree, InputError,
                     InvalidId, MultipleRoots)

TREE_SYMBOL = "E"


@dataclass(frozen=True)
class Signature:
    """sigma minus tau as (name, arity) pairs; the tree symbol E is implicit."""

    relations: tuple[tuple[str, int], ...] = ()
    tree_symbol: str = TREE_SYMBOL

    def __post_init__(self):
        names = [r for r, _ in self.relations]
        if len(set(names)) != len(names):
            raise InputError(f"duplicate relation names in {names}")
        if self.tree_symbol in names:
            raise InputError(f"{self.tree_symbol} is reserved for the tree")
        for name, k in self.relations:
            if k < 1:
                raise InputError(f"relation {name} needs arity >= 1")

    def arity(self, name: str) -> int:
        if name == self.tree_symbol:
            return 2
        for r, k in self.relations:
            if r == name:
                return k
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return name == self.tree_symbol or any(r == name for r, _ in self.relations)

    def names(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.relations)

    def restrict(self, names: Iterable[str]) -> "Signature":
        keep = set(names)
        return Signature(tuple((r, k) for r, k in self.relations if r in keep))


class Tree:
    """Immutable rooted tree on ids 0..N-1.

    Arrays (parent, level, CSR children) serve the vectorised code; the list
    mirrors serve scalar loops, which are much faster on Python ints.
    """

    __slots__ = ("parent", "level", "child_ptr", "child_idx", "root", "height",
                 "parent_list", "level_list", "_anc")

    def __init__(self, parent: np.ndarray, level: np.ndarray):
        n = len(parent)
        self.parent = parent
        self.level = level
        self.root = int(np.flatnonzero(parent < 0)[0])
        self.height = int(level.max())
        order = np.argsort(parent, kind="stable")
        counts = np.bincount(parent[parent >= 0], minlength=n)
        self.child_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.child_idx = order[n - int(counts.sum()):].astype(np.int64) if n else order
        self.parent_list = parent.tolist()
        self.level_list = level.tolist()
        self._anc = None
        for arr in (self.parent, self.level, self.child_ptr, self.child_idx):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.parent_list)

    def __eq__(self, other) -> bool:
        return isinstance(other, Tree) and self.parent_list == other.parent_list

    def __hash__(self) -> int:
        return hash(tuple(self.parent_list))

    def __repr__(self) -> str:
        return f"Tree(n={len(self)}, height={self.height})"

    def children(self, a: int) -> list[int]:
        return self.child_idx[self.child_ptr[a]:self.child_ptr[a + 1]].tolist()

    def n_children(self, a: int) -> int:
        return int(self.child_ptr[a + 1] - self.child_ptr[a])

    def ancestors(self, a: int) -> list[int]:
        """Proper ancestors of a, nearest first."""
        out = []
        p = self.parent_list[a]
        while p >= 0:
            out.append(p)
            p = self.parent_list[p]
        return out

    def ancestor_table(self) -> np.ndarray:
        """anc[d, v] is the ancestor of v on level d, or -1 if level(v) < d."""
        if self._anc is None:
            n = len(self)
            anc = np.full((self.height + 1, n), -1, dtype=np.int64)
            idx = np.arange(n)
            cur = idx.copy()
            for _ in range(self.height + 1):
                ok = cur >= 0
                anc[self.level[cur[ok]], idx[ok]] = cur[ok]
                cur = np.where(ok, self.parent[np.maximum(cur, 0)], -1)
            anc.setflags(write=False)
            self._anc = anc
        return self._anc

    def leaves(self) -> list[int]:
        return np.flatnonzero(np.diff(self.child_ptr) == 0).tolist()

    def nodes_on_level(self, d: int) -> list[int]:
        return np.flatnonzero(self.level == d).tolist()


def build_tree(parent_list: Sequence[Optional[int]]) -> Tree:
    """Validate a parent list (None or -1 marks the root) and build the tree.

    Ids are kept as given; generated trees come out in BFS order already.
    """
    n = len(parent_list)
    if n == 0:
        raise EmptyTree("a tree needs at least the root")
    parents = [-1 if p is None else int(p) for p in parent_list]
    roots = [i for i, p in enumerate(parents) if p < 0]
    if len(roots) != 1:
        if not roots:
            raise Cycle("no root: every node has a parent")
        raise MultipleRoots(f"nodes {roots} have no parent")
    for i, p in enumerate(parents):
        if p >= n or (p < 0 and p != -1):
            raise DanglingParent(f"node {i} has parent {p} outside 0..{n - 1}")
    kids: list[list[int]] = [[] for _ in range(n)]
    for i, p in enumerate(parents):
        if p >= 0:
            kids[p].append(i)
    level = [-1] * n
    level[roots[0]] = 0
    frontier = [roots[0]]
    seen = 1
    while frontier:
        nxt = []
        for a in frontier:
            for c in kids[a]:
                level[c] = level[a] + 1
                nxt.append(c)
        seen += len(nxt)
        frontier = nxt
    if seen != n:
        bad = [i for i in range(n) if level[i] < 0]
        raise Cycle(f"nodes {bad[:10]} are not connected to the root")
    return Tree(np.asarray(parents, dtype=np.int64), np.asarray(level, dtype=np.int64))


def _check_ids(tree: Tree, nodes: Iterable[int]) -> list[int]:
    out = []
    for a in nodes:
        if not isinstance(a, (int, np.integer)) or not 0 <= a < len(tree):
            raise InvalidId(f"{a!r} is not a node of {tree!r}")
        out.append(int(a))
    return out


def closure(tree: Tree, nodes: Iterable[int]) -> frozenset[int]:
    out = {tree.root}
    par = tree.parent_list
    for a in _check_ids(tree, nodes):
        while a >= 0 and a not in out:
            out.add(a)
            a = par[a]
    return frozenset(out)


# ---------------------------------------------------------------------------
# subtree counting


def canonical_shape(tree: Tree, a: Optional[int] = None) -> str:
    """AHU encoding of the subtree below a (the whole tree by default)."""
    if a is None:
        a = tree.root
    codes: dict[int, str] = {}
    order = [a]
    i = 0
    while i < len(order):
        order.extend(tree.children(order[i]))
        i += 1
    for v in reversed(order):
        codes[v] = "(" + "".join(sorted(codes[c] for c in tree.children(v))) + ")"
    return codes[a]


def _split_shape(code: str) -> tuple[str, ...]:
    """Children codes of a canonical shape code."""
    parts, depth, start = [], 0, 1
    for i in range(1, len(code) - 1):
        depth += 1 if code[i] == "(" else -1
        if depth == 0:
            parts.append(code[start:i + 1])
            start = i + 1
    return tuple(parts)


def count_rooted_subtrees(tree: Tree, a: int, pattern: Tree) -> int:
    """Number of subtrees of tree rooted at a that are isomorphic to pattern.

    A subtree rooted at a is a set containing a and closed under taking parents
    up to a.  Children of a are matched to the pattern's child classes in a
    fixed order, so each set is counted exactly once.
    """
    (a,) = _check_ids(tree, [a])

    @lru_cache(maxsize=None)
    def count(v: int, shape: str) -> int:
        kids = _split_shape(shape)
        if not kids:
            return 1
        classes = sorted(set(kids))
        need = tuple(kids.count(c) for c in classes)
        children = tree.children(v)
        if len(children) < len(kids):
            return 0
        # ways[state] after processing a prefix of children; state = remaining needs
        ways = {need: 1}
        for c in children:
            sub = [count(c, cls) for cls in classes]
            nxt = dict(ways)
            for state, w in ways.items():
                for j, rem in enumerate(state):
                    if rem and sub[j]:
                        s2 = state[:j] + (rem - 1,) + state[j + 1:]
                        nxt[s2] = nxt.get(s2, 0) + w * sub[j]
            ways = nxt
        return ways.get(tuple(0 for _ in classes), 0)

    return count(a, canonical_shape(pattern))


# ---------------------------------------------------------------------------
# generators

PROFILES = ("uniform", "schedule", "custom", "mixed-leaves", "few-big")


@dataclass(frozen=True)
class TreeGenConfig:
    delta: int = 2
    profile: str = "uniform"
    n: int = 2
    counts: tuple[int, ...] = ()                     # schedule: children per level
    child_count: Optional[Callable[[int, int, int], int]] = field(default=None, compare=False)
    assumption_tag: str = ""

    def tag(self) -> str:
        if self.assumption_tag:
            return self.assumption_tag
        if self.profile == "uniform":
            return "full"
        if self.profile == "schedule":
            return "light"
        if self.profile in ("mixed-leaves", "few-big"):
            return "violating"
        return "unknown"


def _from_level_counts(per_level: list[np.ndarray]) -> Tree:
    """per_level[d][i] = number of children of the i-th node on level d."""
    parents = [np.array([-1], dtype=np.int64)]
    levels = [np.array([0], dtype=np.int64)]
    first = 0
    for d, counts in enumerate(per_level):
        width = len(parents[-1])
        if len(counts) != width:
            raise BadConfig("child counts do not match level width")
        ids = np.arange(first, first + width, dtype=np.int64)
        kids = np.repeat(ids, counts)
        first += width
        if len(kids) == 0:
            break
        parents.append(kids)
        levels.append(np.full(len(kids), d + 1, dtype=np.int64))
    return Tree(np.concatenate(parents), np.concatenate(levels))


def generate_tree(cfg: TreeGenConfig) -> Tree:
    n, delta = cfg.n, cfg.delta
    if n < 1 or delta < 1:
        raise BadConfig("need n >= 1 and delta >= 1")
    per_level: list[np.ndarray] = []
    width = 1
    if cfg.profile == "uniform":
        for _ in range(delta):
            per_level.append(np.full(width, n, dtype=np.int64))
            width *= n
    elif cfg.profile == "schedule":
        if len(cfg.counts) != delta or min(cfg.counts, default=0) < 1:
            raise BadConfig("schedule needs one positive count per level")
        for k in cfg.counts:
            per_level.append(np.full(width, k, dtype=np.int64))
            width *= k
    elif cfg.profile == "custom":
        if cfg.child_count is None:
            raise BadConfig("custom profile needs child_count(n, level, index)")
        for d in range(delta):
            counts = np.array([cfg.child_count(n, d, i) for i in range(width)], dtype=np.int64)
            if (counts < 0).any():
                raise BadConfig("negative child count")
            per_level.append(counts)
            width = int(counts.sum())
    elif cfg.profile in ("mixed-leaves", "few-big"):
        if delta != 2:
            raise BadConfig(f"{cfg.profile} trees have height 2")
        second = np.full(n, n, dtype=np.int64)
        if cfg.profile == "mixed-leaves":
            with_kids = n // 2 if n % 2 == 0 else n // 3
            second[with_kids:] = 0
        elif n % 2:
            second[0] = 2 * n ** 3
        else:
            second[:2] = n ** 3
        per_level = [np.array([n], dtype=np.int64), second]
    else:
        raise BadConfig(f"unknown profile {cfg.profile!r}; expected one of {PROFILES}")
    return _from_level_counts(per_level)


# ---------------------------------------------------------------------------
# text formats


def dumps_tree(tree: Tree) -> str:
    lines = ["tree v1", f"n={len(tree)}"]
    for i, p in enumerate(tree.parent_list):
        lines.append(f"{i} {'-' if p < 0 else p}")
    return "\n".join(lines) + "\n"


def loads_tree(text: str) -> Tree:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "tree v1":
        raise InputError("tree file must start with 'tree v1'")
    if len(lines) < 2 or not lines[1].startswith("n="):
        raise InputError("second line must be n=<count>")
    n = int(lines[1][2:])
    parents: list[Optional[int]] = [None] * n
    seen = set()
    for ln in lines[2:]:
        parts = ln.split()
        if len(parts) != 2:
            raise InputError(f"bad tree line {ln!r}")
        i = int(parts[0])
        if not 0 <= i < n or i in seen:
            raise InvalidId(f"bad or repeated node id {i}")
        seen.add(i)
        parents[i] = None if parts[1] == "-" else int(parts[1])
    if len(seen) != n:
        raise InputError(f"expected {n} node lines, got {len(seen)}")
    return build_tree(parents)


def parse_tree_spec(spec: str) -> TreeGenConfig | Tree:
    """`uniform:delta=2,n=50`, `schedule:counts=3/5`, `few-big:n=21` or `file:path`."""
    kind, _, rest = spec.partition(":")
    if kind == "file":
        with open(rest) as fh:
            return loads_tree(fh.read())
    opts = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        opts[key.strip()] = val.strip()
    try:
        if kind == "schedule":
            counts = tuple(int(c) for c in opts.pop("counts").split("/"))
            return TreeGenConfig(delta=len(counts), profile="schedule", n=int(opts.pop("n", 1)),
                                 counts=counts)
        delta = int(opts.pop("delta", 2))
        n = int(opts.pop("n"))
    except (KeyError, ValueError) as e:
        raise BadConfig(f"bad tree spec {spec!r}: {e}") from None
    if opts:
        raise BadConfig(f"unknown tree options {sorted(opts)}")
    return TreeGenConfig(delta=delta, profile=kind, n=n)


def resolve_tree(spec: str | Tree | TreeGenConfig) -> Tree:
    if isinstance(spec, Tree):
        return spec
    if isinstance(spec, str):
        spec = parse_tree_spec(spec)
        if isinstance(spec, Tree):
            return spec
    return generate_tree(spec)
