"""Finite structures: expansions of trees (possible worlds) and plain finite structures."""

from __future__ import annotations

from itertools import product
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidId, SignatureMismatch
from .trees import TREE_SYMBOL, Signature, Tree

DENSE_CAP = 1 << 22


class Relation:
    """A set of k-tuples over range(n).

    Small relations are a dense boolean tensor; larger ones keep sorted integer
    codes (mixed radix n) so that batch membership is a binary search.
    """

    __slots__ = ("arity", "n", "dense", "codes")

    def __init__(self, arity: int, n: int, tuples: Iterable[Sequence[int]] = (),
                 dense: Optional[np.ndarray] = None, codes: Optional[np.ndarray] = None):
        self.arity, self.n = arity, n
        self.dense = self.codes = None
        if dense is not None:
            self.dense = np.asarray(dense, dtype=bool).reshape((n,) * arity)
        elif codes is not None:
            self.codes = np.unique(np.asarray(codes, dtype=np.int64))
        else:
            arr = np.asarray(list(tuples), dtype=np.int64).reshape(-1, arity)
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise InvalidId(f"tuple outside 0..{n - 1}")
            if n ** arity <= DENSE_CAP:
                self.dense = np.zeros((n,) * arity, dtype=bool)
                if len(arr):
                    self.dense[tuple(arr.T)] = True
            else:
                self.codes = np.unique(self._encode(arr.T))
        if self.dense is None and self.codes is None:
            raise ValueError("empty relation spec")

    def _encode(self, cols) -> np.ndarray:
        code = np.zeros(len(cols[0]) if len(cols) else 0, dtype=np.int64)
        for c in cols:
            code = code * self.n + np.asarray(c, dtype=np.int64)
        return code

    def contains(self, tup: Sequence[int]) -> bool:
        if self.dense is not None:
            return bool(self.dense[tuple(tup)])
        code = 0
        for a in tup:
            code = code * self.n + a
        i = np.searchsorted(self.codes, code)
        return bool(i < len(self.codes) and self.codes[i] == code)

    def contains_batch(self, cols: Sequence[np.ndarray]) -> np.ndarray:
        if self.dense is not None:
            return self.dense[tuple(cols)]
        code = self._encode(cols)
        i = np.searchsorted(self.codes, code)
        i = np.minimum(i, len(self.codes) - 1)
        return (self.codes[i] == code) if len(self.codes) else np.zeros(len(code), dtype=bool)

    def tuples(self) -> list[tuple[int, ...]]:
        if self.dense is not None:
            return [tuple(int(v) for v in t) for t in np.argwhere(self.dense)]
        out = []
        for code in self.codes.tolist():
            t = []
            for _ in range(self.arity):
                code, r = divmod(code, self.n)
                t.append(r)
            out.append(tuple(reversed(t)))
        return out

    def __len__(self) -> int:
        return int(self.dense.sum()) if self.dense is not None else len(self.codes)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Relation) and self.arity == other.arity
                and self.n == other.n and self.tuples() == other.tuples())

    def __hash__(self):
        return hash((self.arity, self.n, tuple(self.tuples())))


class Structure:
    """Common interface used by the evaluators."""

    size: int
    signature: Signature
    tree: Optional[Tree] = None

    def relation(self, name: str) -> Relation:
        raise NotImplementedError

    def holds(self, name: str, tup: Sequence[int]) -> bool:
        return self.relation(name).contains(tup)

    def holds_batch(self, name: str, cols: Sequence[np.ndarray]) -> np.ndarray:
        return self.relation(name).contains_batch(cols)


def _as_relation(rel, arity: int, n: int) -> Relation:
    if isinstance(rel, Relation):
        if rel.arity != arity or rel.n != n:
            raise SignatureMismatch("relation has wrong arity or domain")
        return rel
    if isinstance(rel, np.ndarray) and rel.dtype == bool:
        return Relation(arity, n, dense=rel)
    return Relation(arity, n, rel)


class SigmaStructure(Structure):
    """A tree expanded by interpretations of sigma minus tau."""

    def __init__(self, tree: Tree, signature: Signature, interp: Mapping[str, object] = ()):
        self.tree = tree
        self.size = len(tree)
        self.signature = signature
        interp = dict(interp)
        extra = set(interp) - set(signature.names())
        if extra:
            raise SignatureMismatch(f"relations {sorted(extra)} not in the signature")
        self.interp = {name: _as_relation(interp.get(name, ()), k, self.size)
                       for name, k in signature.relations}

    def relation(self, name: str) -> Relation:
        if name == TREE_SYMBOL:
            return _TreeEdges(self.tree)
        try:
            return self.interp[name]
        except KeyError:
            raise SignatureMismatch(f"{name} is not interpreted") from None

    def holds(self, name: str, tup: Sequence[int]) -> bool:
        if name == TREE_SYMBOL:
            a, b = tup
            return self.tree.parent_list[b] == a
        try:
            return self.interp[name].contains(tup)
        except KeyError:
            raise SignatureMismatch(f"{name} is not interpreted") from None

    def reduct(self, names: Iterable[str]) -> "SigmaStructure":
        sig = self.signature.restrict(names)
        return SigmaStructure(self.tree, sig, {r: self.interp[r] for r in sig.names()})

    def key(self) -> tuple:
        return tuple((r, tuple(self.interp[r].tuples())) for r in self.signature.names())

    def __eq__(self, other) -> bool:
        return isinstance(other, SigmaStructure) and self.tree == other.tree and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self) -> str:
        rels = ", ".join(f"{r}={self.interp[r].tuples()}" for r in self.signature.names())
        return f"SigmaStructure({self.tree!r}, {rels})"


class _TreeEdges(Relation):
    def __init__(self, tree: Tree):
        self.arity, self.n = 2, len(tree)
        self.tree = tree

    def contains(self, tup) -> bool:
        a, b = tup
        return self.tree.parent_list[b] == a

    def contains_batch(self, cols) -> np.ndarray:
        a, b = cols
        return self.tree.parent[b] == a

    def tuples(self):
        return sorted((p, c) for c, p in enumerate(self.tree.parent_list) if p >= 0)

    def __len__(self):
        return self.n - 1


class FiniteStructure(Structure):
    """Arbitrary finite structure; E is an ordinary binary relation here."""

    def __init__(self, size: int, relations: Mapping[str, tuple[int, Iterable[Sequence[int]]]]):
        self.size = size
        rels = {name: k for name, (k, _) in relations.items() if name != TREE_SYMBOL}
        self.signature = Signature(tuple(sorted(rels.items())))
        self.rels = {name: Relation(k, size, tups) for name, (k, tups) in relations.items()}
        if TREE_SYMBOL not in self.rels:
            self.rels[TREE_SYMBOL] = Relation(2, size, ())

    def relation(self, name: str) -> Relation:
        try:
            return self.rels[name]
        except KeyError:
            raise SignatureMismatch(f"{name} is not interpreted") from None


def all_expansions(tree: Tree, signature: Signature):
    """Every expansion of tree to signature; exponential, for tiny oracles only."""
    slots = [(name, t) for name, k in signature.relations
             for t in product(range(len(tree)), repeat=k)]
    for bits in product((False, True), repeat=len(slots)):
        interp: dict[str, list] = {name: [] for name in signature.names()}
        for (name, t), b in zip(slots, bits):
            if b:
                interp[name].append(t)
        yield SigmaStructure(tree, signature, interp)
