"""Connectives and aggregation functions, with ct-limits.

Values are Fractions when every operand is a Fraction and the operation stays
rational; otherwise floats.  `batch` variants work on float arrays grouped by
segment ids and back the vectorised evaluator.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import BadParameters, UnknownSymbol
from .formula import Num

CONTINUOUS, ADMISSIBLE, NEITHER = "continuous", "admissible", "neither"


def as_num(x) -> Num:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return float(x)


def _iroot(n: int, k: int) -> Optional[int]:
    """Exact integer k-th root of n >= 0, or None."""
    if n < 2:
        return n
    r = int(round(n ** (1.0 / k))) if n < (1 << 1000) else 1 << (n.bit_length() // k)
    # Newton refinement for large values
    while True:
        nr = ((k - 1) * r + n // r ** (k - 1)) // k
        if abs(nr - r) <= 1:
            break
        r = nr
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


def rational_power(x: Num, e: Fraction) -> Num:
    """x ** e, exactly when the result is rational."""
    if isinstance(x, Fraction) and isinstance(e, Fraction):
        if x == 0:
            return Fraction(0) if e > 0 else Fraction(1)
        base = x ** e.numerator if e >= 0 else (1 / x) ** (-e.numerator)
        if e.denominator == 1:
            return base
        rn, rd = _iroot(base.numerator, e.denominator), _iroot(base.denominator, e.denominator)
        if rn is not None and rd is not None:
            return Fraction(rn, rd)
    return float(x) ** float(e)


def _clamp(x: Num) -> Num:
    return as_num(min(max(x, 0), 1))


@dataclass(frozen=True)
class Connective:
    name: str
    arity: Optional[int]                 # None: any arity >= 1
    fn: Callable[[Sequence[Num]], Num]
    continuous: bool = True
    batch: Optional[Callable[[list], np.ndarray]] = field(default=None, compare=False)
    params: tuple = ()

    def __call__(self, *args: Num) -> Num:
        return self.fn(args)


@dataclass(frozen=True)
class AggregationFunction:
    name: str
    arity: int
    fn: Callable[[Sequence[Sequence[Num]]], Num]
    cls: str
    limit: Optional[Callable[[list], Num]] = field(default=None, compare=False)
    batch: Optional[Callable] = field(default=None, compare=False)
    params: tuple = ()
    zero_neutral: bool = False           # appending zeros to a nonempty input never changes the value

    def __call__(self, *seqs: Sequence[Num]) -> Num:
        return self.fn(seqs)

    def ct_limit(self, params: list[list[tuple[Num, Num]]]) -> Num:
        """Limit value for convergence testing parameters, one (c, alpha) list per slot."""
        if self.limit is None:
            raise BadParameters(f"{self.name} has no ct-limit (class {self.cls})")
        if len(params) != self.arity:
            raise BadParameters(f"{self.name} takes {self.arity} parameter lists")
        for slot in params:
            check_params(slot)
            if self.cls == ADMISSIBLE and any(a == 0 for _, a in slot):
                raise BadParameters(f"{self.name} is only admissible: drop alpha = 0 entries")
        return self.limit(params)


def check_params(slot: Sequence[tuple[Num, Num]]):
    if not slot:
        raise BadParameters("empty parameter list")
    total = sum(a for _, a in slot)
    exact = all(isinstance(a, Fraction) for _, a in slot)
    if (exact and total != 1) or (not exact and abs(total - 1) > 1e-9):
        raise BadParameters(f"alphas sum to {total}, not 1")
    for c, a in slot:
        if not (0 <= c <= 1 and 0 <= a <= 1):
            raise BadParameters(f"parameter ({c}, {a}) outside [0,1]")


# ---------------------------------------------------------------------------
# built-in connectives


def _and(xs):
    return min(xs)


def _or(xs):
    return max(xs)


def _not(xs):
    return 1 - xs[0]


def _implies(xs):
    return min(Fraction(1), 1 - xs[0] + xs[1])


def _product(xs):
    out = Fraction(1)
    for x in xs:
        out = out * x
    return out


def _affine(a: Num, b: Num) -> Connective:
    return Connective("affine", 1, lambda xs: _clamp(a * xs[0] + b),
                      batch=lambda xs: np.clip(float(a) * xs[0] + float(b), 0.0, 1.0),
                      params=(a, b))


_CONNECTIVES: dict[str, Callable[..., Connective]] = {
    "not": lambda: Connective("not", 1, _not, batch=lambda xs: 1.0 - xs[0]),
    "and": lambda: Connective("and", None, _and, batch=lambda xs: np.minimum.reduce(xs)),
    "or": lambda: Connective("or", None, _or, batch=lambda xs: np.maximum.reduce(xs)),
    "implies": lambda: Connective("implies", 2, _implies,
                                  batch=lambda xs: np.minimum(1.0, 1.0 - xs[0] + xs[1])),
    "product": lambda: Connective("product", None, _product,
                                  batch=lambda xs: np.multiply.reduce(xs)),
    "affine": _affine,
}


# ---------------------------------------------------------------------------
# built-in aggregation functions


def _seg_sum(values, seg, nseg):
    return np.bincount(seg, weights=values, minlength=nseg)


def _seg_count(seg, nseg):
    return np.bincount(seg, minlength=nseg).astype(float)


def _seg_extreme(values, seg, nseg, fn, empty):
    out = np.full(nseg, empty)
    fn.at(out, seg, values)
    return out


def _mean(xs):
    total = sum(xs, Fraction(0)) if all(isinstance(x, Fraction) for x in xs) else math.fsum(map(float, xs))
    return total / len(xs)


def _gm(xs):
    if any(x == 0 for x in xs):
        return Fraction(0) if all(isinstance(x, Fraction) for x in xs) else 0.0
    if all(isinstance(x, Fraction) for x in xs):
        return rational_power(_product(xs), Fraction(1, len(xs)))
    return math.exp(math.fsum(math.log(x) for x in xs) / len(xs))


def _gm_batch(slots, nseg):
    (v, seg), = slots
    cnt = _seg_count(seg, nseg)
    zero = np.bincount(seg, weights=(v <= 0).astype(float), minlength=nseg) > 0
    logs = _seg_sum(np.log(np.where(v > 0, v, 1.0)), seg, nseg)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.exp(logs / np.maximum(cnt, 1))
    return np.where(zero, 0.0, out)


def _gm_limit(params):
    out = Fraction(1)
    for c, a in params[0]:
        if a == 0:
            continue
        if c == 0:
            return Fraction(0)
        out = out * rational_power(c, a) if isinstance(a, Fraction) else out * float(c) ** float(a)
    return out


def _lengthpow(beta: Num = Fraction(1)) -> AggregationFunction:
    beta = as_num(beta)
    if beta <= 0:
        raise BadParameters("lengthpow needs beta > 0")
    name = "lengthpow"

    def fn(seqs):
        n = len(seqs[0])
        if n == 0:
            return Fraction(0)
        return rational_power(Fraction(n), -beta) if isinstance(beta, Fraction) else n ** -beta

    def batch(slots, nseg):
        (_, seg), = slots
        cnt = _seg_count(seg, nseg)
        with np.errstate(divide="ignore"):
            return np.where(cnt > 0, np.maximum(cnt, 1) ** -float(beta), 0.0)

    return AggregationFunction(name, 1, fn, CONTINUOUS, limit=lambda p: Fraction(0),
                               batch=batch, params=() if beta == 1 else (beta,))


def _noisy_or(seqs):
    out = Fraction(1) if all(isinstance(x, Fraction) for x in seqs[0]) else 1.0
    for x in seqs[0]:
        out = out * (1 - x)
    return 1 - out


def _noisy_or_batch(slots, nseg):
    (v, seg), = slots
    one = np.bincount(seg, weights=(v >= 1).astype(float), minlength=nseg) > 0
    logs = _seg_sum(np.log1p(-np.minimum(v, np.nextafter(1.0, 0.0))), seg, nseg)
    return np.where(one, 1.0, 1.0 - np.exp(logs))


def _one(fn):
    return lambda seqs: fn(list(seqs[0])) if len(seqs[0]) else Fraction(0)


_AGGREGATIONS: dict[str, Callable[..., AggregationFunction]] = {
    "max": lambda: AggregationFunction(
        "max", 1, _one(max), ADMISSIBLE,
        limit=lambda p: max(c for c, a in p[0] if a > 0),
        batch=lambda s, n: _seg_extreme(s[0][0], s[0][1], n, np.maximum, -np.inf),
        zero_neutral=True),
    "min": lambda: AggregationFunction(
        "min", 1, _one(min), ADMISSIBLE,
        limit=lambda p: min(c for c, a in p[0] if a > 0),
        batch=lambda s, n: _seg_extreme(s[0][0], s[0][1], n, np.minimum, np.inf)),
    "am": lambda: AggregationFunction(
        "am", 1, _one(_mean), CONTINUOUS,
        limit=lambda p: sum((a * c for c, a in p[0]), Fraction(0)),
        batch=lambda s, n: _seg_sum(s[0][0], s[0][1], n) / np.maximum(_seg_count(s[0][1], n), 1)),
    "gm": lambda: AggregationFunction("gm", 1, _one(_gm), CONTINUOUS, limit=_gm_limit, batch=_gm_batch),
    "lengthpow": _lengthpow,
    "tsum": lambda: AggregationFunction(
        "tsum", 1, _one(lambda xs: min(Fraction(1), sum(xs, Fraction(0)))), NEITHER,
        batch=lambda s, n: np.minimum(1.0, _seg_sum(s[0][0], s[0][1], n)), zero_neutral=True),
    "noisy-or": lambda: AggregationFunction("noisy-or", 1, _one(lambda xs: _noisy_or([xs])),
                                            NEITHER, batch=_noisy_or_batch, zero_neutral=True),
}


class Registry:
    """Name -> factory tables for connectives and aggregation functions."""

    def __init__(self, connectives=None, aggregations=None):
        self.connectives = dict(_CONNECTIVES if connectives is None else connectives)
        self.aggregations = dict(_AGGREGATIONS if aggregations is None else aggregations)
        self._cache: dict = {}

    def connective(self, name: str, params: tuple = ()) -> Connective:
        key = ("c", name, params)
        if key not in self._cache:
            try:
                factory = self.connectives[name]
            except KeyError:
                raise UnknownSymbol(f"unknown connective {name!r}") from None
            try:
                self._cache[key] = factory(*params)
            except TypeError:
                raise BadParameters(f"bad parameters {params} for {name}") from None
        return self._cache[key]

    def aggregation(self, name: str, params: tuple = ()) -> AggregationFunction:
        key = ("a", name, params)
        if key not in self._cache:
            try:
                factory = self.aggregations[name]
            except KeyError:
                raise UnknownSymbol(f"unknown aggregation function {name!r}") from None
            try:
                self._cache[key] = factory(*params)
            except TypeError:
                raise BadParameters(f"bad parameters {params} for {name}") from None
        return self._cache[key]

    def register_connective(self, name: str, arity: int, fn: Callable, continuous: bool = True,
                            probes: int = 200, seed: int = 0):
        """Add a user connective; the continuity flag is spot-checked, not proven."""
        rng = random.Random(seed)
        for _ in range(probes):
            xs = [rng.random() for _ in range(arity)]
            y = fn(xs)
            if not 0 <= y <= 1:
                raise BadParameters(f"{name} left [0,1] at {xs}")
            if continuous:
                ys = [min(1.0, x + 1e-9) for x in xs]
                if abs(fn(ys) - y) > 1e-3:
                    raise BadParameters(f"{name} declared continuous but jumps near {xs}")
        self.connectives[name] = lambda: Connective(name, arity, fn, continuous)
        self._cache.pop(("c", name, ()), None)

    def register_aggregation(self, agg: AggregationFunction):
        self.aggregations[agg.name] = lambda: agg
        self._cache.pop(("a", agg.name, ()), None)


def builtin_registry() -> Registry:
    return Registry()


DEFAULT = Registry()
