"""Randomised convergence-testing probes for aggregation functions.

A convergence-testing sequence of length L for parameters (c_j, alpha_j) puts
about alpha_j * L entries near c_j.  Entries with alpha_j = 0 appear o(L)
times: none half of the time, otherwise up to sqrt(L).  Each sequence draws
its own window width in [0, L^-1/2], sometimes exactly 0, so two sequences
with the same parameters can differ in every way the definition allows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .registry import AggregationFunction, check_params


@dataclass
class ProbeResult:
    discrepancy: float                        # max |F(p) - F(q)| at the largest length
    per_length: list[tuple[int, float]]
    limit_error: float | None                 # max |F(p) - ct_limit| at the largest length


def ct_sequence(params: Sequence[tuple], length: int, rng: np.random.Generator) -> list[float]:
    cs = np.array([float(c) for c, _ in params])
    alphas = np.array([float(a) for _, a in params])
    counts = np.zeros(len(params), dtype=np.int64)
    root = int(np.sqrt(length))
    for j in np.flatnonzero(alphas == 0):
        counts[j] = 0 if rng.random() < 0.5 else rng.integers(1, root + 1)
    pos = alphas > 0
    counts[pos] = rng.multinomial(max(length - counts.sum(), 1), alphas[pos] / alphas[pos].sum())
    width = 0.0 if rng.random() < 0.25 else rng.random() / np.sqrt(length)
    out = []
    for c, k in zip(cs, counts):
        out.append(np.clip(c + rng.uniform(-width, width, size=k), 0.0, 1.0))
    seq = np.concatenate(out)
    rng.shuffle(seq)
    return seq.tolist()


def ct_probe(F: AggregationFunction, params: Sequence[Sequence[tuple]], trials: int = 20,
             lengths: Sequence[int] = (100, 1000, 10000), seed: int = 0) -> ProbeResult:
    for slot in params:
        check_params(slot)
    if list(lengths) != sorted(set(lengths)):
        raise ValueError("lengths must be strictly increasing")
    rng = np.random.default_rng(seed)
    try:
        limit = float(F.ct_limit([list(s) for s in params]))
    except Exception:
        limit = None
    per_length, lim_err = [], None
    for L in lengths:
        worst, err = 0.0, 0.0
        for _ in range(trials):
            a = float(F.fn([ct_sequence(s, L, rng) for s in params]))
            b = float(F.fn([ct_sequence(s, L, rng) for s in params]))
            worst = max(worst, abs(a - b))
            if limit is not None:
                err = max(err, abs(a - limit), abs(b - limit))
        per_length.append((L, worst))
        lim_err = err if limit is not None else None
    return ProbeResult(per_length[-1][1], per_length, lim_err)
