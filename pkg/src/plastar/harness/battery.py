"""Class-flag battery for the built-in aggregation functions."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from ..logic.ctprobe import ct_probe
from ..logic.registry import DEFAULT, Registry

TOL = 0.02
LENGTHS = (100, 1000, 10000)


@dataclass
class BatteryRow:
    function: str
    probe: str
    params: list
    discrepancy: float
    limit_error: float | None
    expect: str          # "converges" or "diverges"
    passed: bool


def _random_params(rng: np.random.Generator, positive: bool) -> list[tuple[Fraction, Fraction]]:
    k = int(rng.integers(1, 4))
    cs = [Fraction(int(rng.integers(0, 9)), 8) for _ in range(k)]
    ws = [int(rng.integers(1, 5)) for _ in range(k)]
    if not positive and k > 1:
        ws[-1] = 0
    total = sum(ws)
    return [(c, Fraction(w, total)) for c, w in zip(cs, ws)]


def check_battery(seed: int = 0, trials: int = 10, registry: Registry | None = None) -> list[BatteryRow]:
    reg = registry or DEFAULT
    rng = np.random.default_rng(seed)
    rows: list[BatteryRow] = []

    def run(name, params, probe, expect, fparams=()):
        F = reg.aggregation(name, fparams)
        res = ct_probe(F, [params], trials=trials, lengths=LENGTHS, seed=int(rng.integers(1 << 31)))
        if expect == "converges":
            ok = res.discrepancy <= TOL and (res.limit_error is None or res.limit_error <= TOL)
        else:
            ok = res.discrepancy > 0.5
        label = name if not fparams else f"{name}({', '.join(str(p) for p in fparams)})"
        rows.append(BatteryRow(label, probe, [[str(c), str(a)] for c, a in params],
                               res.discrepancy, res.limit_error, expect, ok))

    # the continuity witness: one stray entry at 1 (resp. 0) decides max (resp. min)
    run("max", [(Fraction(0), Fraction(1)), (Fraction(1), Fraction(0))], "continuity witness", "diverges")
    run("min", [(Fraction(1), Fraction(1)), (Fraction(0), Fraction(0))], "continuity witness", "diverges")
    for name in ("max", "min"):
        for _ in range(3):
            run(name, _random_params(rng, True), "admissibility (all alpha > 0)", "converges")
    for name, fparams in (("am", ()), ("gm", ()), ("lengthpow", ()), ("lengthpow", (Fraction(1, 2),))):
        for positive in (True, False, False):
            run(name, _random_params(rng, positive), "continuity (random)", "converges", fparams)
    # many tiny entries push a sum-like function anywhere between 0 and 1
    run("noisy-or", [(Fraction(0), Fraction(1))], "continuity (all alpha > 0)", "diverges")
    run("tsum", [(Fraction(0), Fraction(1))], "continuity (all alpha > 0)", "diverges")
    return rows


def battery_table(rows: list[BatteryRow]) -> str:
    lines = [f"{'function':<16}{'probe':<32}{'discrepancy':>12}  {'expect':<10} result"]
    for r in rows:
        lines.append(f"{r.function:<16}{r.probe:<32}{r.discrepancy:>12.4f}  {r.expect:<10} "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def rows_as_dicts(rows: list[BatteryRow]) -> list[dict]:
    return [asdict(r) for r in rows]
