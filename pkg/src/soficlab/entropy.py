"""Shannon quantities, exact conditional type counting, and finite-level rates.

All entropies and rates are in nats.  Counts are exact Python integers and
rates are ``(1/n) * ln(count)``; a zero count gives ``-inf``.

Type counting: for a joint law ``P`` on ``A x B`` (rows ``a``, columns ``b``),
``n`` and a column type ``psi_type`` (how often each ``b`` occurs in a
``B``-sequence ``psi``), :func:`xi_count` counts sequences ``phi in A^n`` with
``||type(phi, psi) - P||_1 < delta``.  It sums, over integer matrices ``M``
with the prescribed column sums, the product of column multinomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .groups import SoficApprox
from .microstates import (
    DEFAULT_COUNT_BUDGET,
    APQuery,
    ap_count_exact,
    encode,
    _search,
    rel_ap_sup,
)
from .systems import Observable, Refinement, ShiftSystem, to_fraction

__all__ = [
    "DEFAULT_DELTAS",
    "shannon",
    "cond_shannon",
    "log_count",
    "compositions",
    "xi_count",
    "joint_xi_count",
    "admissible_types",
    "StirlingRow",
    "StirlingTable",
    "stirling_curve",
    "type_slack",
    "FiniteLevel",
    "h_finite_level",
    "LevelCurve",
    "ap_projection_count",
    "h_liminf_level",
]

DEFAULT_DELTAS = tuple(Fraction(2, 2**k) for k in range(7))


def shannon(p: Sequence[float]) -> float:
    """``-sum p_i ln p_i`` with ``0 ln 0 = 0``."""
    p = np.asarray([float(to_fraction(x)) for x in p], dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability vector")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def cond_shannon(J) -> float:
    """``H(alpha | beta)`` for a joint law with rows ``a`` and columns ``b``.

    ``-sum_{a,b} J(a,b) ln(J(a,b) / J(., b))``; zero-mass columns contribute 0.
    """
    J = np.asarray([[float(to_fraction(x)) for x in row] for row in J], dtype=float)
    if np.any(J < 0) or abs(J.sum() - 1.0) > 1e-9:
        raise ValueError("not a joint probability matrix")
    col = J.sum(axis=0)
    h = 0.0
    for a in range(J.shape[0]):
        for b in range(J.shape[1]):
            if J[a, b] > 0:
                h -= J[a, b] * math.log(J[a, b] / col[b])
    return h


def log_count(count: int) -> float:
    """``ln(count)`` for big integers; ``-inf`` at zero."""
    return -math.inf if count == 0 else math.log(count)


def compositions(n: int, parts: int):
    """All tuples of ``parts`` nonnegative ints summing to ``n`` (lexicographic)."""
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in compositions(n - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _factorial(n: int) -> int:
    return math.factorial(n)


def _multinomial(parts: Sequence[int]) -> int:
    out = _factorial(sum(parts))
    for x in parts:
        out //= _factorial(x)
    return out


@dataclass(frozen=True)
class _Scaled:
    """``P * L`` as integers plus the threshold for ``sum |M L - n P L| < delta n L``."""

    PL: tuple      # PL[a][b]
    L: int
    dnum: int
    dden: int

    @classmethod
    def of(cls, J, delta) -> "_Scaled":
        P = [[to_fraction(x) for x in row] for row in J]
        total = sum(sum(row) for row in P)
        if any(x < 0 for row in P for x in row) or abs(float(total) - 1.0) > 1e-12:
            raise ValueError("joint law must be nonnegative and sum to 1")
        P = [[x / total for x in row] for row in P]
        L = 1
        for row in P:
            for x in row:
                L = L * x.denominator // math.gcd(L, x.denominator)
        delta = to_fraction(delta)
        if delta <= 0:
            raise ValueError("delta must be positive")
        return cls(tuple(tuple(int(x * L) for x in row) for row in P), L, delta.numerator, delta.denominator)

    def bound(self, n: int) -> int:
        # cost * dden < dnum * n * L  <=>  cost < bound / dden ; keep integer form
        return self.dnum * n * self.L

    def ok(self, cost: int, n: int) -> bool:
        return cost * self.dden < self.bound(n)


def _columns(S: _Scaled, n: int, psi_type: Sequence[int]):
    """Per column ``b``: compositions of ``psi_type[b]`` into ``|A|`` parts, sorted by cost."""
    nA = len(S.PL)
    out = []
    for b, s in enumerate(psi_type):
        target = [n * S.PL[a][b] for a in range(nA)]
        col = []
        for comp in compositions(int(s), nA):
            cost = sum(abs(m * S.L - t) for m, t in zip(comp, target))
            if S.ok(cost, n):
                col.append((cost, _multinomial(comp)))
        col.sort(key=lambda x: x[0])
        out.append(col)
    return out


def xi_count(J, delta, n: int, psi_type: Sequence[int]) -> int:
    """``|Xi(alpha | psi, delta, n)|`` for any ``psi`` of type ``psi_type``."""
    S = _Scaled.of(J, delta)
    psi_type = [int(x) for x in psi_type]
    if len(psi_type) != len(S.PL[0]) or sum(psi_type) != n or min(psi_type) < 0:
        raise ValueError("psi_type must be a type of n over the columns of J")
    cols = _columns(S, n, psi_type)
    if any(not c for c in cols):
        return 0
    nb = len(cols)
    min_rest = [0] * (nb + 1)
    for b in range(nb - 1, -1, -1):
        min_rest[b] = min_rest[b + 1] + cols[b][0][0]
    limit = S.bound(n)
    dden = S.dden

    def rec(b: int, cost: int) -> int:
        if b == nb:
            return 1
        total = 0
        for c, mult in cols[b]:
            if (cost + c + min_rest[b + 1]) * dden >= limit:
                break
            total += mult * rec(b + 1, cost + c)
        return total

    return rec(0, 0)


def joint_xi_count(J, delta, n: int) -> int:
    """``|Xi(alpha v beta, delta, n)|``: pairs ``(phi, psi)`` with joint type within ``delta``.

    Enumerates joint types directly (not through :func:`xi_count`).
    """
    S = _Scaled.of(J, delta)
    cells = [(a, b) for a in range(len(S.PL)) for b in range(len(S.PL[0]))]
    targets = [n * S.PL[a][b] for a, b in cells]
    limit = S.bound(n)
    dden = S.dden
    L = S.L
    total = 0

    def rec(i: int, left: int, cost: int, counts: list) -> None:
        nonlocal total
        if i == len(cells) - 1:
            c = cost + abs(left * L - targets[i])
            if c * dden < limit:
                total += _multinomial(counts + [left])
            return
        for m in range(left + 1):
            c = cost + abs(m * L - targets[i])
            # the remaining cells must absorb left - m; their cost is at least
            # |(left - m) L - sum of remaining targets|
            rest = abs((left - m) * L - sum(targets[i + 1:]))
            if (c + rest) * dden >= limit:
                continue
            rec(i + 1, left - m, c, counts + [m])

    rec(0, n, 0, [])
    return total


def admissible_types(J, delta, n: int) -> list[tuple[int, ...]]:
    """Column types ``psi_type`` with a nonzero :func:`xi_count`."""
    S = _Scaled.of(J, delta)
    nb = len(S.PL[0])
    colmass = [sum(S.PL[a][b] for a in range(len(S.PL))) for b in range(nb)]
    out = []
    for t in compositions(n, nb):
        # the column-sum mismatch is a lower bound on the joint l1 cost
        lb = sum(abs(s * S.L - n * m) for s, m in zip(t, colmass))
        if not S.ok(lb, n):
            continue
        if xi_count(J, delta, n, t) > 0:
            out.append(t)
    return out


def type_slack(nA: int, nB: int, n: int, delta, nA_letters: int | None = None) -> float:
    """Explicit type-counting slack ``|A||B| ln(n+1)/n + delta ln|A|``."""
    return nA * nB * math.log(n + 1) / n + float(to_fraction(delta)) * math.log(nA_letters or nA)


@dataclass(frozen=True)
class StirlingRow:
    n: int
    delta: Fraction
    rate: float
    count: int
    psi_type: tuple | None
    n_types: int


@dataclass(frozen=True)
class StirlingTable:
    rows: list
    oracle: float

    def rate(self, n: int, delta) -> float:
        delta = to_fraction(delta)
        for r in self.rows:
            if r.n == n and r.delta == delta:
                return r.rate
        raise KeyError((n, delta))

    def running_inf(self) -> list[tuple[Fraction, float]]:
        """Running infimum over the delta schedule of the largest-``n`` rates."""
        n_max = max(r.n for r in self.rows)
        rows = sorted((r for r in self.rows if r.n == n_max), key=lambda r: -r.delta)
        out, best = [], math.inf
        for r in rows:
            best = min(best, r.rate)
            out.append((r.delta, best))
        return out


def stirling_curve(J, n_list: Sequence[int], delta_list: Sequence = DEFAULT_DELTAS) -> StirlingTable:
    """``sup_psi (1/n) ln |Xi(alpha | psi, delta, n)|`` for every ``(n, delta)``."""
    if not list(n_list) or not list(delta_list):
        raise ValueError("n_list and delta_list must be nonempty")
    rows = []
    for n in n_list:
        for delta in delta_list:
            best, arg, ntypes = 0, None, 0
            for t in admissible_types(J, delta, n):
                ntypes += 1
                c = xi_count(J, delta, n, t)
                if c > best:
                    best, arg = c, t
            rows.append(StirlingRow(int(n), to_fraction(delta), log_count(best) / n, best, arg, ntypes))
    return StirlingTable(rows, cond_shannon(J))


@dataclass(frozen=True)
class FiniteLevel:
    d: int
    rate: float
    sup: object
    argmax: np.ndarray | None


def h_finite_level(system: ShiftSystem, rho_a: Refinement, rho_b: Refinement, F: Sequence, delta,
                   sigma: SoficApprox, exact: bool = True,
                   budget: int = DEFAULT_COUNT_BUDGET) -> FiniteLevel:
    """``(1/d) ln sup_{psi in AP(beta:gamma)} |AP(alpha | psi : gamma)|`` at one model size.

    ``gamma`` is the common source of the two refinements.  An empty
    supremum is reported as rate ``-inf``.
    """
    q = APQuery.build(system, rho_a.source, F, delta, sigma, exact=exact)
    res = rel_ap_sup(q, rho_a, rho_b, budget)
    return FiniteLevel(sigma.d, res.log_value() / sigma.d, res.value, res.argmax)


def ap_projection_count(q: APQuery, rho: Refinement | None = None,
                        budget: int = DEFAULT_COUNT_BUDGET) -> int:
    """``|AP(alpha : gamma)| = |{rho o phi : phi in AP(gamma)}|`` (``rho=None``: ``alpha = gamma``)."""
    if rho is None or all(rho(c) == c for c in rho.source.codomain) and \
            rho.source.codomain == rho.target.codomain:
        return ap_count_exact(q, budget)
    a_of = rho.indices()
    seen: set[bytes] = set()
    if not q.compiled().trivially_empty():
        _search(q, None, budget, lambda x: seen.add(encode(a_of[np.asarray(x)])))
    return len(seen)


@dataclass(frozen=True)
class LevelCurve:
    ds: list
    counts: list
    rates: list
    liminf: float
    limsup: float


def h_liminf_level(system: ShiftSystem, gamma: Observable, F: Sequence, delta,
                   sigmas: Sequence[SoficApprox], rho: Refinement | None = None, exact: bool = True,
                   budget: int = DEFAULT_COUNT_BUDGET) -> LevelCurve:
    """Per-size rates ``(1/d) ln |AP(alpha : gamma)|`` and tail-half min / max.

    ``alpha`` is ``rho.target`` (``gamma`` itself when ``rho`` is omitted).
    The liminf proxy is the minimum and the limsup proxy the maximum over the
    last half of the size list (all of it for a single size).
    """
    if not sigmas:
        raise ValueError("need at least one model size")
    ds, counts, rates = [], [], []
    for sigma in sigmas:
        q = APQuery.build(system, gamma, F, delta, sigma, exact=exact)
        c = ap_projection_count(q, rho, budget)
        ds.append(sigma.d)
        counts.append(c)
        rates.append(log_count(c) / sigma.d)
    tail = rates[len(rates) // 2:]
    return LevelCurve(ds, counts, rates, min(tail), max(tail))
