"""Integer group-ring matrices and their convolution operators on finite quotients.

An element of ``M_n(Z(G))`` has entries ``f_{ls} = sum_x fhat_{ls}(x) x``.
Its left convolution operator acts on ``C[Q]^n`` for a finite abelian
quotient ``Q`` of ``Z^k`` by

    (lambda(f) xi)(l)(g) = sum_s sum_x fhat_{ls}(x) xi(s)(x^{-1} g),

with supports reduced modulo ``Q``.  Basis vectors are ordered by component
``l`` first and then by quotient element in mixed-radix order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .groups import FiniteAbelian, FreeGroup, Group, IntegerLattice, Integers, group_from_descriptor
from .systems import BudgetExceeded

__all__ = [
    "GroupRingElement",
    "l1_condition",
    "quotient_matrix",
    "fourier_symbol",
    "SpectralRow",
    "SpectralEvidence",
    "spectral_evidence",
    "spectral_row",
    "spectral_trend",
    "harmonic_element",
    "ring_from_json",
]

DEFAULT_DIM_BUDGET = 2048


def _clean(d: Mapping) -> dict:
    return {k: int(v) for k, v in d.items() if int(v) != 0}


@dataclass(frozen=True, eq=False)
class GroupRingElement:
    """``n x n`` matrix over ``Z(G)``; ``entries[(l, s)]`` maps group elements to integers."""

    group: Group
    n: int
    entries: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        out = {}
        for (l, s), coeffs in dict(self.entries).items():
            if not (0 <= l < self.n and 0 <= s < self.n):
                raise ValueError(f"entry index ({l}, {s}) outside an {self.n}x{self.n} matrix")
            acc: dict = {}
            for x, c in coeffs.items():
                if int(c) != c:
                    raise ValueError("coefficients must be integers")
                x = self.group.normalize(x)
                acc[x] = acc.get(x, 0) + int(c)
            acc = _clean(acc)
            if acc:
                out[(int(l), int(s))] = acc
        object.__setattr__(self, "entries", out)

    # constructors
    @classmethod
    def scalar(cls, group: Group, terms: Mapping, n: int = 1) -> "GroupRingElement":
        """``sum_x c_x x`` (times the identity matrix when ``n > 1``)."""
        return cls(group, n, {(i, i): dict(terms) for i in range(n)})

    def entry(self, l: int, s: int) -> dict:
        return dict(self.entries.get((l, s), {}))

    def _combine(self, other: "GroupRingElement", sign: int) -> "GroupRingElement":
        self._compatible(other)
        out = {k: dict(v) for k, v in self.entries.items()}
        for k, coeffs in other.entries.items():
            acc = out.setdefault(k, {})
            for x, c in coeffs.items():
                acc[x] = acc.get(x, 0) + sign * c
        return GroupRingElement(self.group, self.n, out)

    def _compatible(self, other: "GroupRingElement"):
        if other.n != self.n or other.group.descriptor() != self.group.descriptor():
            raise ValueError("group-ring elements of different shapes or groups")

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return GroupRingElement(self.group, self.n, {k: {x: -c for x, c in v.items()} for k, v in self.entries.items()})

    def __mul__(self, other):
        if isinstance(other, int):
            return GroupRingElement(self.group, self.n, {k: {x: other * c for x, c in v.items()}
                                                         for k, v in self.entries.items()})
        self._compatible(other)
        G = self.group
        out: dict = {}
        for (l, t), f in self.entries.items():
            for (t2, s), h in other.entries.items():
                if t2 != t:
                    continue
                acc = out.setdefault((l, s), {})
                for x, a in f.items():
                    for y, b in h.items():
                        z = G.mul(x, y)
                        acc[z] = acc.get(z, 0) + a * b
        return GroupRingElement(G, self.n, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, GroupRingElement) and self.n == other.n
                and self.group.descriptor() == other.group.descriptor() and self.entries == other.entries)

    def to_json(self) -> dict:
        G = self.group
        return {
            "group": G.descriptor(),
            "n": self.n,
            "entries": [
                {"l": l, "s": s, "support": [{"x": G.element_to_json(x), "c": c} for x, c in coeffs.items()]}
                for (l, s), coeffs in sorted(self.entries.items())
            ],
        }


def ring_from_json(obj: Mapping, group: Group | None = None) -> GroupRingElement:
    """``{"group": ..., "n": ..., "entries": [{"s", "l", "support": [{"x", "c"}]}]}``."""
    G = group or group_from_descriptor(obj.get("group", "Z"))
    n = int(obj.get("n", 1))
    entries: dict = {}
    for e in obj["entries"]:
        acc = entries.setdefault((int(e["l"]), int(e["s"])), {})
        for term in e["support"]:
            x = G.element_from_json(term["x"])
            acc[x] = acc.get(x, 0) + int(term["c"])
    return GroupRingElement(G, n, entries)


def harmonic_element(rank: int = 2) -> GroupRingElement:
    """``2k e - sum_i (x_i + x_i^{-1})`` on ``Z^k`` (``Z`` for ``k = 1``)."""
    G = Integers() if rank == 1 else IntegerLattice(rank)
    terms = {G.identity(): 2 * rank}
    for s in G.generators():
        terms[s] = terms.get(s, 0) - 1
        terms[G.inv(s)] = terms.get(G.inv(s), 0) - 1
    return GroupRingElement.scalar(G, terms)


def l1_condition(f: GroupRingElement) -> bool:
    """Strict l1 dominance of the identity coefficient.

    For ``n = 1`` write ``f = b e - sum_{x != e} a_x x`` and test
    ``sum |a_x| < |b|``.  For ``n > 1`` every row ``l`` must satisfy
    ``sum over (s, x) != (l, e) of |fhat_{ls}(x)| < |fhat_{ll}(e)|`` (row
    diagonal dominance), which makes ``lambda(f)`` invertible by the same
    Neumann-series argument.
    """
    if not isinstance(f, GroupRingElement):
        raise TypeError("expected a GroupRingElement")
    e = f.group.identity()
    for l in range(f.n):
        b = f.entry(l, l).get(e, 0)
        tail = 0
        for s in range(f.n):
            for x, c in f.entry(l, s).items():
                if not (s == l and x == e):
                    tail += abs(c)
        if not tail < abs(b):
            return False
    return True


def _reduce_map(group: Group, moduli: Sequence[int]):
    Q = FiniteAbelian(tuple(moduli))
    if isinstance(group, FreeGroup) or not group.abelian:
        raise ValueError("quotient evidence is only supported for abelian groups")
    if isinstance(group, Integers):
        rank = 1
    elif isinstance(group, (IntegerLattice,)):
        rank = group.rank
    elif isinstance(group, FiniteAbelian):
        rank = len(group.moduli)
        for m, mg in zip(Q.moduli, group.moduli):
            if mg % m:
                raise ValueError(f"Z/{m} is not a quotient of Z/{mg}")
    else:
        raise ValueError(f"unsupported group {group.descriptor()}")
    if rank != len(Q.moduli):
        raise ValueError(f"quotient needs {rank} moduli, got {len(Q.moduli)}")

    def reduce(x) -> tuple:
        x = (x,) if isinstance(x, int) else tuple(x)
        return Q.normalize(x)

    return Q, reduce


def _flat(Q: FiniteAbelian, q: tuple) -> int:
    return int(np.ravel_multi_index(q, Q.moduli))


def quotient_matrix(f: GroupRingElement, moduli: Sequence[int] | int) -> np.ndarray:
    """Dense matrix of ``lambda(f)`` on ``C[Q]^n``; colliding support points are summed."""
    if isinstance(moduli, int):
        moduli = (moduli,)
    Q, reduce = _reduce_map(f.group, moduli)
    N = Q.order
    M = np.zeros((f.n * N, f.n * N), dtype=np.int64)
    ys = np.arange(N)
    coords = np.stack(np.unravel_index(ys, Q.moduli), axis=1)
    mod = np.asarray(Q.moduli)
    for (l, s), coeffs in f.entries.items():
        for x, c in coeffs.items():
            shift = np.asarray(reduce(x))
            gs = np.ravel_multi_index(tuple(((coords + shift) % mod).T), Q.moduli)
            # row (l, x y), column (s, y)
            np.add.at(M, (l * N + gs, s * N + ys), c)
    return M


def fourier_symbol(f: GroupRingElement, moduli: Sequence[int] | int) -> np.ndarray:
    """``hat f(chi)`` for every character of ``Q``: array of shape ``(|Q|, n, n)``.

    The character with frequency ``k`` is ``chi_k(x) = exp(2 pi i sum_m k_m x_m / q_m)``.
    """
    if isinstance(moduli, int):
        moduli = (moduli,)
    Q, reduce = _reduce_map(f.group, moduli)
    freqs = np.stack(np.unravel_index(np.arange(Q.order), Q.moduli), axis=1)
    mod = np.asarray(Q.moduli, dtype=float)
    out = np.zeros((Q.order, f.n, f.n), dtype=complex)
    for (l, s), coeffs in f.entries.items():
        for x, c in coeffs.items():
            xr = np.asarray(reduce(x), dtype=float)
            out[:, l, s] += c * np.exp(2j * np.pi * (freqs * (xr / mod)).sum(axis=1))
    return out


@dataclass(frozen=True)
class SpectralRow:
    moduli: tuple
    dim: int
    smin: float
    smin_nontrivial: float


@dataclass(frozen=True)
class SpectralEvidence:
    rows: list
    trend: str   # "bounded_below" or "decaying"
    column: str


def _svd_split(M: np.ndarray, n: int, N: int) -> tuple[float, float]:
    """Smallest singular value overall and on the complement of per-component constants.

    ``lambda(f)`` commutes with translations, so it preserves the constants
    (per component) and their orthogonal complement.  The singular values of
    ``M P`` (``P`` the projection onto the complement) are those of ``M`` on
    the complement plus ``n`` zeros; on the constants ``M`` acts as the
    ``n x n`` matrix of block row sums.
    """
    Mf = M.astype(float)
    P = np.eye(n * N)
    for l in range(n):
        P[l * N:(l + 1) * N, l * N:(l + 1) * N] -= 1.0 / N
    s_comp = np.sort(scipy.linalg.svdvals(Mf @ P))[n:]
    trivial = Mf.reshape(n, N, n, N).sum(axis=3)[:, 0, :]
    s_triv = scipy.linalg.svdvals(trivial)
    nontrivial = float(s_comp.min()) if s_comp.size else float("inf")
    return float(min(s_triv.min(), nontrivial)), nontrivial


def spectral_row(f: GroupRingElement, q, budget: int = DEFAULT_DIM_BUDGET) -> SpectralRow:
    """Singular-value summary of ``lambda(f)`` on one quotient (an int or a tuple of moduli)."""
    moduli = (q,) if isinstance(q, int) else tuple(q)
    N = int(np.prod(moduli))
    dim = f.n * N
    if dim > budget:
        raise BudgetExceeded(f"dimension {dim} exceeds the dense SVD budget {budget}")
    M = quotient_matrix(f, moduli)
    smin, snt = _svd_split(M, f.n, N)
    return SpectralRow(moduli, dim, smin, snt)


def spectral_trend(rows: Sequence[SpectralRow], column: str = "smin_nontrivial") -> str:
    """``"decaying"`` when the selected series is non-increasing with log-log slope at most ``-1/2``
    (or drops to zero), else ``"bounded_below"``."""
    if column not in ("smin", "smin_nontrivial"):
        raise ValueError("column must be 'smin' or 'smin_nontrivial'")
    vals = np.array([getattr(r, column) for r in rows])
    sizes = np.array([r.dim for r in rows], dtype=float)
    if len(rows) >= 2 and np.all(np.diff(vals) <= 1e-12) and np.all(vals > 0):
        slope = np.polyfit(np.log(sizes), np.log(vals), 1)[0]
        if slope <= -0.5:
            return "decaying"
    elif len(rows) >= 2 and np.all(np.diff(vals) <= 1e-12) and vals[-1] <= 1e-12 < vals[0]:
        return "decaying"
    return "bounded_below"


def spectral_evidence(f: GroupRingElement, quotients: Sequence, budget: int = DEFAULT_DIM_BUDGET,
                      column: str = "smin_nontrivial") -> SpectralEvidence:
    """Minimum singular values of ``lambda(f)`` on each quotient, with a trend verdict.

    ``column`` selects the series used for the verdict: ``"smin"`` (all
    vectors) or ``"smin_nontrivial"`` (orthogonal to per-component constants).
    The verdict is ``"decaying"`` when that series is non-increasing and its
    log-log slope against the quotient order is at most ``-1/2``.  A quotient
    whose dimension exceeds ``budget`` raises :class:`BudgetExceeded`.
    """
    if column not in ("smin", "smin_nontrivial"):
        raise ValueError("column must be 'smin' or 'smin_nontrivial'")
    rows = [spectral_row(f, q, budget) for q in quotients]
    return SpectralEvidence(rows, spectral_trend(rows, column), column)
