"""Microstate spaces ``AP(alpha, F, delta, sigma)``: membership, counting, sampling.

A microstate is a labeling ``phi: {0..d-1} -> A``.  Throughout this module it
is a 1-d integer array of *letter indices* into the codomain of the observable
(``codomain[phi[j]]`` is the letter at ``j``).  The pattern of ``phi`` at
``j`` is ``(phi(sigma(h)^{-1} j))_{h in F}`` and ``phi`` is a member when the
l1 distance between its pattern histogram (divided by ``d``) and the target
law is strictly below ``delta``.

Exact counting is a depth-first search over positions ``0..d-1`` in
lexicographic letter order.  A pattern is tallied as soon as all positions it
reads are assigned.  Because a complete histogram and the target both have
mass one, the l1 distance is twice the total *excess*
``sum_pi max(0, count_pi / d - target_pi)``, and the excess can only grow as
more patterns are tallied; a branch is cut as soon as twice the excess reaches
``delta``.  The cut is exact at the leaves, so every leaf reached is a member.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from .groups import SoficApprox
from .systems import (
    BudgetExceeded,
    EmpiricalLaw,
    Observable,
    Refinement,
    ShiftSystem,
    law,
    normalize_F,
    to_fraction,
)

__all__ = [
    "DEFAULT_COUNT_BUDGET",
    "EMPTY",
    "APQuery",
    "EstimateResult",
    "RelSupResult",
    "encode",
    "to_indices",
    "pattern_reads",
    "empirical_F_law",
    "ap_distance",
    "ap_member",
    "ap_count_exact",
    "ap_enumerate",
    "ap_sample_estimate",
    "rel_ap_count",
    "rel_ap_set",
    "rel_ap_sup",
    "sample_ap_member",
]

DEFAULT_COUNT_BUDGET = 10**8
SAMPLE_CHUNK = 2048


class _Empty:
    """Marker for a supremum over an empty set (its logarithm is -inf)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EMPTY"

    def __bool__(self):
        return False


EMPTY = _Empty()


def encode(phi: np.ndarray) -> bytes:
    """Canonical byte encoding of a microstate (used for set membership)."""
    return np.ascontiguousarray(phi, dtype=np.int16).tobytes()


def to_indices(values: Sequence, codomain: Sequence) -> np.ndarray:
    """Letters to letter indices."""
    idx = {a: i for i, a in enumerate(codomain)}
    return np.array([idx[v] for v in values], dtype=np.int64)


def pattern_reads(sigma: SoficApprox, F: Sequence) -> np.ndarray:
    """``reads[i, j] = sigma(F[i])^{-1}(j)``: the position read by slot ``i`` of pattern ``j``."""
    return np.stack([np.asarray(sigma.inverse(h)) for h in F]).astype(np.int64)


def _pattern_codes(phi: np.ndarray, reads: np.ndarray, k: int) -> np.ndarray:
    # code = sum_i phi[reads[i]] * k^i ; works for phi of shape (..., d)
    codes = np.zeros(phi.shape[:-1] + (reads.shape[1],), dtype=np.int64)
    for i in range(reads.shape[0] - 1, -1, -1):
        codes = codes * k + phi[..., reads[i]]
    return codes


def _decode(code: int, k: int, m: int) -> tuple[int, ...]:
    out = []
    for _ in range(m):
        code, r = divmod(code, k)
        out.append(r)
    return tuple(out)


def empirical_F_law(phi: Sequence[int], sigma: SoficApprox, F: Sequence,
                    codomain: Sequence | None = None) -> EmpiricalLaw:
    """The law of ``j -> (phi(sigma(h)^{-1} j))_{h in F}`` under uniform ``j``.

    ``F`` is used as given (no identity normalization).  Weights are exact
    fractions with denominator ``d``.
    """
    phi = np.asarray(phi, dtype=np.int64)
    if phi.shape != (sigma.d,):
        raise ValueError(f"microstate has length {phi.size}, model size is {sigma.d}")
    F = tuple(sigma.group.normalize(h) for h in F)
    if codomain is None:
        codomain = tuple(range(int(phi.max()) + 1))
    k = len(codomain)
    if phi.min() < 0 or phi.max() >= k:
        raise ValueError("microstate letter index outside the codomain")
    codes = _pattern_codes(phi, pattern_reads(sigma, F), k)
    values, counts = np.unique(codes, return_counts=True)
    d = sigma.d
    weights = {
        tuple(codomain[i] for i in _decode(int(c), k, len(F))): Fraction(int(n), d)
        for c, n in zip(values, counts)
    }
    return EmpiricalLaw(F, tuple(codomain), weights)


@dataclass(frozen=True, eq=False)
class APQuery:
    """Parameters of ``AP(obs, F, delta, sigma)`` with a precomputed target law.

    ``F`` is normalized to contain the identity (prepended when missing) and
    deduplicated.  ``delta`` is read exactly; floats via their decimal literal
    (``0.1`` means ``1/10``).
    """

    obs: Observable
    F: tuple
    delta: Fraction
    sigma: SoficApprox
    target: EmpiricalLaw
    _compiled: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        delta = to_fraction(self.delta)
        if delta <= 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "delta", delta)
        G = self.obs.group
        if G.descriptor() != self.sigma.group.descriptor():
            raise ValueError("observable and permutation model use different groups")
        F = normalize_F(G, self.F)
        object.__setattr__(self, "F", F)
        if tuple(self.target.F) != F:
            raise ValueError("target law is indexed by a different F")
        if tuple(self.target.codomain) != self.obs.codomain:
            raise ValueError("target law uses a different codomain")

    @classmethod
    def build(cls, system: ShiftSystem, obs: Observable, F: Sequence, delta, sigma: SoficApprox,
              exact: bool = True) -> "APQuery":
        """Compute the target law ``(obs^F)_* mu`` and assemble the query."""
        F = normalize_F(system.group, F)
        return cls(obs, F, delta, sigma, law(system, obs, F, exact=exact))

    @property
    def d(self) -> int:
        return self.sigma.d

    @property
    def k(self) -> int:
        return len(self.obs.codomain)

    def with_delta(self, delta) -> "APQuery":
        return APQuery(self.obs, self.F, delta, self.sigma, self.target)

    def with_sigma(self, sigma: SoficApprox) -> "APQuery":
        return APQuery(self.obs, self.F, self.delta, sigma, self.target)

    def compiled(self) -> "_Compiled":
        if "c" not in self._compiled:
            self._compiled["c"] = _Compiled.from_query(self)
        return self._compiled["c"]


@dataclass
class _Compiled:
    """Integer data for the search: scaled targets, read lists, thresholds."""

    d: int
    k: int
    m: int
    reads: np.ndarray
    L: int
    tau: dict          # pattern code -> target * d * L (an integer)
    support_full: bool
    lim: int           # member iff 2 * E * dden < lim
    dden: int
    complete_at: list  # position t -> list of read tuples whose max is t
    weights: tuple

    @classmethod
    def from_query(cls, q: APQuery) -> "_Compiled":
        target = q.target.to_exact()
        k, m, d = q.k, len(q.F), q.d
        idx = q.obs.index
        L = 1
        for w in target.weights.values():
            L = L * w.denominator // math.gcd(L, w.denominator)
        tau = {}
        for pat, w in target.weights.items():
            code = sum(idx[a] * k**i for i, a in enumerate(pat))
            tau[code] = int(w * L) * d
        reads = pattern_reads(q.sigma, q.F)
        complete_at: list[list[tuple[int, ...]]] = [[] for _ in range(d)]
        for j in range(d):
            col = tuple(int(r) for r in reads[:, j])
            complete_at[max(col)].append(col)
        delta = q.delta
        return cls(
            d=d, k=k, m=m, reads=reads, L=L, tau=tau,
            support_full=len(tau) == k**m,
            lim=delta.numerator * d * L, dden=delta.denominator,
            complete_at=complete_at,
            weights=tuple(k**i for i in range(m)),
        )

    def trivially_all(self) -> bool:
        # every histogram is within l1 distance 2, and strictly less when the
        # target charges every pattern
        two = 2 * self.d * self.L * self.dden
        return self.lim > two or (self.lim == two and self.support_full)

    def min_type_distance_scaled(self) -> int:
        """Smallest ``d * L * ||c/d - t||_1`` over all histograms ``c`` of ``d`` patterns."""
        L, d = self.L, self.d
        floors, fracs = {}, []
        for code, tau in self.tau.items():
            q, r = divmod(tau, L)
            floors[code] = q
            fracs.append((r, code))
        extra = d - sum(floors.values())
        fracs.sort(key=lambda x: -x[0])
        dist = 0
        for rank, (r, code) in enumerate(fracs):
            dist += (L - r) if rank < extra else r
        return dist

    def trivially_empty(self) -> bool:
        return self.min_type_distance_scaled() * self.dden >= self.lim

    def distance_scaled(self, codes: np.ndarray) -> int:
        values, counts = np.unique(codes, return_counts=True)
        hist = dict(zip(values.tolist(), counts.tolist()))
        excess = 0
        for c, n in hist.items():
            excess += max(0, n * self.L - self.tau.get(c, 0))
        return 2 * excess


def ap_distance(phi: Sequence[int], q: APQuery) -> Fraction:
    """Exact l1 distance between the pattern law of ``phi`` and the target."""
    phi = np.asarray(phi, dtype=np.int64)
    if phi.shape != (q.d,):
        raise ValueError(f"microstate has length {phi.size}, model size is {q.d}")
    if phi.size and (phi.min() < 0 or phi.max() >= q.k):
        raise ValueError("microstate letter index outside the codomain")
    c = q.compiled()
    return Fraction(c.distance_scaled(_pattern_codes(phi, c.reads, c.k)), c.d * c.L)


def ap_member(phi: Sequence[int], q: APQuery) -> tuple[bool, Fraction]:
    """``(is member, l1 distance)``; membership uses the strict ``< delta``."""
    dist = ap_distance(phi, q)
    return dist < q.delta, dist


def _search(q: APQuery, allowed: Sequence[Sequence[int]] | None, budget: int,
            on_leaf: Callable[[list], None] | None) -> int:
    """Depth-first enumeration of members; returns their number."""
    c = q.compiled()
    d, L, tau, lim, dden = c.d, c.L, c.tau, c.lim, c.dden
    w = c.weights
    if allowed is None:
        allowed = [tuple(range(c.k))] * d
    else:
        allowed = [tuple(int(a) for a in sorted(set(al))) for al in allowed]
        if len(allowed) != d:
            raise ValueError("need one allowed-letter set per position")
        if any(not al for al in allowed):
            return 0
    complete_at = c.complete_at
    x = [0] * d
    cnt: dict[int, int] = {}
    nodes = 0
    found = 0
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * d + 1000))

    def rec(t: int, E: int) -> None:
        nonlocal nodes, found
        if t == d:
            found += 1
            if on_leaf is not None:
                on_leaf(x)
            return
        done = complete_at[t]
        for a in allowed[t]:
            nodes += 1
            if nodes > budget:
                raise BudgetExceeded(
                    f"enumeration exceeded {budget} node visits; use ap_sample_estimate instead"
                )
            x[t] = a
            E2 = E
            touched = []
            ok = True
            for col in done:
                code = 0
                for r, wi in zip(col, w):
                    code += x[r] * wi
                n = cnt.get(code, 0) + 1
                cnt[code] = n
                touched.append(code)
                over = n * L - tau.get(code, 0)
                if over > 0:
                    E2 += over if over < L else L
                    if 2 * E2 * dden >= lim:
                        ok = False
                        break
            if ok:
                rec(t + 1, E2)
            for code in touched:
                cnt[code] -= 1

    rec(0, 0)
    return found


def ap_count_exact(q: APQuery, budget: int = DEFAULT_COUNT_BUDGET,
                   allowed: Sequence[Sequence[int]] | None = None) -> int:
    """``|AP(obs, F, delta, sigma)|`` (optionally restricted to per-position letter sets).

    Raises :class:`BudgetExceeded` after ``budget`` search-node visits.
    """
    c = q.compiled()
    if c.trivially_all():
        if allowed is None:
            return c.k ** c.d
        return math.prod(len(set(al)) for al in allowed)
    if c.trivially_empty():
        return 0
    return _search(q, allowed, budget, None)


def ap_enumerate(q: APQuery, budget: int = DEFAULT_COUNT_BUDGET,
                 allowed: Sequence[Sequence[int]] | None = None) -> list[np.ndarray]:
    """All members, in lexicographic order."""
    out: list[np.ndarray] = []
    if q.compiled().trivially_empty():
        return out
    _search(q, allowed, budget, lambda x: out.append(np.array(x, dtype=np.int64)))
    return out


@dataclass(frozen=True)
class EstimateResult:
    """Monte Carlo estimate of ``|AP|`` as ``total * p_hat`` with a 95% interval.

    ``flag`` is one of ``""``, ``"exact_all"``, ``"exact_empty"`` or
    ``"upper_bound_only"`` (no hits: only ``upper`` is informative).
    """

    total: int
    hits: int
    n_samples: int
    p_hat: float
    p_low: float
    p_high: float
    flag: str = ""

    @property
    def estimate(self) -> float:
        if self.flag == "exact_all":
            return float(self.total)
        return float(self.total * Fraction(self.hits, max(self.n_samples, 1)))

    @property
    def lower(self) -> float:
        return float(self.total) * self.p_low

    @property
    def upper(self) -> float:
        return float(self.total) * self.p_high

    def log_estimate(self) -> float:
        if self.p_hat == 0:
            return -math.inf
        return math.log(self.total) + math.log(self.p_hat)

    def log_upper(self) -> float:
        return -math.inf if self.p_high == 0 else math.log(self.total) + math.log(self.p_high)


def ap_sample_estimate(q: APQuery, n_samples: int, seed: int = 0,
                       chunk: int = SAMPLE_CHUNK) -> EstimateResult:
    """Estimate ``|AP|`` from ``n_samples`` uniform draws of ``phi`` in ``A^d``.

    Samples are drawn in chunks of ``chunk`` with seeds derived from
    ``(seed, chunk index)``, so the result depends only on ``(seed, chunk)``.
    The interval is Clopper-Pearson.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    c = q.compiled()
    total = c.k ** c.d
    if c.trivially_all():
        return EstimateResult(total, n_samples, n_samples, 1.0, 1.0, 1.0, "exact_all")
    if c.trivially_empty():
        return EstimateResult(total, 0, n_samples, 0.0, 0.0, 0.0, "exact_empty")
    K = c.k ** c.m
    codes_sorted = np.array(sorted(c.tau), dtype=np.int64)
    tau_vals = np.array([c.tau[x] for x in codes_sorted], dtype=object)
    use_int64 = c.d * c.L < 2**62 and K <= 2**20
    hits = 0
    done = 0
    chunk_index = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk_index,)))
        phis = rng.integers(0, c.k, size=(m, c.d), dtype=np.int64)
        codes = _pattern_codes(phis, c.reads, c.k)
        if use_int64:
            rows = np.repeat(np.arange(m, dtype=np.int64), c.d)
            hist = np.bincount(rows * K + codes.ravel(), minlength=m * K).reshape(m, K)
            tau_dense = np.zeros(K, dtype=np.int64)
            tau_dense[codes_sorted] = tau_vals.astype(np.int64)
            excess = np.maximum(hist * c.L - tau_dense, 0).sum(axis=1)
            member = 2 * excess * c.dden < c.lim
            hits += int(member.sum())
        else:
            for row in codes:
                if c.distance_scaled(row) * c.dden < c.lim:
                    hits += 1
        done += m
        chunk_index += 1
    n = n_samples
    p_hat = hits / n
    low = 0.0 if hits == 0 else float(stats.beta.ppf(0.025, hits, n - hits + 1))
    high = 1.0 if hits == n else float(stats.beta.ppf(0.975, hits + 1, n - hits))
    flag = "upper_bound_only" if hits == 0 else ""
    return EstimateResult(total, hits, n, p_hat, low, high, flag)


def sample_ap_member(q: APQuery, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Rejection sample: a uniformly random member of ``AP`` (uniform among members)."""
    c = q.compiled()
    for _ in range(max_tries):
        phi = rng.integers(0, c.k, size=c.d, dtype=np.int64)
        if c.distance_scaled(_pattern_codes(phi, c.reads, c.k)) * c.dden < c.lim:
            return phi
    raise RuntimeError(f"no member found in {max_tries} draws")


def _check_refinements(q: APQuery, *refs: Refinement) -> None:
    for r in refs:
        if r.source.codomain != q.obs.codomain or r.source.window != q.obs.window \
                or dict(r.source.table) != dict(q.obs.table):
            raise ValueError("refinement source must be the query observable")


def rel_ap_set(q: APQuery, rho_a: Refinement, rho_b: Refinement, psi: Sequence[int],
               budget: int = DEFAULT_COUNT_BUDGET) -> set[bytes]:
    """Encoded members of ``AP(alpha | psi : gamma)``: the distinct ``rho_A o phi``."""
    _check_refinements(q, rho_a, rho_b)
    psi = np.asarray(psi, dtype=np.int64)
    if psi.shape != (q.d,):
        raise ValueError("psi has the wrong length")
    a_of, b_of = rho_a.indices(), rho_b.indices()
    fibers = [np.flatnonzero(b_of == b).tolist() for b in range(len(rho_b.target.codomain))]
    allowed = [fibers[int(b)] for b in psi]
    out: set[bytes] = set()
    if any(not al for al in allowed) or q.compiled().trivially_empty():
        return out
    _search(q, allowed, budget, lambda x: out.add(encode(a_of[x])))
    return out


def rel_ap_count(q: APQuery, rho_a: Refinement, rho_b: Refinement, psi: Sequence[int],
                 budget: int = DEFAULT_COUNT_BUDGET) -> int:
    """``|{rho_A o phi : phi in AP(gamma, F, delta, sigma), rho_B o phi = psi}|``.

    ``psi`` holds letter indices into ``rho_b.target.codomain``.  Only the
    fiber over ``psi`` is searched.
    """
    return len(rel_ap_set(q, rho_a, rho_b, psi, budget))


@dataclass(frozen=True)
class RelSupResult:
    """``sup_psi |AP(alpha | psi : gamma)|`` with one maximizer (``EMPTY`` if there is no ``psi``)."""

    value: Any
    argmax: np.ndarray | None
    n_psi: int

    @property
    def empty(self) -> bool:
        return self.value is EMPTY

    def log_value(self) -> float:
        return -math.inf if self.empty or self.value == 0 else math.log(self.value)


def rel_ap_fibers(q: APQuery, rho_a: Refinement, rho_b: Refinement,
                  budget: int = DEFAULT_COUNT_BUDGET) -> dict[bytes, set[bytes]]:
    """One pass over ``AP(gamma)``: ``psi -> {rho_A o phi}`` for every ``psi = rho_B o phi``."""
    _check_refinements(q, rho_a, rho_b)
    a_of, b_of = rho_a.indices(), rho_b.indices()
    fibers: dict[bytes, set[bytes]] = {}

    def leaf(x):
        arr = np.asarray(x, dtype=np.int64)
        fibers.setdefault(encode(b_of[arr]), set()).add(encode(a_of[arr]))

    if not q.compiled().trivially_empty():
        _search(q, None, budget, leaf)
    return fibers


def rel_ap_sup(q: APQuery, rho_a: Refinement, rho_b: Refinement,
               budget: int = DEFAULT_COUNT_BUDGET) -> RelSupResult:
    """``sup`` over ``psi in AP(beta : gamma)`` of ``rel_ap_count``.

    The maximizer returned is the first in lexicographic order of ``phi``
    among those attaining the supremum.
    """
    fibers = rel_ap_fibers(q, rho_a, rho_b, budget)
    if not fibers:
        return RelSupResult(EMPTY, None, 0)
    best_key, best = None, -1
    for key, s in fibers.items():
        if len(s) > best:
            best_key, best = key, len(s)
    argmax = np.frombuffer(best_key, dtype=np.int16).astype(np.int64)
    return RelSupResult(best, argmax, len(fibers))
