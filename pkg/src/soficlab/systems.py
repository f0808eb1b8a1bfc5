"""Shift systems ``B^G`` with exactly computable laws, and local observables.

Convention for the shift: ``(g . x)(k) = x(k g)``.  With it the pattern map
``alpha^F(x)(h) = alpha(h^{-1} x)`` reads the coordinates ``w h^{-1}``
(``w`` in the window of ``alpha``); on ``Z`` and ``F = [0, 1]`` the coordinate
observable gives ``(x(0), x(-1))``.  Translating an observable by ``g`` gives
``(g alpha)(x) = alpha(g^{-1} x)``, whose window is ``W g^{-1}``.

Laws are computed by summing the base measure over every assignment of the
coordinates involved.  Probabilities are carried as :class:`fractions.Fraction`
internally, so exact (rational) laws are always available; ``exact=False``
returns floats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .groups import Group, Integers, group_from_descriptor

__all__ = [
    "BudgetExceeded",
    "to_fraction",
    "ShiftSystem",
    "Observable",
    "Refinement",
    "EmpiricalLaw",
    "join",
    "translate",
    "pushforward",
    "cylinder_law",
    "law",
    "system_from_json",
    "observable_from_json",
    "letter_from_json",
]

DEFAULT_LAW_BUDGET = 10**7
MAX_EXACT_COORDS = 12


class BudgetExceeded(RuntimeError):
    """An enumeration would exceed its configured budget."""


def to_fraction(x: Any) -> Fraction:
    """Exact rational value of ``x``; floats are read as their decimal literal."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise ValueError(f"non-finite probability {x!r}")
        return Fraction(repr(float(x)))
    raise TypeError(f"cannot read {x!r} as a rational number")


def _normalized(probs: Sequence[Any], what: str) -> tuple[Fraction, ...]:
    ps = tuple(to_fraction(p) for p in probs)
    if any(p < 0 for p in ps):
        raise ValueError(f"{what} has a negative entry")
    total = sum(ps)
    if abs(float(total) - 1.0) > 1e-12:
        raise ValueError(f"{what} sums to {float(total)!r}, not 1")
    return tuple(p / total for p in ps)


def _stationary(P: tuple[tuple[Fraction, ...], ...]) -> tuple[Fraction, ...]:
    # solve pi P = pi, sum(pi) = 1 by Gauss-Jordan elimination over Q
    n = len(P)
    rows = [[P[k][i] - (1 if k == i else 0) for k in range(n)] + [Fraction(0)] for i in range(n)]
    rows[-1] = [Fraction(1)] * n + [Fraction(1)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            raise ValueError("transition matrix has no unique stationary vector")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        piv = rows[col][col]
        rows[col] = [v / piv for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return tuple(rows[i][n] for i in range(n))


def _matmul(A, B):
    return tuple(
        tuple(sum((A[i][k] * B[k][j] for k in range(len(B))), Fraction(0)) for j in range(len(B[0])))
        for i in range(len(A))
    )


def letter_from_json(obj):
    """JSON lists become tuples (recursively) so letters are hashable."""
    if isinstance(obj, list):
        return tuple(letter_from_json(x) for x in obj)
    return obj


def _letter_to_json(a):
    if isinstance(a, tuple):
        return [_letter_to_json(x) for x in a]
    return a


@dataclass(frozen=True, eq=False)
class ShiftSystem:
    """The shift action of ``group`` on ``alphabet^group``.

    The base law is either i.i.d. (``iid`` holds the letter probabilities)
    or, on ``Z`` only, a stationary Markov chain (``transition`` and its
    stationary vector ``initial``).
    """

    group: Group
    alphabet: tuple
    iid: tuple[Fraction, ...] | None = None
    transition: tuple[tuple[Fraction, ...], ...] | None = None
    initial: tuple[Fraction, ...] | None = None
    _powers: dict = field(default_factory=dict, repr=False)

    @classmethod
    def bernoulli(cls, alphabet: Sequence, probs: Sequence, group: Group | None = None) -> "ShiftSystem":
        alphabet = tuple(alphabet)
        if len(set(alphabet)) != len(alphabet) or len(probs) != len(alphabet):
            raise ValueError("alphabet letters must be distinct, one probability each")
        return cls(group or Integers(), alphabet, iid=_normalized(probs, "letter law"))

    @classmethod
    def markov(cls, alphabet: Sequence, P: Sequence[Sequence], initial: Sequence | None = None) -> "ShiftSystem":
        alphabet = tuple(alphabet)
        n = len(alphabet)
        if len(P) != n or any(len(row) != n for row in P):
            raise ValueError("transition matrix must be |B| x |B|")
        Pq = tuple(_normalized(row, f"transition row {i}") for i, row in enumerate(P))
        pi = _stationary(Pq)
        if initial is not None:
            init = _normalized(initial, "initial vector")
            piP = [sum(init[k] * Pq[k][i] for k in range(n)) for i in range(n)]
            if max(abs(float(a - b)) for a, b in zip(piP, init)) > 1e-10:
                raise ValueError("initial vector is not stationary for the transition matrix")
            pi = init
        return cls(Integers(), alphabet, transition=Pq, initial=pi)

    @property
    def is_markov(self) -> bool:
        return self.transition is not None

    def letter_index(self, b) -> int:
        return self.alphabet.index(b)

    def marginal(self) -> tuple[Fraction, ...]:
        """One-site law (the stationary vector in the Markov case)."""
        return self.initial if self.is_markov else self.iid

    def _step(self, gap: int):
        try:
            return self._powers[gap]
        except KeyError:
            pass
        n = len(self.alphabet)
        M = tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))
        base, e = self.transition, gap
        while e:
            if e & 1:
                M = _matmul(M, base)
            base = _matmul(base, base)
            e >>= 1
        self._powers[gap] = M
        return M

    def assignment_probability(self, coords: Sequence, letters: Sequence[int]) -> Fraction:
        """Probability that ``x(coords[i]) = alphabet[letters[i]]`` for all ``i``.

        ``coords`` must be distinct.
        """
        if not self.is_markov:
            return math.prod((self.iid[b] for b in letters), start=Fraction(1))
        order = sorted(range(len(coords)), key=lambda i: coords[i])
        prev_c, prev_b = coords[order[0]], letters[order[0]]
        p = self.initial[prev_b]
        for i in order[1:]:
            c, b = coords[i], letters[i]
            p *= self._step(c - prev_c)[prev_b][b]
            if p == 0:
                return p
            prev_c, prev_b = c, b
        return p

    def to_json(self) -> dict:
        law: dict[str, Any]
        if self.is_markov:
            law = {"markov": {"P": [[str(p) for p in row] for row in self.transition]}}
        else:
            law = {"iid": [str(p) for p in self.iid]}
        return {"group": self.group.descriptor(), "alphabet": [_letter_to_json(a) for a in self.alphabet], "law": law}


@dataclass(frozen=True)
class Observable:
    """A local observable ``B^G -> A`` given by a table on ``B^window``.

    Table keys are tuples of base letters in window order.
    """

    group: Group
    base: tuple
    window: tuple
    table: Mapping[tuple, Any]
    codomain: tuple
    allow_unreachable: bool = False

    def __post_init__(self):
        window = tuple(self.group.normalize(w) for w in self.window)
        if not window or len(set(window)) != len(window):
            raise ValueError("observable window must be a nonempty list of distinct elements")
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(self, "codomain", tuple(self.codomain))
        if len(set(self.codomain)) != len(self.codomain):
            raise ValueError("codomain letters must be distinct")
        table = dict(self.table)
        expected = len(self.base) ** len(window)
        if len(table) != expected:
            raise ValueError(f"table has {len(table)} entries, expected |B|^|W| = {expected}")
        allowed = set(self.codomain)
        for key in itertools.product(self.base, repeat=len(window)):
            if key not in table:
                raise ValueError(f"table is missing the entry for {key!r}")
            if table[key] not in allowed:
                raise ValueError(f"table value {table[key]!r} is not in the codomain")
        if not self.allow_unreachable and set(table.values()) != allowed:
            missing = [a for a in self.codomain if a not in set(table.values())]
            raise ValueError(f"codomain letters {missing!r} are unreachable (set allow_unreachable)")
        object.__setattr__(self, "table", table)

    @classmethod
    def coordinate(cls, system: ShiftSystem, at=None) -> "Observable":
        """The letter at one site (``at`` defaults to the identity)."""
        g = system.group.identity() if at is None else at
        return cls(system.group, system.alphabet, (g,), {(b,): b for b in system.alphabet}, system.alphabet)

    @classmethod
    def from_function(cls, system: ShiftSystem, window: Sequence, fn: Callable[..., Any],
                      codomain: Sequence | None = None, allow_unreachable: bool = False) -> "Observable":
        """Tabulate ``fn(*letters)`` over ``B^window``."""
        window = tuple(window)
        table = {key: fn(*key) for key in itertools.product(system.alphabet, repeat=len(window))}
        if codomain is None:
            codomain = tuple(dict.fromkeys(table.values()))
        return cls(system.group, system.alphabet, window, table, tuple(codomain), allow_unreachable)

    @property
    def index(self) -> dict:
        return {a: i for i, a in enumerate(self.codomain)}

    def evaluate(self, config: Mapping) -> Any:
        """Value on a partial configuration ``{group element: base letter}``."""
        return self.table[tuple(config[w] for w in self.window)]

    def to_json(self) -> dict:
        return {
            "window": [self.group.element_to_json(w) for w in self.window],
            "codomain": [_letter_to_json(a) for a in self.codomain],
            "table": [[[_letter_to_json(b) for b in k], _letter_to_json(v)] for k, v in self.table.items()],
        }


def _check_compatible(*observables: Observable):
    first = observables[0]
    for o in observables[1:]:
        if o.base != first.base or o.group.descriptor() != first.group.descriptor():
            raise ValueError("observables live on different systems")


def _configs(base: tuple, coords: Sequence) -> Iterable[dict]:
    for letters in itertools.product(base, repeat=len(coords)):
        yield dict(zip(coords, letters))


@dataclass(frozen=True, eq=False)
class Refinement:
    """A letter map ``rho: C -> A`` with ``rho(source(x)) = target(x)`` for every ``x``."""

    source: Observable
    target: Observable
    mapping: Mapping[Any, Any]

    def __post_init__(self):
        _check_compatible(self.source, self.target)
        mapping = dict(self.mapping)
        for c in self.source.codomain:
            if c not in mapping:
                raise ValueError(f"refinement map is undefined at {c!r}")
            if mapping[c] not in self.target.index:
                raise ValueError(f"refinement value {mapping[c]!r} is not a target letter")
        coords = list(dict.fromkeys(self.source.window + self.target.window))
        for config in _configs(self.source.base, coords):
            if mapping[self.source.evaluate(config)] != self.target.evaluate(config):
                raise ValueError("map does not intertwine the two observables")
        object.__setattr__(self, "mapping", mapping)

    def __call__(self, c):
        return self.mapping[c]

    def indices(self) -> np.ndarray:
        """Target letter index for each source letter index."""
        tidx = self.target.index
        return np.array([tidx[self.mapping[c]] for c in self.source.codomain], dtype=np.int64)

    @classmethod
    def identity(cls, obs: Observable) -> "Refinement":
        return cls(obs, obs, {c: c for c in obs.codomain})

    @classmethod
    def pair(cls, rho_a: "Refinement", rho_b: "Refinement") -> "Refinement":
        """The refinement ``gamma -> alpha v beta`` given ``gamma -> alpha`` and ``gamma -> beta``."""
        if rho_a.source is not rho_b.source and rho_a.source != rho_b.source:
            raise ValueError("refinements must share their source observable")
        joint, _, _ = join(rho_a.target, rho_b.target, keep_unreachable=True)
        return cls(rho_a.source, joint, {c: (rho_a(c), rho_b(c)) for c in rho_a.source.codomain})


def join(alpha: Observable, beta: Observable, keep_unreachable: bool = False):
    """``alpha v beta`` with its two coordinate projections.

    Returns ``(joint, refinement to alpha, refinement to beta)``.  The joint
    codomain is ``A x B`` in lexicographic index order, restricted to pairs
    reachable from the table unless ``keep_unreachable`` is set.
    """
    _check_compatible(alpha, beta)
    window = tuple(dict.fromkeys(alpha.window + beta.window))
    table = {}
    for letters in itertools.product(alpha.base, repeat=len(window)):
        config = dict(zip(window, letters))
        table[letters] = (alpha.evaluate(config), beta.evaluate(config))
    pairs = list(itertools.product(alpha.codomain, beta.codomain))
    if not keep_unreachable:
        seen = set(table.values())
        pairs = [p for p in pairs if p in seen]
    joint = Observable(alpha.group, alpha.base, window, table, tuple(pairs), allow_unreachable=keep_unreachable)
    return (
        joint,
        Refinement(joint, alpha, {p: p[0] for p in pairs}),
        Refinement(joint, beta, {p: p[1] for p in pairs}),
    )


def translate(alpha: Observable, g) -> Observable:
    """``(g alpha)(x) = alpha(g^{-1} x)``: same table on the window ``W g^{-1}``."""
    G = alpha.group
    ginv = G.inv(g)
    window = tuple(G.mul(w, ginv) for w in alpha.window)
    return Observable(G, alpha.base, window, alpha.table, alpha.codomain, alpha.allow_unreachable)


def pushforward(gamma: Observable, mapping: Mapping, codomain: Sequence | None = None):
    """The coarsening ``rho o gamma`` together with its refinement from ``gamma``."""
    mapping = dict(mapping)
    if codomain is None:
        codomain = tuple(dict.fromkeys(mapping[c] for c in gamma.codomain))
    table = {k: mapping[v] for k, v in gamma.table.items()}
    obs = Observable(gamma.group, gamma.base, gamma.window, table, tuple(codomain),
                     allow_unreachable=gamma.allow_unreachable)
    return obs, Refinement(gamma, obs, mapping)


@dataclass(frozen=True)
class EmpiricalLaw:
    """A finitely supported probability vector on patterns ``A^F``.

    ``weights`` maps pattern tuples (codomain letters, one per element of
    ``F``) to positive weights; absent patterns have weight zero.
    """

    F: tuple
    codomain: tuple
    weights: Mapping[tuple, Any]

    def __post_init__(self):
        weights = {k: v for k, v in dict(self.weights).items() if v != 0}
        if any(v < 0 for v in weights.values()):
            raise ValueError("negative weight")
        if abs(float(sum(weights.values())) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "weights", weights)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(v, (Fraction, int)) for v in self.weights.values())

    def __getitem__(self, pattern) -> Any:
        return self.weights.get(tuple(pattern), 0)

    def l1(self, other: "EmpiricalLaw"):
        """Total variation distance, taken as the plain l1 norm (diameter 2)."""
        keys = set(self.weights) | set(other.weights)
        return sum(abs(self[k] - other[k]) for k in keys)

    def marginal(self, position: int) -> dict:
        out: dict = {}
        for k, v in self.weights.items():
            out[k[position]] = out.get(k[position], 0) + v
        return out

    def map_letters(self, mapping: Mapping, codomain: Sequence) -> "EmpiricalLaw":
        """Push forward through a letter map applied at every position."""
        out: dict = {}
        for k, v in self.weights.items():
            key = tuple(mapping[a] for a in k)
            out[key] = out.get(key, 0) + v
        return EmpiricalLaw(self.F, tuple(codomain), out)

    def dense(self) -> list:
        """Weights indexed by pattern code ``sum_i idx(p_i) * |A|^i``."""
        idx = {a: i for i, a in enumerate(self.codomain)}
        k = len(self.codomain)
        out: list = [0] * (k ** len(self.F))
        for pat, w in self.weights.items():
            out[sum(idx[a] * k**i for i, a in enumerate(pat))] = w
        return out

    def to_exact(self) -> "EmpiricalLaw":
        return EmpiricalLaw(self.F, self.codomain, {k: Fraction(v) for k, v in self.weights.items()})


def normalize_F(group: Group, F: Iterable) -> tuple:
    """Ordered, duplicate-free ``F`` with the identity in front if it was missing."""
    F = [group.normalize(h) for h in F]
    e = group.identity()
    if e not in F:
        F.insert(0, e)
    return tuple(dict.fromkeys(F))


def cylinder_law(system: ShiftSystem, coords: Sequence, exact: bool = True,
                 budget: int = DEFAULT_LAW_BUDGET) -> dict[tuple[int, ...], Any]:
    """Law of ``(x(c))_{c in coords}`` keyed by tuples of letter indices.

    ``coords`` may repeat; repeated coordinates always carry the same letter.
    """
    G = system.group
    coords = [G.normalize(c) for c in coords]
    distinct = list(dict.fromkeys(coords))
    if system.is_markov and not isinstance(G, Integers):
        raise ValueError("Markov laws are only defined on Z")
    n = len(system.alphabet)
    if n ** len(distinct) > budget:
        raise BudgetExceeded(f"{n}^{len(distinct)} assignments exceed the budget {budget}")
    pos = [distinct.index(c) for c in coords]
    out: dict = {}
    for letters in itertools.product(range(n), repeat=len(distinct)):
        p = system.assignment_probability(distinct, letters)
        if p:
            key = tuple(letters[i] for i in pos)
            out[key] = out.get(key, 0) + p
    if not exact:
        out = {k: float(v) for k, v in out.items()}
    return out


def law(system: ShiftSystem, alpha: Observable, F: Sequence, exact: bool = False,
        budget: int = DEFAULT_LAW_BUDGET) -> EmpiricalLaw:
    """The pattern law ``(alpha^F)_* mu`` computed by exhaustive summation.

    Exact (rational) mode is limited to at most 12 distinct coordinates.
    """
    G = system.group
    if alpha.base != system.alphabet:
        raise ValueError("observable is defined over a different alphabet")
    F = tuple(G.normalize(h) for h in F)
    coords = [G.mul(w, G.inv(h)) for h in F for w in alpha.window]
    distinct = list(dict.fromkeys(coords))
    if exact and len(distinct) > MAX_EXACT_COORDS:
        raise BudgetExceeded(f"exact mode supports at most {MAX_EXACT_COORDS} coordinates")
    cyl = cylinder_law(system, distinct, exact=True, budget=budget)
    pos = {c: i for i, c in enumerate(distinct)}
    nw = len(alpha.window)
    reads = [[pos[coords[i * nw + m]] for m in range(nw)] for i in range(len(F))]
    B = system.alphabet
    out: dict = {}
    for letters, p in cyl.items():
        pattern = tuple(alpha.table[tuple(B[letters[r]] for r in rd)] for rd in reads)
        out[pattern] = out.get(pattern, 0) + p
    if not exact:
        out = {k: float(v) for k, v in out.items()}
    return EmpiricalLaw(F, alpha.codomain, out)


def system_from_json(obj: Mapping) -> ShiftSystem:
    """``{"alphabet": [...], "law": {"iid": [...]} | {"markov": {"P": ...}}, "group": ...}``."""
    alphabet = tuple(letter_from_json(a) for a in obj["alphabet"])
    spec = obj["law"]
    group = group_from_descriptor(obj.get("group", "Z"))
    if "iid" in spec:
        return ShiftSystem.bernoulli(alphabet, spec["iid"], group)
    if "markov" in spec:
        if not isinstance(group, Integers):
            raise ValueError("Markov laws are only defined on Z")
        m = spec["markov"]
        return ShiftSystem.markov(alphabet, m["P"], m.get("initial"))
    raise ValueError("law must be {'iid': ...} or {'markov': ...}")


def observable_from_json(system: ShiftSystem, obj: Mapping) -> Observable:
    """Observable descriptors.

    * ``{"coordinate": g}`` -- the letter at ``g``
    * ``{"component": i, "at": g}`` -- entry ``i`` of a tuple-valued letter
    * ``{"window": [...], "table": [[[b...], a], ...], "codomain": [...]}``
    """
    G = system.group
    if "coordinate" in obj:
        return Observable.coordinate(system, G.element_from_json(obj["coordinate"]))
    if "component" in obj:
        i = int(obj["component"])
        at = G.element_from_json(obj["at"]) if "at" in obj else G.identity()
        codomain = tuple(dict.fromkeys(b[i] for b in system.alphabet))
        return Observable.from_function(system, [at], lambda b: b[i], codomain)
    window = [G.element_from_json(w) for w in obj["window"]]
    raw = obj["table"]
    items = raw.items() if isinstance(raw, Mapping) else raw
    table = {}
    for k, v in items:
        if isinstance(k, str):
            key = tuple(letter_from_json(x) for x in k.split(","))
            key = tuple(next((b for b in system.alphabet if str(b) == s), s) for s in key)
        else:
            key = tuple(letter_from_json(x) for x in k)
        table[key] = letter_from_json(v)
    codomain = obj.get("codomain")
    if codomain is None:
        codomain = tuple(dict.fromkeys(table[k] for k in itertools.product(system.alphabet, repeat=len(window))))
    else:
        codomain = tuple(letter_from_json(a) for a in codomain)
    return Observable(G, system.alphabet, tuple(window), table, codomain,
                      allow_unreachable=bool(obj.get("allow_unreachable", False)))
