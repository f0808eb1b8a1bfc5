"""Three computable functionals for local and doubly empirical convergence.

A measure on ``X^d`` (``X = B^G``) is represented through labelings
``y in B^d``: site ``j`` carries the configuration ``x_j(k) = y(sigma(k)^{-1} j)``.
For a local test function ``f`` with window ``W``,
``iota_j f (y) = f(x_j) = table(y(sigma(w)^{-1} j) : w in W)``.

Measures are either a list of weighted atoms ``y`` or the product tag
``mu_base^{(x) d}`` for an i.i.d. base, which is evaluated analytically.

The functionals, for a measure ``m``:

1. ``(1/d) sum_j |m(iota_j f) - mu(f)|^2``
2. ``E_{m (x) m} |mu(f1) mu(f2) - (1/d) sum_j iota_j f1 (y) iota_j f2 (y')|^2``
3. ``(1/d) sum_j m(|iota_j(a_g f) - iota_{sigma(g) j} f|^2)`` with
   ``a_g f (x) = f(g^{-1} x)``, i.e. ``f`` on the window ``W g^{-1}``.

They vanish along a convergent sequence; a finite set of test functions can
only refute convergence, never certify it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .groups import SoficApprox
from .systems import BudgetExceeded, ShiftSystem, cylinder_law

__all__ = [
    "AtomicMeasure",
    "TestFunction",
    "mu_of",
    "le_functional_1",
    "le_functional_2",
    "le_functional_3",
    "default_test_set",
    "trend_flag",
    "LdeRow",
    "LdeReport",
    "lde_report",
    "build_measure",
]

DEFAULT_PAIR_BUDGET = 10**6


@dataclass(frozen=True)
class TestFunction:
    """A real function of the letters on ``window`` (keys are letter-index tuples)."""

    window: tuple
    table: np.ndarray  # shape (|B|,)*len(window)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != len(self.window) or len(set(self.window)) != len(self.window):
            raise ValueError("table rank must equal the number of distinct window elements")
        if not np.all(np.isfinite(t)):
            raise ValueError("test function must be bounded")
        object.__setattr__(self, "window", tuple(self.window))
        object.__setattr__(self, "table", t)

    @classmethod
    def indicator(cls, n_letters: int, window: Sequence, pattern: Sequence[int]) -> "TestFunction":
        """``1[y(w_i) = pattern[i] for all i]``."""
        t = np.zeros((n_letters,) * len(window))
        t[tuple(pattern)] = 1.0
        return cls(tuple(window), t)

    @classmethod
    def constant(cls, n_letters: int, c: float, at=0) -> "TestFunction":
        return cls((at,), np.full(n_letters, float(c)))

    def translated(self, group, g) -> "TestFunction":
        """``a_g f``: the same table on the window ``W g^{-1}``."""
        ginv = group.inv(g)
        return TestFunction(tuple(group.mul(w, ginv) for w in self.window), self.table)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """``sum_a w_a delta_{y_a}`` on ``B^d``, or the i.i.d. product measure (``atoms is None``)."""

    d: int
    atoms: np.ndarray | None = None      # shape (n_atoms, d), letter indices
    weights: np.ndarray | None = None
    system: ShiftSystem | None = None    # base law for the product tag

    def __post_init__(self):
        if self.atoms is None:
            if self.system is None or self.system.is_markov:
                raise ValueError("the product tag needs an i.i.d. base system")
            return
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.int64))
        if atoms.shape[1] != self.d:
            raise ValueError("atom length differs from d")
        w = np.full(len(atoms), 1.0 / len(atoms)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (len(atoms),) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def product(cls, system: ShiftSystem, d: int) -> "AtomicMeasure":
        return cls(d, system=system)

    @classmethod
    def point(cls, y: Sequence[int]) -> "AtomicMeasure":
        y = np.asarray(y, dtype=np.int64)
        return cls(len(y), y[None, :], np.ones(1))

    @classmethod
    def empirical(cls, system: ShiftSystem, d: int, n_samples: int, seed: int) -> "AtomicMeasure":
        """``n_samples`` i.i.d. draws from the product measure, each of weight ``1/n``."""
        if system.is_markov:
            raise ValueError("empirical recipe needs an i.i.d. base system")
        rng = np.random.default_rng(seed)
        p = np.array([float(x) for x in system.iid])
        ys = rng.choice(len(p), size=(n_samples, d), p=p)
        return cls(d, ys, np.full(n_samples, 1.0 / n_samples))

    @property
    def is_product(self) -> bool:
        return self.atoms is None

    def relabel(self, p: Sequence[int]) -> "AtomicMeasure":
        """Atoms ``y o p^{-1}`` (pairs with the model ``p sigma p^{-1}``)."""
        if self.is_product:
            return self
        p = np.asarray(p, dtype=np.int64)
        out = np.empty_like(self.atoms)
        out[:, p] = self.atoms
        return AtomicMeasure(self.d, out, self.weights)


def _positions(sigma: SoficApprox, window: Sequence) -> np.ndarray:
    """``pos[i, j] = sigma(window[i])^{-1}(j)``."""
    return np.stack([np.asarray(sigma.inverse(w)) for w in window]).astype(np.int64)


class _IidExpect:
    """Expectations of tables of letters at (possibly repeated) i.i.d. sites.

    Results are cached by the repetition structure so that equal structures
    give bit-identical floats.
    """

    def __init__(self, system: ShiftSystem):
        self.p = [float(x) for x in system.iid]
        self.cache: dict = {}

    def __call__(self, positions: Sequence[int], fn, key) -> float:
        distinct = list(dict.fromkeys(positions))
        shape = tuple(distinct.index(x) for x in positions)
        ck = (key, shape)
        if ck in self.cache:
            return self.cache[ck]
        n = len(self.p)
        total = 0.0
        for letters in itertools.product(range(n), repeat=len(distinct)):
            w = math.prod(self.p[a] for a in letters)
            if w:
                total += w * fn(tuple(letters[i] for i in shape))
        self.cache[ck] = total
        return total


def mu_of(system: ShiftSystem, f: TestFunction) -> float:
    """``mu(f)`` from the exact cylinder law of the window."""
    G = system.group
    cyl = cylinder_law(system, [G.normalize(w) for w in f.window], exact=True)
    return float(sum(float(p) * f.table[k] for k, p in cyl.items()))


def _mu_product(E: _IidExpect, f: TestFunction, tag) -> float:
    m = len(f.window)
    return E(tuple(range(m)), lambda l: f.table[l], tag)


def _atom_values(m: AtomicMeasure, pos: np.ndarray, f: TestFunction) -> np.ndarray:
    # (n_atoms, d) values of iota_j f on each atom
    letters = tuple(m.atoms[:, pos[i]] for i in range(pos.shape[0]))
    return f.table[letters]


def le_functional_1(m: AtomicMeasure, system: ShiftSystem, f: TestFunction, sigma: SoficApprox) -> float:
    """``(1/d) sum_j |m(iota_j f) - mu(f)|^2``."""
    _check(m, sigma)
    pos = _positions(sigma, f.window)
    if m.is_product:
        E = _IidExpect(system)
        mu = _mu_product(E, f, "f")
        vals = np.array([E(tuple(pos[:, j]), lambda l: f.table[l], "f") for j in range(m.d)])
    else:
        mu = mu_of(system, f)
        vals = m.weights @ _atom_values(m, pos, f)
    return float(np.mean((vals - mu) ** 2))


def le_functional_2(m: AtomicMeasure, system: ShiftSystem, f1: TestFunction, f2: TestFunction,
                    sigma: SoficApprox, pair_budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """``E_{m (x) m} |mu(f1) mu(f2) - (1/d) sum_j iota_j f1 (y) iota_j f2 (y')|^2``."""
    _check(m, sigma)
    d = m.d
    pos1, pos2 = _positions(sigma, f1.window), _positions(sigma, f2.window)
    if not m.is_product:
        n = len(m.atoms)
        if n * n > pair_budget:
            raise BudgetExceeded(f"{n}^2 atom pairs exceed the budget {pair_budget}")
        c = mu_of(system, f1) * mu_of(system, f2)
        U = _atom_values(m, pos1, f1)
        V = _atom_values(m, pos2, f2)
        S = U @ V.T / d
        return float(m.weights @ ((c - S) ** 2) @ m.weights)

    E = _IidExpect(system)
    t1, t2 = f1.table, f2.table
    c = _mu_product(E, f1, "f1") * _mu_product(E, f2, "f2")
    a = np.array([E(tuple(pos1[:, j]), lambda l: t1[l], "f1") for j in range(d)])
    b = np.array([E(tuple(pos2[:, j]), lambda l: t2[l], "f2") for j in range(d)])
    ES = float(a @ b) / d
    # pairs (j, k) whose windows share a site for f1 or for f2 need joint moments
    special: set[tuple[int, int]] = set()
    for pos in (pos1, pos2):
        sites: dict[int, list[int]] = {}
        for j in range(d):
            for s in set(pos[:, j].tolist()):
                sites.setdefault(s, []).append(j)
        for js in sites.values():
            special.update(itertools.product(js, js))
    m1, m2 = pos1.shape[0], pos2.shape[0]
    correction = 0.0
    for j, k in sorted(special):
        uu = E(tuple(pos1[:, j]) + tuple(pos1[:, k]), lambda l: t1[l[:m1]] * t1[l[m1:]], "f1f1")
        vv = E(tuple(pos2[:, j]) + tuple(pos2[:, k]), lambda l: t2[l[:m2]] * t2[l[m2:]], "f2f2")
        correction += uu * vv - a[j] * a[k] * b[j] * b[k]
    ES2 = (float(a @ b) ** 2 + correction) / d**2
    return max(c * c - 2 * c * ES + ES2, 0.0)


def le_functional_3(m: AtomicMeasure, system: ShiftSystem, f: TestFunction, g, sigma: SoficApprox) -> float:
    """``(1/d) sum_j m(|iota_j(a_g f) - iota_{sigma(g) j} f|^2)``."""
    _check(m, sigma)
    G = sigma.group
    d = m.d
    pos_a = _positions(sigma, f.translated(G, g).window)
    pos_f = _positions(sigma, f.window)[:, np.asarray(sigma(g))]
    differ = np.flatnonzero((pos_a != pos_f).any(axis=0))
    if differ.size == 0:
        return 0.0
    t = f.table
    if m.is_product:
        E = _IidExpect(system)
        k = pos_a.shape[0]
        total = sum(
            E(tuple(pos_a[:, j]) + tuple(pos_f[:, j]), lambda l: (t[l[:k]] - t[l[k:]]) ** 2, "f3")
            for j in differ.tolist()
        )
        return total / d
    A = _atom_values(m, pos_a[:, differ], f)
    B = _atom_values(m, pos_f[:, differ], f)
    return float(m.weights @ ((A - B) ** 2).sum(axis=1)) / d


def _check(m: AtomicMeasure, sigma: SoficApprox):
    if m.d != sigma.d:
        raise ValueError("measure and model have different sizes")


def default_test_set(system: ShiftSystem) -> list[TestFunction]:
    """Cylinder indicators on ``{e}`` and on ``{e, s}`` for each generator ``s``."""
    G = system.group
    n = len(system.alphabet)
    e = G.identity()
    windows = [(e,)] + [(e, s) for s in G.generators()]
    out = []
    for w in windows:
        for pattern in itertools.product(range(n), repeat=len(w)):
            out.append(TestFunction.indicator(n, w, pattern))
    return out


def trend_flag(ds: Sequence[int], values: Sequence[float], zero_tol: float = 1e-12) -> bool:
    """Decay check on the top half of the sizes.

    Passes when those values are all (numerically) zero, or when no step
    grows by more than a factor of two and the log-log slope is at most
    ``-1/2``.
    """
    n = len(ds)
    if n == 0:
        raise ValueError("empty size list")
    top = list(range(n // 2, n)) if n > 1 else [0]
    if n > 1 and len(top) < 2:
        top = [n - 2, n - 1]
    v = np.asarray([values[i] for i in top], dtype=float)
    if np.all(np.abs(v) <= zero_tol):
        return True
    if len(top) < 2 or np.any(v <= 0):
        return False
    if np.any(v[1:] > 2 * v[:-1]):
        return False
    x = np.log([ds[i] for i in top])
    slope = np.polyfit(x, np.log(v), 1)[0]
    return bool(slope <= -0.5)


@dataclass(frozen=True)
class LdeRow:
    d: int
    f1: float
    f2: float
    f3: float


@dataclass(frozen=True)
class LdeReport:
    rows: list
    flags: dict
    note: str = "finite test set: a necessary-condition check only"

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


def build_measure(recipe: Any, system: ShiftSystem, d: int) -> AtomicMeasure:
    """Recipes: ``"product"``, ``("empirical", n, seed)``, ``("atoms", ys, weights)``,
    ``("point", y)`` or a callable ``d -> AtomicMeasure``."""
    if callable(recipe):
        return recipe(d)
    if recipe == "product":
        return AtomicMeasure.product(system, d)
    kind = recipe[0]
    if kind == "empirical":
        return AtomicMeasure.empirical(system, d, int(recipe[1]), int(recipe[2]))
    if kind == "atoms":
        return AtomicMeasure(d, np.asarray(recipe[1]), None if len(recipe) < 3 else recipe[2])
    if kind == "point":
        return AtomicMeasure.point(recipe[1])
    raise ValueError(f"unknown recipe {recipe!r}")


def lde_report(system: ShiftSystem, sigmas: Sequence[SoficApprox], recipe: Any,
               tests: Sequence[TestFunction] | None = None, elements: Sequence | None = None,
               pair_budget: int = DEFAULT_PAIR_BUDGET) -> LdeReport:
    """Per-size maxima of the three functionals over the test data, with trend flags."""
    tests = list(default_test_set(system) if tests is None else tests)
    elements = list(system.group.generators() if elements is None else elements)
    rows = []
    for sigma in sigmas:
        m = build_measure(recipe, system, sigma.d)
        v1 = max(le_functional_1(m, system, f, sigma) for f in tests)
        v2 = max(le_functional_2(m, system, f1, f2, sigma, pair_budget) for f1 in tests for f2 in tests)
        v3 = max((le_functional_3(m, system, f, g, sigma) for f in tests for g in elements), default=0.0)
        rows.append(LdeRow(sigma.d, float(v1), float(v2), float(v3)))
    ds = [r.d for r in rows]
    flags = {
        "f1": trend_flag(ds, [r.f1 for r in rows]),
        "f2": trend_flag(ds, [r.f2 for r in rows]),
        "f3": trend_flag(ds, [r.f3 for r in rows]),
    }
    return LdeReport(rows, flags)
