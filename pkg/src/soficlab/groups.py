"""Group elements and permutation models (sofic approximations).

Supported groups are the integers ``Z``, lattices ``Z^k``, finite abelian
groups ``Z/m_1 x ... x Z/m_k`` and free groups ``F_k``.  Elements are plain
hashable Python values:

* ``Z``            -- ``int``
* ``Z^k``          -- ``tuple`` of ``k`` ints
* ``Z/m1 x ...``   -- ``tuple`` of residues
* ``F_k``          -- reduced ``tuple`` of nonzero ints; ``i`` is the generator
  ``x_i`` and ``-i`` its inverse, ``()`` is the identity.

A :class:`SoficApprox` stores one permutation of ``{0, ..., d-1}`` per group
generator and extends multiplicatively, so ``sigma(g h) = sigma(g) o sigma(h)``
holds exactly.  Only the freeness axiom is asymptotic in ``d``.  This is a
strictly stronger model than an arbitrary sequence of maps ``G -> S_d``.

Points are 0-based throughout (``j`` in ``range(d)``), which is also the
serialization convention.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "GroupMismatchError",
    "Group",
    "Integers",
    "IntegerLattice",
    "FiniteAbelian",
    "FreeGroup",
    "group_from_descriptor",
    "identity_perm",
    "compose",
    "invert",
    "perm_power",
    "is_permutation",
    "SoficApprox",
    "cyclic_approx",
    "torus_approx",
    "random_free_approx",
    "regular_approx",
    "hom_defect",
    "fix_defect",
    "approx_from_descriptor",
]


class GroupMismatchError(ValueError):
    """An element does not belong to the group it is used with."""


def _as_int(x: Any) -> int:
    if isinstance(x, (bool, np.bool_)) or not isinstance(x, (int, np.integer)):
        raise GroupMismatchError(f"expected an integer, got {x!r}")
    return int(x)


class Group:
    """Common interface of the supported groups."""

    abelian = True

    def identity(self):
        raise NotImplementedError

    def normalize(self, g):
        """Validate ``g`` and return its canonical form."""
        raise NotImplementedError

    def mul(self, g, h):
        raise NotImplementedError

    def inv(self, g):
        raise NotImplementedError

    def generators(self) -> list:
        raise NotImplementedError

    def descriptor(self) -> str:
        raise NotImplementedError

    def is_identity(self, g) -> bool:
        return self.normalize(g) == self.identity()

    def prod(self, *elements):
        return reduce(self.mul, elements, self.identity())

    def element_to_json(self, g):
        g = self.normalize(g)
        return list(g) if isinstance(g, tuple) else g

    def element_from_json(self, obj):
        return self.normalize(tuple(obj) if isinstance(obj, list) else obj)

    def __repr__(self) -> str:
        return f"<group {self.descriptor()}>"


@dataclass(frozen=True, repr=False)
class Integers(Group):
    def identity(self):
        return 0

    def normalize(self, g):
        return _as_int(g)

    def mul(self, g, h):
        return self.normalize(g) + self.normalize(h)

    def inv(self, g):
        return -self.normalize(g)

    def generators(self):
        return [1]

    def exponents(self, g) -> tuple[int, ...]:
        return (self.normalize(g),)

    def descriptor(self):
        return "Z"


@dataclass(frozen=True, repr=False)
class IntegerLattice(Group):
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("lattice rank must be >= 1")

    def identity(self):
        return (0,) * self.rank

    def normalize(self, g):
        if isinstance(g, np.ndarray):
            g = g.tolist()
        if not isinstance(g, (tuple, list)) or len(g) != self.rank:
            raise GroupMismatchError(f"{g!r} is not an element of Z^{self.rank}")
        return tuple(_as_int(x) for x in g)

    def mul(self, g, h):
        return tuple(a + b for a, b in zip(self.normalize(g), self.normalize(h)))

    def inv(self, g):
        return tuple(-a for a in self.normalize(g))

    def generators(self):
        return [tuple(int(i == m) for i in range(self.rank)) for m in range(self.rank)]

    def exponents(self, g):
        return self.normalize(g)

    def descriptor(self):
        return f"Z^{self.rank}"


@dataclass(frozen=True, repr=False)
class FiniteAbelian(Group):
    moduli: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "moduli", tuple(int(m) for m in self.moduli))
        if not self.moduli or any(m < 1 for m in self.moduli):
            raise ValueError("moduli must be positive integers")

    @property
    def order(self) -> int:
        return int(np.prod(self.moduli))

    def identity(self):
        return (0,) * len(self.moduli)

    def normalize(self, g):
        if isinstance(g, (int, np.integer)) and len(self.moduli) == 1:
            g = (g,)
        if isinstance(g, np.ndarray):
            g = g.tolist()
        if not isinstance(g, (tuple, list)) or len(g) != len(self.moduli):
            raise GroupMismatchError(f"{g!r} is not an element of {self.descriptor()}")
        return tuple(_as_int(x) % m for x, m in zip(g, self.moduli))

    def mul(self, g, h):
        return self.normalize(tuple(a + b for a, b in zip(self.normalize(g), self.normalize(h))))

    def inv(self, g):
        return self.normalize(tuple(-a for a in self.normalize(g)))

    def generators(self):
        k = len(self.moduli)
        return [self.normalize(tuple(int(i == m) for i in range(k))) for m in range(k)]

    def exponents(self, g):
        return self.normalize(g)

    def elements(self) -> list[tuple[int, ...]]:
        """All elements in row-major (mixed radix) order."""
        return [tuple(int(x) for x in idx) for idx in np.ndindex(*self.moduli)]

    def descriptor(self):
        return "x".join(f"Z/{m}" for m in self.moduli)


@dataclass(frozen=True, repr=False)
class FreeGroup(Group):
    rank: int
    abelian = False

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("free group rank must be >= 1")

    def identity(self):
        return ()

    def normalize(self, g):
        if isinstance(g, (int, np.integer)) and not isinstance(g, bool):
            g = (g,)
        if not isinstance(g, (tuple, list)):
            raise GroupMismatchError(f"{g!r} is not a word in F_{self.rank}")
        out: list[int] = []
        for letter in g:
            letter = _as_int(letter)
            if letter == 0 or abs(letter) > self.rank:
                raise GroupMismatchError(f"letter {letter} out of range for F_{self.rank}")
            if out and out[-1] == -letter:
                out.pop()
            else:
                out.append(letter)
        return tuple(out)

    def mul(self, g, h):
        return self.normalize(self.normalize(g) + self.normalize(h))

    def inv(self, g):
        return tuple(-x for x in reversed(self.normalize(g)))

    def generators(self):
        return [(i,) for i in range(1, self.rank + 1)]

    def descriptor(self):
        return f"F_{self.rank}"


def group_from_descriptor(desc: str) -> Group:
    """Parse ``"Z"``, ``"Z^k"``, ``"F_k"`` or ``"Z/m1xZ/m2..."``."""
    desc = desc.replace(" ", "")
    if desc == "Z":
        return Integers()
    if m := re.fullmatch(r"Z\^(\d+)", desc):
        return IntegerLattice(int(m.group(1)))
    if m := re.fullmatch(r"F_(\d+)", desc):
        return FreeGroup(int(m.group(1)))
    if re.fullmatch(r"Z/\d+(xZ/\d+)*", desc):
        return FiniteAbelian(tuple(int(t[2:]) for t in desc.split("x")))
    raise ValueError(f"unsupported group descriptor {desc!r}")


# -- permutations (0-based integer arrays, p[j] is the image of j) ----------


def identity_perm(d: int) -> np.ndarray:
    return np.arange(d, dtype=np.int64)


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a o b``: first apply ``b``, then ``a``."""
    return a[b]


def invert(p: np.ndarray) -> np.ndarray:
    out = np.empty_like(p)
    out[p] = np.arange(len(p), dtype=p.dtype)
    return out


def is_permutation(p: Sequence[int], d: int | None = None) -> bool:
    p = np.asarray(p)
    n = len(p) if d is None else d
    return p.shape == (n,) and np.array_equal(np.sort(p), np.arange(n))


def perm_power(p: np.ndarray, n: int) -> np.ndarray:
    """``p^n`` for any integer ``n`` in O(d) via the cycle decomposition."""
    d = len(p)
    out = np.empty(d, dtype=np.int64)
    seen = np.zeros(d, dtype=bool)
    for start in range(d):
        if seen[start]:
            continue
        cycle = [start]
        seen[start] = True
        j = int(p[start])
        while j != start:
            cycle.append(j)
            seen[j] = True
            j = int(p[j])
        cyc = np.asarray(cycle, dtype=np.int64)
        out[cyc] = np.roll(cyc, -(n % len(cyc)))
    return out


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SoficApprox:
    """A permutation model ``sigma: G -> S_d`` given by generator images.

    ``sigma(g)`` returns a read-only 0-based permutation array.  The
    extension rule is ``"multiplicative"``: words and exponent vectors are
    evaluated as products of generator permutations, so every model built
    here is an exact homomorphism.
    """

    group: Group
    d: int
    generator_perms: tuple[np.ndarray, ...]
    shape: tuple[int, ...] | None = None
    seed: int | None = None
    extension: str = "multiplicative"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("model size d must be >= 1")
        perms = tuple(_freeze(p) for p in self.generator_perms)
        if len(perms) != len(self.group.generators()):
            raise ValueError("need exactly one permutation per generator")
        for p in perms:
            if not is_permutation(p, self.d):
                raise ValueError("generator image is not a bijection of range(d)")
        object.__setattr__(self, "generator_perms", perms)

    def __call__(self, g) -> np.ndarray:
        g = self.group.normalize(g)
        try:
            return self._cache[g]
        except KeyError:
            pass
        if isinstance(self.group, FreeGroup):
            res = identity_perm(self.d)
            for letter in g:
                s = self.generator_perms[abs(letter) - 1]
                res = compose(res, s if letter > 0 else invert(s))
        else:
            res = identity_perm(self.d)
            for s, n in zip(self.generator_perms, self.group.exponents(g)):
                if n:
                    res = compose(res, perm_power(s, n))
        res = _freeze(res)
        if len(self._cache) < 4096:
            self._cache[g] = res
        return res

    def inverse(self, g) -> np.ndarray:
        """``sigma(g)^{-1}``, which equals ``sigma(g^{-1})`` for these models."""
        return self(self.group.inv(g))

    def relabel(self, p: Sequence[int]) -> "SoficApprox":
        """Conjugate by ``p``: the model ``g -> p o sigma(g) o p^{-1}``."""
        p = np.asarray(p, dtype=np.int64)
        if not is_permutation(p, self.d):
            raise ValueError("relabeling must be a permutation of range(d)")
        pinv = invert(p)
        gens = tuple(compose(p, compose(s, pinv)) for s in self.generator_perms)
        return SoficApprox(self.group, self.d, gens, self.shape, self.seed)

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "group": self.group.descriptor(),
            "d": list(self.shape) if self.shape else self.d,
            "generators": [p.tolist() for p in self.generator_perms],
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def cyclic_approx(d: int) -> SoficApprox:
    """Rotation model of ``Z``: ``sigma(n)(j) = (j + n) mod d``."""
    return SoficApprox(Integers(), d, ((np.arange(d) + 1) % d,))


def torus_approx(*dims: int) -> SoficApprox:
    """Coordinate-wise rotation of a ``dims[0] x ... x dims[k-1]`` torus (``Z^k``)."""
    if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
        dims = tuple(dims[0])
    if not dims or any(int(m) < 1 for m in dims):
        raise ValueError("torus dimensions must be positive")
    dims = tuple(int(m) for m in dims)
    grid = np.indices(dims).reshape(len(dims), -1)
    gens = []
    for m, size in enumerate(dims):
        shifted = grid.copy()
        shifted[m] = (shifted[m] + 1) % size
        gens.append(np.ravel_multi_index(tuple(shifted), dims))
    return SoficApprox(IntegerLattice(len(dims)), int(np.prod(dims)), tuple(gens), shape=dims)


def random_free_approx(k: int, d: int, seed: int) -> SoficApprox:
    """Independent uniform permutations for the ``k`` generators of ``F_k``."""
    rng = np.random.default_rng(seed)
    gens = tuple(rng.permutation(d) for _ in range(k))
    return SoficApprox(FreeGroup(k), d, gens, seed=seed)


def regular_approx(group: FiniteAbelian, copies: int = 1) -> SoficApprox:
    """Left regular representation of a finite abelian group, repeated ``copies`` times."""
    elems = group.elements()
    index = {g: i for i, g in enumerate(elems)}
    n = len(elems)
    gens = []
    for s in group.generators():
        base = np.array([index[group.mul(s, g)] for g in elems], dtype=np.int64)
        gens.append(np.concatenate([base + c * n for c in range(copies)]))
    return SoficApprox(group, n * copies, tuple(gens))


def _check_member(sigma: SoficApprox, *elements):
    for g in elements:
        try:
            sigma.group.normalize(g)
        except GroupMismatchError as exc:
            raise GroupMismatchError(
                f"{g!r} is not an element of {sigma.group.descriptor()}"
            ) from exc


def hom_defect(sigma: SoficApprox, g, h) -> float:
    """Fraction of points where ``sigma(g) sigma(h)`` and ``sigma(gh)`` disagree."""
    _check_member(sigma, g, h)
    lhs = compose(sigma(g), sigma(h))
    rhs = sigma(sigma.group.mul(g, h))
    return float(np.mean(lhs != rhs))


def fix_defect(sigma: SoficApprox, g) -> float:
    """Fraction of fixed points of ``sigma(g)``; ``g`` must not be the identity."""
    _check_member(sigma, g)
    if sigma.group.is_identity(g):
        raise ValueError("fix_defect is undefined at the identity element")
    return float(np.mean(sigma(g) == np.arange(sigma.d)))


def approx_from_descriptor(desc: dict) -> SoficApprox:
    """Build a model from ``{"group": ..., "d": ..., "seed": ...}``.

    If ``"generators"`` is present the stored 0-based permutations are used
    verbatim.
    """
    group = group_from_descriptor(desc["group"])
    d = desc.get("d")
    if "generators" in desc:
        shape = tuple(d) if isinstance(d, list) else None
        size = int(np.prod(shape)) if shape else int(d)
        return SoficApprox(group, size, tuple(np.asarray(p) for p in desc["generators"]),
                           shape=shape, seed=desc.get("seed"))
    if isinstance(group, Integers):
        return cyclic_approx(int(d))
    if isinstance(group, IntegerLattice):
        dims = [int(x) for x in (d if isinstance(d, Iterable) else [d] * group.rank)]
        if len(dims) != group.rank:
            raise ValueError("torus needs one size per lattice coordinate")
        return torus_approx(*dims)
    if isinstance(group, FreeGroup):
        if "seed" not in desc:
            raise ValueError("random free-group models need an explicit seed")
        return random_free_approx(group.rank, int(d), int(desc["seed"]))
    copies = int(desc.get("copies", 1))
    if d is not None and int(d) != group.order * copies:
        raise ValueError("finite abelian models have d = |G| * copies")
    return regular_approx(group, copies)
