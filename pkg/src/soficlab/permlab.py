"""Constructive permutation lemmas.

* :func:`almost_permutation` patches a family of partial injections
  ``p_k: B_k -> C_k`` into one permutation of ``{0..d-1}`` that agrees with
  each ``p_k`` outside a small set.
* :func:`conjugate_microstates_Z` builds, for two microstates ``phi, psi``
  over the rotation model of ``Z``, a permutation ``p`` with ``psi o p`` close
  to ``phi`` that nearly commutes with the rotation, by cutting ``phi`` into
  intervals, locating each interval's content in ``psi`` and shifting along.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .groups import SoficApprox, cyclic_approx, is_permutation
from .microstates import APQuery, ap_member

__all__ = [
    "PartialInjectionFamily",
    "family_diagnostics",
    "almost_permutation",
    "PatchResult",
    "kappa_for",
    "mismatch_fraction",
    "random_family",
    "Tiling",
    "interval_tiling",
    "ConjugationReport",
    "conjugate_microstates_Z",
    "label_mismatch",
    "commutation_defect",
    "default_tile_length",
]


def _sorted_unique(a) -> np.ndarray:
    return np.unique(np.asarray(a, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class PartialInjectionFamily:
    """Sets ``B_k, C_k`` of ``{0..d-1}`` with injective partial maps ``p_k: B_k -> C_k``.

    ``maps[k]`` is a pair ``(domain, image)`` of equal-length arrays with
    ``p_k(domain[i]) = image[i]``; ``domain`` is sorted.
    """

    d: int
    B: tuple
    C: tuple
    maps: tuple

    def __post_init__(self):
        if not (len(self.B) == len(self.C) == len(self.maps)):
            raise ValueError("B, C and maps must have one entry per index k")
        B = tuple(_sorted_unique(b) for b in self.B)
        C = tuple(_sorted_unique(c) for c in self.C)
        maps = []
        for k, (dom, img) in enumerate(self.maps):
            dom = np.asarray(dom, dtype=np.int64)
            img = np.asarray(img, dtype=np.int64)
            if dom.shape != img.shape:
                raise ValueError(f"map {k}: domain and image differ in length")
            order = np.argsort(dom, kind="stable")
            dom, img = dom[order], img[order]
            if len(np.unique(dom)) != len(dom):
                raise ValueError(f"map {k} is not a function (repeated domain point)")
            if len(np.unique(img)) != len(img):
                raise ValueError(f"map {k} is not injective")
            if not np.isin(dom, B[k]).all() or not np.isin(img, C[k]).all():
                raise ValueError(f"map {k} does not go from B_k to C_k")
            maps.append((dom, img))
        for s in B + C:
            if s.size and (s[0] < 0 or s[-1] >= self.d):
                raise ValueError("set element outside range(d)")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "maps", tuple(maps))

    def __len__(self) -> int:
        return len(self.B)


def family_diagnostics(fam: PartialInjectionFamily) -> dict:
    """Largest pairwise overlaps, size gaps and range deficits (fractions of ``d``)."""
    d, n = fam.d, len(fam)
    ov_b = ov_c = 0.0
    for k in range(n):
        for l in range(k + 1, n):
            ov_b = max(ov_b, len(np.intersect1d(fam.B[k], fam.B[l])) / d)
            ov_c = max(ov_c, len(np.intersect1d(fam.C[k], fam.C[l])) / d)
    gaps = [abs(len(fam.B[k]) - len(fam.C[k])) / d for k in range(n)]
    deficits = [(len(fam.C[k]) - len(fam.maps[k][1])) / d for k in range(n)]
    return {
        "overlap_B": ov_b,
        "overlap_C": ov_c,
        "size_gap": max(gaps, default=0.0),
        "range_deficit": max(deficits, default=0.0),
    }


def kappa_for(n_blocks: int, eps: float) -> float:
    """The hypothesis scale ``kappa = eps / (4 |K|^2)``."""
    return eps / (4 * n_blocks**2)


def hypotheses_hold(diag: dict, kappa: float) -> bool:
    return all(v < kappa for v in diag.values())


def mismatch_fraction(p: np.ndarray, fam: PartialInjectionFamily) -> float:
    """``u_d`` of the points where ``p`` disagrees with some ``p_k`` (on its domain)."""
    bad = np.zeros(fam.d, dtype=bool)
    for dom, img in fam.maps:
        bad[dom[p[dom] != img]] = True
    return float(bad.sum()) / fam.d


@dataclass(frozen=True)
class PatchResult:
    p: np.ndarray
    bound: float
    kappa: float
    diagnostics: dict
    hypotheses_hold: bool
    discarded: int
    completed: int


def almost_permutation(fam: PartialInjectionFamily, eps: float) -> PatchResult:
    """Patch the partial injections into one permutation.

    1. Walk ``k`` in order and each domain in increasing order; keep the pair
       ``j -> p_k(j)`` unless ``j`` or ``p_k(j)`` is already taken (first wins).
    2. The kept pairs define ``p`` on part of ``{0..d-1}``.
    3. Remaining domain points are matched to remaining range points, both
       in increasing order.

    ``bound`` is the recounted ``u_d(U_k {j in dom p_k : p(j) != p_k(j)})``.
    When all diagnostics are below ``kappa = eps/(4|K|^2)`` every discarded
    point is in a pairwise overlap, so ``bound <= |K|^2 kappa < eps``.
    """
    d = fam.d
    p = np.full(d, -1, dtype=np.int64)
    taken = np.zeros(d, dtype=bool)
    discarded = 0
    for dom, img in fam.maps:
        for j, v in zip(dom.tolist(), img.tolist()):
            if p[j] >= 0 or taken[v]:
                discarded += 1
                continue
            p[j] = v
            taken[v] = True
    free_dom = np.flatnonzero(p < 0)
    free_rng = np.flatnonzero(~taken)
    p[free_dom] = free_rng
    assert is_permutation(p, d)
    diag = family_diagnostics(fam)
    kappa = kappa_for(max(len(fam), 1), eps)
    return PatchResult(p, mismatch_fraction(p, fam), kappa, diag, hypotheses_hold(diag, kappa),
                       discarded, int(free_dom.size))


def random_family(d: int, n_blocks: int, kappa: float, rng: np.random.Generator,
                  max_tries: int = 1000) -> PartialInjectionFamily:
    """A random family satisfying every hypothesis strictly below ``kappa``.

    Blocks are random disjoint sets, then perturbed by up to
    ``ceil(kappa d) - 1`` overlap points, size changes and range deficits.
    """
    m = max(int(np.ceil(kappa * d)) - 1, 0)
    for _ in range(max_tries):
        sizes = rng.integers(d // (2 * n_blocks), d // n_blocks + 1, size=n_blocks)
        permB, permC = rng.permutation(d), rng.permutation(d)
        offs = np.concatenate([[0], np.cumsum(sizes)])
        B, C, maps = [], [], []
        for k in range(n_blocks):
            b = permB[offs[k]:offs[k + 1]]
            c = permC[offs[k]:offs[k + 1]]
            gap = int(rng.integers(0, m + 1)) if m else 0
            if gap and rng.random() < 0.5:
                c = permC[offs[k]:offs[k + 1] + gap] if offs[k + 1] + gap <= d else c
            elif gap:
                c = c[: max(len(c) - gap, 0)]
            if m:
                b = np.concatenate([b, rng.choice(d, size=int(rng.integers(0, m + 1)), replace=False)])
                c = np.concatenate([c, rng.choice(d, size=int(rng.integers(0, m + 1)), replace=False)])
            b, c = np.unique(b), np.unique(c)
            deficit = int(rng.integers(0, m + 1)) if m else 0
            size = max(min(len(b), len(c) - deficit), 0)
            dom = np.sort(rng.choice(b, size=size, replace=False))
            img = rng.choice(c, size=size, replace=False)
            B.append(b)
            C.append(c)
            maps.append((dom, img))
        fam = PartialInjectionFamily(d, tuple(B), tuple(C), tuple(maps))
        if hypotheses_hold(family_diagnostics(fam), kappa):
            return fam
    raise RuntimeError("could not generate a family satisfying the hypotheses")


# -- interval tilings and conjugation over Z ---------------------------------


@dataclass(frozen=True)
class Tiling:
    """Tiles ``[s, s+T)`` of ``{0..d-1}``; a final short tile is kept separately."""

    d: int
    T: int
    starts: tuple
    remainder_start: int
    remainder_length: int

    def tiles(self) -> list[tuple[int, int]]:
        """``(start, length)`` of all tiles including a nonempty remainder."""
        out = [(s, self.T) for s in self.starts]
        if self.remainder_length:
            out.append((self.remainder_start, self.remainder_length))
        return out


def interval_tiling(d: int, T: int) -> Tiling:
    """Starts ``0, T, 2T, ...`` of the full tiles and the short tail of length ``d mod T``."""
    if not 1 <= T <= d:
        raise ValueError("need 1 <= T <= d")
    n = d // T
    return Tiling(d, T, tuple(range(0, n * T, T)), n * T, d - n * T)


def default_tile_length(E: Sequence[int], eps: float, window_span: int = 1) -> int:
    """``ceil(2 max(E-span, window span) / eps)``."""
    span = max([abs(int(g)) for g in E] + [window_span, 1])
    return int(np.ceil(2 * span / eps))


def label_mismatch(p: np.ndarray, phi: np.ndarray, psi: np.ndarray) -> float:
    """``u_d({j : psi(p(j)) != phi(j)})``."""
    return float(np.mean(np.asarray(psi)[p] != np.asarray(phi)))


def commutation_defect(p: np.ndarray, sigma: SoficApprox, g) -> float:
    """``u_d({j : p(sigma(g) j) != sigma(g) p(j)})``."""
    s = sigma(g)
    return float(np.mean(p[s] != s[p]))


@dataclass(frozen=True)
class ConjugationReport:
    p: np.ndarray
    mismatch_fraction: float
    commutation_defects: dict
    n_tiles: int
    n_matched: int
    patch: PatchResult
    warnings: tuple = field(default=())

    @property
    def patched_fraction(self) -> float:
        """Points placed by the completion step or discarded in a collision."""
        return (self.patch.completed + self.patch.discarded) / len(self.p)

    def to_json(self) -> dict:
        return {
            "p": self.p.tolist(),
            "mismatch_fraction": self.mismatch_fraction,
            "commutation_defects": {str(g): v for g, v in self.commutation_defects.items()},
            "n_tiles": self.n_tiles,
            "n_matched": self.n_matched,
            "achieved_bound": self.patch.bound,
            "kappa": self.patch.kappa,
            "hypotheses_hold": self.patch.hypotheses_hold,
            "diagnostics": self.patch.diagnostics,
            "patched_fraction": self.patched_fraction,
            "warnings": list(self.warnings),
        }


def _windows(x: np.ndarray, length: int) -> np.ndarray:
    # cyclic windows x[j : j + length] as rows
    d = len(x)
    idx = (np.arange(d)[:, None] + np.arange(length)[None, :]) % d
    return x[idx]


def conjugate_microstates_Z(phi: Sequence[int], psi: Sequence[int], E: Sequence[int], eps: float,
                            T: int, sigma: SoficApprox | None = None,
                            query: APQuery | None = None) -> ConjugationReport:
    """Find ``p`` with ``psi o p ~ phi`` nearly commuting with the rotation.

    ``phi`` is cut by :func:`interval_tiling` (the short tail is a tile too).
    For a tile with content ``pi``, the candidates are all positions of
    ``psi`` whose window of the same length reads ``pi``; tiles are processed
    in order and each takes the first candidate whose interval is still
    unused, which matches each pattern class as fully as disjointness allows.
    A matched tile ``[s, s+l)`` with image start ``c`` gives
    ``p(s+t) = c+t mod d``.  The partial maps, indexed by the offset ``t``
    inside the tile, are patched with :func:`almost_permutation`.
    """
    phi = np.asarray(phi, dtype=np.int64)
    psi = np.asarray(psi, dtype=np.int64)
    d = len(phi)
    if psi.shape != (d,):
        raise ValueError("phi and psi must have the same length")
    sigma = cyclic_approx(d) if sigma is None else sigma
    if sigma.d != d or sigma.group.descriptor() != "Z":
        raise ValueError("sigma must be a model of Z of size d")
    if not np.array_equal(sigma(1), (np.arange(d) + 1) % d):
        raise ValueError("conjugation is implemented for the rotation model only")
    warnings = []
    if query is not None:
        for name, x in (("phi", phi), ("psi", psi)):
            if not ap_member(x, query)[0]:
                warnings.append(f"{name} is not in the microstate space of the query")

    tiling = interval_tiling(d, T)
    tiles = tiling.tiles()
    occupied = np.zeros(d, dtype=bool)
    occurrences: dict[int, dict[bytes, list[int]]] = {}
    matched: list[tuple[int, int, int]] = []  # (start, image start, length)
    candidate_sets: dict[int, set[int]] = {}
    for s, length in tiles:
        if length not in occurrences:
            table: dict[bytes, list[int]] = {}
            for j, row in enumerate(_windows(psi, length)):
                table.setdefault(row.tobytes(), []).append(j)
            occurrences[length] = table
            candidate_sets[length] = set()
        key = phi[(s + np.arange(length)) % d].tobytes()
        cands = occurrences[length].get(key, [])
        candidate_sets[length].update(cands)
        for c in cands:
            span = (c + np.arange(length)) % d
            if not occupied[span].any():
                occupied[span] = True
                matched.append((s, c, length))
                break

    # family indexed by the offset t within a tile
    B, C, maps = [], [], []
    for t in range(T):
        b = [(s + t) % d for s, length in tiles if length > t]
        c = sorted({(c0 + t) % d for length, cs in candidate_sets.items() if length > t for c0 in cs})
        dom = [(s + t) % d for s, c0, length in matched if length > t]
        img = [(c0 + t) % d for s, c0, length in matched if length > t]
        B.append(b)
        C.append(c)
        maps.append((dom, img))
    fam = PartialInjectionFamily(d, tuple(B), tuple(C), tuple(maps))
    patch = almost_permutation(fam, eps)
    p = patch.p
    defects = {g: commutation_defect(p, sigma, g) for g in E}
    return ConjugationReport(p, label_mismatch(p, phi, psi), defects, len(tiles), len(matched),
                             patch, tuple(warnings))
