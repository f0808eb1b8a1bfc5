"""From-scratch brute-force references used by the tests.

Nothing here imports the package: permutations of the rotation model, laws
and memberships are recomputed from their raw definitions with plain Python
and ``fractions``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def rotation_inverse(d: int, h: int, j: int) -> int:
    """``sigma(h)^{-1}(j)`` for the rotation ``j -> j + h mod d``."""
    return (j - h) % d


def iid_law_Z(probs, window, table, F):
    """``(alpha^F)_* mu`` for an i.i.d. letter law on ``Z``.

    ``alpha^F(x)(h) = table(x(w - h) for w in window)``; sums the product
    measure over every assignment of the coordinates involved.
    """
    coords = sorted({w - h for h in F for w in window})
    letters = range(len(probs))
    out = {}
    for assign in itertools.product(letters, repeat=len(coords)):
        x = dict(zip(coords, assign))
        p = Fraction(1)
        for c in coords:
            p *= probs[x[c]]
        pattern = tuple(table[tuple(x[w - h] for w in window)] for h in F)
        out[pattern] = out.get(pattern, 0) + p
    return out


def pattern_histogram(phi, d, F):
    """Empirical law of ``j -> (phi(sigma(h)^{-1} j))_{h in F}`` for the rotation model."""
    out = {}
    for j in range(d):
        pat = tuple(phi[rotation_inverse(d, h, j)] for h in F)
        out[pat] = out.get(pat, 0) + Fraction(1, d)
    return out


def l1(p, q):
    keys = set(p) | set(q)
    return sum(abs(p.get(k, 0) - q.get(k, 0)) for k in keys)


def brute_ap(target, d, F, delta, letters):
    """All labelings in ``letters^d`` within l1 distance ``< delta`` of ``target``."""
    out = []
    for phi in itertools.product(letters, repeat=d):
        if l1(pattern_histogram(phi, d, F), target) < delta:
            out.append(phi)
    return out


def brute_rel(members, rho_a, rho_b, psi):
    """``{rho_a o phi : phi in members, rho_b o phi = psi}``."""
    return {tuple(rho_a[c] for c in phi) for phi in members if tuple(rho_b[c] for c in phi) == tuple(psi)}


def brute_rel_sup(members, rho_a, rho_b):
    fibers = {}
    for phi in members:
        fibers.setdefault(tuple(rho_b[c] for c in phi), set()).add(tuple(rho_a[c] for c in phi))
    if not fibers:
        return None
    return max(len(s) for s in fibers.values())


def brute_xi(P, delta, psi):
    """``|{phi in A^n : ||type(phi, psi) - P||_1 < delta}|`` by listing every ``phi``."""
    nA, nB = len(P), len(P[0])
    n = len(psi)
    count = 0
    for phi in itertools.product(range(nA), repeat=n):
        c = {}
        for a, b in zip(phi, psi):
            c[(a, b)] = c.get((a, b), 0) + 1
        dist = sum(abs(Fraction(c.get((a, b), 0), n) - P[a][b]) for a in range(nA) for b in range(nB))
        count += dist < delta
    return count


def circulant_min_singular(coeffs: dict, d: int) -> float:
    """``min_k |sum_x c_x exp(2 pi i k x / d)|`` for a scalar element of ``Z(Z)``."""
    best = math.inf
    for k in range(d):
        z = sum(c * complex(math.cos(2 * math.pi * k * x / d), math.sin(2 * math.pi * k * x / d))
                for x, c in coeffs.items())
        best = min(best, abs(z))
    return best
