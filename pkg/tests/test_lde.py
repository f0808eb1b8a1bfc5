import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from soficlab.groups import FreeGroup, cyclic_approx, invert, random_free_approx
from soficlab.lde import (
    AtomicMeasure,
    TestFunction,
    build_measure,
    default_test_set,
    le_functional_1,
    le_functional_2,
    le_functional_3,
    lde_report,
    mu_of,
    trend_flag,
)
from soficlab.systems import BudgetExceeded, ShiftSystem


# -- independent reference: plain loops over atoms and sites -----------------

def site_value(y, sigma, f, j):
    return f.table[tuple(y[int(invert(sigma(w))[j])] for w in f.window)]


def ref_f1(atoms, weights, sigma, f, mu):
    d = len(atoms[0])
    return sum((sum(w * site_value(y, sigma, f, j) for y, w in zip(atoms, weights)) - mu) ** 2
               for j in range(d)) / d


def ref_f2(atoms, weights, sigma, f1, f2, c):
    d = len(atoms[0])
    total = 0.0
    for y, wy in zip(atoms, weights):
        for z, wz in zip(atoms, weights):
            s = sum(site_value(y, sigma, f1, j) * site_value(z, sigma, f2, j) for j in range(d)) / d
            total += wy * wz * (c - s) ** 2
    return total


def ref_f3(atoms, weights, sigma, f, g):
    G = sigma.group
    d = len(atoms[0])
    fg = TestFunction(tuple(G.mul(w, G.inv(g)) for w in f.window), f.table)
    sg = sigma(g)
    total = 0.0
    for y, w in zip(atoms, weights):
        for j in range(d):
            total += w * (site_value(y, sigma, fg, j) - site_value(y, sigma, f, int(sg[j]))) ** 2
    return total / d


def all_atoms(probs, d):
    atoms, weights = [], []
    for y in itertools.product(range(len(probs)), repeat=d):
        atoms.append(np.array(y))
        weights.append(math.prod(probs[a] for a in y))
    return atoms, weights


BIT = ShiftSystem.bernoulli([0, 1], ["1/3", "2/3"])
PROBS = [1 / 3, 2 / 3]


def test_mu_of():
    f = TestFunction.indicator(2, (0, 1), (1, 1))
    assert mu_of(BIT, f) == pytest.approx(4 / 9)


@pytest.mark.parametrize("window,pattern", [((0,), (0,)), ((0, 1), (1, 0)), ((0, 2), (1, 1))])
def test_product_tag_equals_exhaustive_atoms(window, pattern):
    d = 5
    sigma = cyclic_approx(d)
    f = TestFunction.indicator(2, window, pattern)
    g = TestFunction.indicator(2, (0,), (1,))
    atoms, weights = all_atoms(PROBS, d)
    prod = AtomicMeasure.product(BIT, d)
    exh = AtomicMeasure(d, np.array(atoms), np.array(weights))
    mu = mu_of(BIT, f)
    assert le_functional_1(prod, BIT, f, sigma) == pytest.approx(ref_f1(atoms, weights, sigma, f, mu), abs=1e-12)
    c = mu * mu_of(BIT, g)
    ref2 = ref_f2(atoms, weights, sigma, f, g, c)
    assert le_functional_2(prod, BIT, f, g, sigma) == pytest.approx(ref2, abs=1e-12)
    assert le_functional_2(exh, BIT, f, g, sigma) == pytest.approx(ref2, abs=1e-12)
    assert le_functional_3(prod, BIT, f, 1, sigma) == 0.0


def test_product_tag_bit_indicator_closed_form():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    f = TestFunction.indicator(2, (0,), (0,))
    for d in (8, 16, 64):
        m = AtomicMeasure.product(S, d)
        assert le_functional_1(m, S, f, cyclic_approx(d)) == 0.0
        assert le_functional_2(m, S, f, f, cyclic_approx(d)) == pytest.approx(3 / (16 * d), rel=1e-12)


def test_free_group_product_equals_direct_double_sum():
    S = ShiftSystem.bernoulli([0, 1], ["1/3", "2/3"], FreeGroup(2))
    sigma = random_free_approx(2, 4, 5)
    atoms, weights = all_atoms(PROBS, 4)
    f = TestFunction.indicator(2, ((), (1,)), (1, 0))
    g = TestFunction.indicator(2, ((), (2,)), (1, 1))
    prod = AtomicMeasure.product(S, 4)
    c = mu_of(S, f) * mu_of(S, g)
    assert le_functional_2(prod, S, f, g, sigma) == pytest.approx(ref_f2(atoms, weights, sigma, f, g, c), abs=1e-12)
    for elem in [(1,), (2,), (1, -2)]:
        ref = ref_f3(atoms, weights, sigma, f, elem)
        assert le_functional_3(prod, S, f, elem, sigma) == pytest.approx(ref, abs=1e-12)
        exh = AtomicMeasure(4, np.array(atoms), np.array(weights))
        assert le_functional_3(exh, S, f, elem, sigma) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n_atoms=st.integers(1, 4))
def test_atomic_functionals_match_reference(seed, n_atoms):
    rng = np.random.default_rng(seed)
    d = 6
    sigma = random_free_approx(2, d, seed)
    S = ShiftSystem.bernoulli([0, 1], ["1/3", "2/3"], FreeGroup(2))
    atoms = [rng.integers(0, 2, d) for _ in range(n_atoms)]
    w = rng.random(n_atoms) + 0.1
    w = w / w.sum()
    m = AtomicMeasure(d, np.array(atoms), w)
    f = TestFunction.indicator(2, ((), (1,)), tuple(rng.integers(0, 2, 2)))
    g = TestFunction.indicator(2, ((),), (int(rng.integers(0, 2)),))
    assert le_functional_1(m, S, f, sigma) == pytest.approx(ref_f1(atoms, w, sigma, f, mu_of(S, f)), abs=1e-12)
    c = mu_of(S, f) * mu_of(S, g)
    assert le_functional_2(m, S, f, g, sigma) == pytest.approx(ref_f2(atoms, w, sigma, f, g, c), abs=1e-12)
    assert le_functional_3(m, S, f, (2,), sigma) == pytest.approx(ref_f3(atoms, w, sigma, f, (2,)), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_relabel_invariance(seed):
    rng = np.random.default_rng(seed)
    d = 10
    sigma = random_free_approx(2, d, seed)
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"], FreeGroup(2))
    m = AtomicMeasure(d, rng.integers(0, 2, (3, d)))
    p = rng.permutation(d)
    mp, sp = m.relabel(p), sigma.relabel(p)
    f = TestFunction.indicator(2, ((), (1,)), (0, 1))
    assert le_functional_1(mp, S, f, sp) == pytest.approx(le_functional_1(m, S, f, sigma), abs=1e-12)
    assert le_functional_2(mp, S, f, f, sp) == pytest.approx(le_functional_2(m, S, f, f, sigma), abs=1e-12)
    assert le_functional_3(mp, S, f, (1,), sp) == pytest.approx(le_functional_3(m, S, f, (1,), sigma), abs=1e-12)


def test_empirical_measure_matches_analytic_mean():
    # for n i.i.d. atoms, E[functional 1] = Var(f) / n exactly
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    f = TestFunction.indicator(2, (0,), (0,))
    n, d = 50, 32
    vals = np.array([le_functional_1(AtomicMeasure.empirical(S, d, n, s), S, f, cyclic_approx(d))
                     for s in range(40)])
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - 0.25 / n) < 3 * se


def test_point_mass_fails_functional_1():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    f = TestFunction.indicator(2, (0,), (0,))
    m = AtomicMeasure.point(np.zeros(8, dtype=int))
    assert le_functional_1(m, S, f, cyclic_approx(8)) == pytest.approx(0.25)


def test_default_test_set_size():
    assert len(default_test_set(BIT)) == 2 + 4
    S = ShiftSystem.bernoulli([0, 1, 2], ["1/3"] * 3, FreeGroup(2))
    assert len(default_test_set(S)) == 3 + 2 * 9


def test_trend_flag():
    assert trend_flag([8, 16, 32, 64], [0.0, 0.0, 0.0, 0.0])
    assert trend_flag([8, 16, 32, 64], [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    assert not trend_flag([8, 16, 32, 64], [0.25, 0.25, 0.25, 0.25])
    assert not trend_flag([8, 16, 32, 64], [0.1, 0.05, 0.05, 0.2])
    # only the top half of the sizes is inspected
    assert trend_flag([8, 16, 32, 64], [0.1, 0.05, 0.2, 0.1])
    with pytest.raises(ValueError):
        trend_flag([], [])


def test_lde_report_product_passes_point_fails():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    sigmas = [cyclic_approx(d) for d in (8, 16, 32, 64)]
    rep = lde_report(S, sigmas, "product")
    assert rep.passed
    assert all(type(r.f2) is float for r in rep.rows)
    bad = lde_report(S, sigmas, lambda d: AtomicMeasure.point(np.zeros(d, dtype=int)))
    assert not bad.flags["f1"]


def test_build_measure_recipes():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    assert build_measure("product", S, 4).is_product
    assert build_measure(("empirical", 3, 0), S, 4).atoms.shape == (3, 4)
    assert build_measure(("point", [0, 1, 0]), S, 3).atoms.shape == (1, 3)
    assert len(build_measure(("atoms", [[0, 1], [1, 1]]), S, 2).weights) == 2
    with pytest.raises(ValueError):
        build_measure(("nope",), S, 2)


def test_validation():
    S = ShiftSystem.markov([0, 1], [["1/2", "1/2"], ["1/2", "1/2"]])
    with pytest.raises(ValueError):
        AtomicMeasure.product(S, 4)
    with pytest.raises(ValueError):
        AtomicMeasure(3, np.zeros((2, 3), dtype=int), [0.5, 0.6])
    with pytest.raises(ValueError):
        le_functional_1(AtomicMeasure.point([0, 1]), BIT, TestFunction.constant(2, 1.0), cyclic_approx(3))
    m = AtomicMeasure(4, np.zeros((40, 4), dtype=int))
    f = TestFunction.constant(2, 1.0)
    with pytest.raises(BudgetExceeded):
        le_functional_2(m, BIT, f, f, cyclic_approx(4), pair_budget=100)
