import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from soficlab.groups import FreeGroup, IntegerLattice
from soficlab.systems import (
    BudgetExceeded,
    EmpiricalLaw,
    Observable,
    Refinement,
    ShiftSystem,
    cylinder_law,
    join,
    law,
    observable_from_json,
    pushforward,
    system_from_json,
    translate,
)

from oracles import iid_law_Z

HALF = [Fraction(1, 2)] * 2


@pytest.fixture
def bit():
    return ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])


@pytest.fixture
def chain():
    return ShiftSystem.markov([0, 1], [[0.9, 0.1], [0.2, 0.8]])


def test_identity_observable_law(bit):
    a = Observable.coordinate(bit)
    assert law(bit, a, [0], exact=True).weights == {(0,): HALF[0], (1,): HALF[1]}


def test_two_point_law_is_uniform(bit):
    a = Observable.coordinate(bit)
    lw = law(bit, a, [0, 1], exact=True)
    assert lw.weights == {p: Fraction(1, 4) for p in itertools.product([0, 1], repeat=2)}


def test_pattern_reads_shifted_coordinates():
    # alpha^F(x)(h) = alpha(h^{-1} x) reads x(-h) for the coordinate at 0
    S = ShiftSystem.bernoulli("ab", ["1/3", "2/3"])
    a = Observable.coordinate(S)
    b = Observable.from_function(S, [0, 1], lambda u, v: u + v)
    lw = law(S, b, [0, 2], exact=True)
    idx_table = {(i, j): u + v for i, u in enumerate("ab") for j, v in enumerate("ab")}
    ref = iid_law_Z([Fraction(1, 3), Fraction(2, 3)], [0, 1], idx_table, [0, 2])
    assert dict(lw.weights) == {k: v for k, v in ref.items() if v}
    assert law(S, a, [0, 1], exact=True)[("a", "b")] == Fraction(2, 9)


def test_markov_stationary_and_law(chain):
    pi = chain.initial
    assert pi == (Fraction(2, 3), Fraction(1, 3))
    a = Observable.coordinate(chain)
    lw = law(chain, a, [0, 1], exact=True)
    P = [[Fraction(9, 10), Fraction(1, 10)], [Fraction(1, 5), Fraction(4, 5)]]
    # pattern (x(0), x(-1)) = (a, b): path b -> a
    for a_, b_ in itertools.product([0, 1], repeat=2):
        assert lw[(a_, b_)] == pi[b_] * P[b_][a_]


def test_markov_gap_path_exhaustive(chain):
    # x(0), x(3): sum over the two unseen middle letters
    P = [[Fraction(9, 10), Fraction(1, 10)], [Fraction(1, 5), Fraction(4, 5)]]
    pi = chain.initial
    cyl = cylinder_law(chain, [0, 3])
    for a, b in itertools.product([0, 1], repeat=2):
        ref = sum(pi[a] * P[a][m1] * P[m1][m2] * P[m2][b] for m1 in (0, 1) for m2 in (0, 1))
        assert cyl[(a, b)] == ref


def test_markov_rejects_non_stationary_initial():
    with pytest.raises(ValueError):
        ShiftSystem.markov([0, 1], [[0.9, 0.1], [0.2, 0.8]], initial=[0.5, 0.5])


def test_markov_requires_Z():
    with pytest.raises(ValueError):
        system_from_json({"alphabet": [0, 1], "group": "F_2", "law": {"markov": {"P": [[1, 0], [0, 1]]}}})


def test_probabilities_are_validated():
    with pytest.raises(ValueError):
        ShiftSystem.bernoulli([0, 1], [0.5, 0.6])
    S = ShiftSystem.bernoulli([0, 1, 2], ["1/3", "1/3", "1/3"])
    assert sum(S.iid) == 1


@settings(max_examples=25, deadline=None)
@given(F=st.lists(st.integers(-3, 3), min_size=1, max_size=3, unique=True), chain_case=st.booleans())
def test_marginals_are_shift_invariant(F, chain_case):
    S = (ShiftSystem.markov([0, 1], [["3/4", "1/4"], ["1/3", "2/3"]]) if chain_case
         else ShiftSystem.bernoulli([0, 1], ["1/5", "4/5"]))
    a = Observable.from_function(S, [0, 1], lambda u, v: u * v, codomain=(0, 1))
    lw = law(S, a, F, exact=True)
    single = law(S, a, [0], exact=True)
    for i in range(len(F)):
        m = lw.marginal(i)
        assert all(m.get(k[0], 0) == v for k, v in single.weights.items())


def test_refinement_pushforward_is_exact(bit):
    g = Observable.from_function(bit, [0, 1], lambda u, v: (u, v))
    a, rho = pushforward(g, {c: c[0] ^ c[1] for c in g.codomain})
    F = [0, 2]
    lhs = law(bit, g, F, exact=True).map_letters(rho.mapping, a.codomain)
    assert lhs.weights == law(bit, a, F, exact=True).weights


def test_refinement_rejects_bad_map(bit):
    a = Observable.coordinate(bit)
    b = Observable.coordinate(bit, at=1)
    with pytest.raises(ValueError):
        Refinement(a, b, {0: 0, 1: 1})


def test_join_idempotent_and_product(bit):
    a = Observable.coordinate(bit)
    j, ra, _ = join(a, a)
    assert len(j.codomain) == 2 and sorted(ra(c) for c in j.codomain) == [0, 1]
    b = Observable.coordinate(bit, at=5)
    jab, _, _ = join(a, b)
    lw = law(bit, jab, [0], exact=True)
    assert lw.weights == {((x, y),): Fraction(1, 4) for x in (0, 1) for y in (0, 1)}
    assert len(jab.codomain) <= 4


def test_join_commutes_up_to_relabel(bit):
    a = Observable.from_function(bit, [0, 1], lambda u, v: u & v, codomain=(0, 1))
    b = Observable.coordinate(bit, at=1)
    ab, _, _ = join(a, b)
    ba, _, _ = join(b, a)
    assert sorted(ab.codomain) == sorted((y, x) for x, y in ba.codomain)
    l1 = law(bit, ab, [0], exact=True)
    l2 = law(bit, ba, [0], exact=True)
    assert all(l1[((x, y),)] == l2[((y, x),)] for x, y in ab.codomain)


def test_join_keeps_unreachable_when_asked(bit):
    a = Observable.coordinate(bit)
    j, _, _ = join(a, a, keep_unreachable=True)
    assert len(j.codomain) == 4


def test_translate_axioms(bit):
    a = Observable.from_function(bit, [0, 2], lambda u, v: u - v)
    assert translate(a, 0) == a
    assert translate(translate(a, 3), -5) == translate(a, -2)
    G = FreeGroup(2)
    S = ShiftSystem.bernoulli([0, 1], HALF, G)
    b = Observable.from_function(S, [(), (1,)], lambda u, v: u + v)
    g, h = (1, 2), (-2,)
    assert translate(translate(b, g), h).window == translate(b, G.mul(h, g)).window


def test_translate_preserves_single_law(chain):
    a = Observable.from_function(chain, [0, 1], lambda u, v: 2 * u + v)
    assert law(chain, translate(a, 4), [0], exact=True).weights == law(chain, a, [0], exact=True).weights


def test_disjoint_translate_join_is_product(bit):
    a = Observable.from_function(bit, [0, 1], lambda u, v: u | v)
    j, _, _ = join(a, translate(a, 5))
    lw = law(bit, j, [0], exact=True)
    single = law(bit, a, [0], exact=True)
    for (x, y), in lw.weights:
        assert lw[((x, y),)] == single[(x,)] * single[(y,)]


def test_budget_and_exact_limit(bit):
    a = Observable.coordinate(bit)
    with pytest.raises(BudgetExceeded):
        law(bit, a, list(range(13)), exact=True)
    with pytest.raises(BudgetExceeded):
        law(bit, a, list(range(5)), budget=10)
    assert abs(sum(law(bit, a, list(range(13))).weights.values()) - 1) < 1e-12


def test_lattice_observable_law():
    S = ShiftSystem.bernoulli([0, 1], ["1/4", "3/4"], IntegerLattice(2))
    a = Observable.coordinate(S)
    lw = law(S, a, [(0, 0), (1, 0), (0, 1)], exact=True)
    assert lw[(1, 1, 1)] == Fraction(27, 64)


def test_observable_validation(bit):
    with pytest.raises(ValueError):
        Observable(bit.group, bit.alphabet, (0,), {(0,): 0}, (0,))
    with pytest.raises(ValueError):
        Observable(bit.group, bit.alphabet, (0,), {(0,): 0, (1,): 0}, (0, 1))
    ok = Observable(bit.group, bit.alphabet, (0,), {(0,): 0, (1,): 0}, (0, 1), allow_unreachable=True)
    assert ok.codomain == (0, 1)


def test_json_descriptors():
    S = system_from_json({"alphabet": [[0, 0], [0, 1]], "law": {"iid": ["1/2", "1/2"]}, "group": "Z"})
    assert S.alphabet == ((0, 0), (0, 1))
    comp = observable_from_json(S, {"component": 1})
    assert comp.codomain == (0, 1)
    coord = observable_from_json(S, {"coordinate": 2})
    assert coord.window == (2,)
    S2 = system_from_json({"alphabet": [0, 1], "law": {"iid": [0.5, 0.5]}})
    t = observable_from_json(S2, {"window": [0, 1], "table": [[[0, 0], 0], [[0, 1], 1], [[1, 0], 1], [[1, 1], 0]]})
    assert t.evaluate({0: 1, 1: 1}) == 0
    assert system_from_json(S.to_json()).iid == S.iid


def test_empirical_law_validation():
    with pytest.raises(ValueError):
        EmpiricalLaw((0,), (0, 1), {(0,): 0.5, (1,): 0.4})
    e = EmpiricalLaw((0,), (0, 1), {(0,): Fraction(1, 3), (1,): Fraction(2, 3)})
    assert e.l1(EmpiricalLaw((0,), (0, 1), {(0,): 1})) == Fraction(4, 3)
