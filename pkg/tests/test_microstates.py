import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from soficlab.groups import IntegerLattice, cyclic_approx, random_free_approx, torus_approx
from soficlab.microstates import (
    EMPTY,
    APQuery,
    ap_count_exact,
    ap_distance,
    ap_enumerate,
    ap_member,
    ap_sample_estimate,
    empirical_F_law,
    rel_ap_count,
    rel_ap_set,
    rel_ap_sup,
    sample_ap_member,
)
from soficlab.systems import BudgetExceeded, Observable, ShiftSystem, join, law

from oracles import brute_ap, brute_rel, brute_rel_sup, l1, pattern_histogram


def bit_query(d, F, delta, probs=("1/2", "1/2")):
    S = ShiftSystem.bernoulli([0, 1], list(probs))
    a = Observable.coordinate(S)
    return S, a, APQuery.build(S, a, F, delta, cyclic_approx(d))


def test_membership_example():
    _, _, q = bit_query(4, [0, 1], "1/2")
    member, dist = ap_member([0, 0, 0, 1], q)
    assert dist == Fraction(1, 2) and not member
    member, dist = ap_member([0, 1, 0, 1], q)
    assert dist == 1 and not member
    member, dist = ap_member([0, 0, 1, 1], q)
    assert dist == 0 and member


@pytest.mark.parametrize("d", [4, 6, 8])
@pytest.mark.parametrize("delta", ["1/4", "1/2", "3/4", "1"])
def test_count_matches_brute_force(d, delta):
    _, _, q = bit_query(d, [0, 1], delta, ("1/3", "2/3"))
    target = {k: v for k, v in q.target.weights.items()}
    ref = brute_ap(target, d, list(q.F), Fraction(delta), [0, 1])
    assert ap_count_exact(q) == len(ref)
    assert [tuple(p) for p in ap_enumerate(q)] == sorted(ref)


@settings(max_examples=20, deadline=None)
@given(d=st.integers(3, 7), F=st.lists(st.integers(-2, 2), min_size=1, max_size=3, unique=True),
       num=st.integers(1, 8), p=st.sampled_from(["1/2", "1/3", "1/5"]))
def test_count_matches_brute_force_random(d, F, num, p):
    delta = Fraction(num, 4)
    S = ShiftSystem.bernoulli([0, 1], [p, 1 - Fraction(p)])
    a = Observable.coordinate(S)
    q = APQuery.build(S, a, F, delta, cyclic_approx(d))
    ref = brute_ap(dict(q.target.weights), d, list(q.F), delta, [0, 1])
    assert ap_count_exact(q) == len(ref)


def test_distance_matches_oracle():
    rng = np.random.default_rng(0)
    _, _, q = bit_query(9, [0, 1, 3], "1/2")
    for _ in range(20):
        phi = rng.integers(0, 2, 9)
        ref = l1(pattern_histogram(tuple(phi), 9, list(q.F)), dict(q.target.weights))
        assert ap_distance(phi, q) == ref


def test_identity_is_prepended():
    _, _, q = bit_query(5, [1, 2], "1/2")
    assert q.F == (0, 1, 2)


@pytest.mark.parametrize("d", [5, 7])
def test_monotone_in_delta(d):
    _, _, q = bit_query(d, [0, 1], "1/4")
    counts = [ap_count_exact(q.with_delta(Fraction(k, 8))) for k in range(1, 17)]
    assert counts == sorted(counts)
    assert counts[-1] == 2**d


def test_trivial_regimes():
    _, _, q = bit_query(6, [0, 1], 3)
    assert ap_count_exact(q) == 64
    est = ap_sample_estimate(q, 100)
    assert est.flag == "exact_all" and est.estimate == 64
    # F of size 2, d = 3: no labeling can match an irrational-free target this closely
    _, _, q2 = bit_query(3, [0], "1/10")
    assert ap_count_exact(q2) == 0
    assert ap_sample_estimate(q2, 10).flag == "exact_empty"


def test_relabel_equivariance():
    # AP is invariant under relabelling the model by a permutation p
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    a = Observable.coordinate(S)
    sigma = cyclic_approx(7)
    p = np.random.default_rng(3).permutation(7)
    q = APQuery.build(S, a, [0, 1], "3/4", sigma)
    qp = q.with_sigma(sigma.relabel(p))
    members = {tuple(phi) for phi in ap_enumerate(q)}
    inv = np.argsort(p)
    moved = {tuple(np.asarray(phi)[inv]) for phi in members}
    assert {tuple(phi) for phi in ap_enumerate(qp)} == moved


def test_free_group_count_matches_direct_membership():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"], group=random_free_approx(2, 6, 1).group)
    a = Observable.coordinate(S)
    sigma = random_free_approx(2, 6, 1)
    q = APQuery.build(S, a, [(), (1,), (2,)], "3/4", sigma)
    direct = sum(ap_member(np.array(phi), q)[0] for phi in itertools.product([0, 1], repeat=6))
    assert ap_count_exact(q) == direct


def test_lattice_count_matches_direct_membership():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"], IntegerLattice(2))
    a = Observable.coordinate(S)
    q = APQuery.build(S, a, [(0, 0), (1, 0)], "1/2", torus_approx(2, 4))
    direct = sum(ap_member(np.array(phi), q)[0] for phi in itertools.product([0, 1], repeat=8))
    assert ap_count_exact(q) == direct


def test_empirical_F_law_codomain():
    sigma = cyclic_approx(4)
    lw = empirical_F_law([0, 1, 1, 1], sigma, [0, 1], codomain=(0, 1))
    assert lw.weights == {(0, 1): Fraction(1, 4), (1, 0): Fraction(1, 4), (1, 1): Fraction(1, 2)}


def test_count_budget():
    _, _, q = bit_query(16, [0, 1], "1/4")
    with pytest.raises(BudgetExceeded):
        ap_count_exact(q, budget=50)


def test_estimator_unbiased_over_seeds():
    _, _, q = bit_query(10, [0, 1], "1/2")
    exact = ap_count_exact(q)
    ests = np.array([ap_sample_estimate(q, 400, seed=s).estimate for s in range(100)])
    se = ests.std(ddof=1) / np.sqrt(len(ests))
    assert abs(ests.mean() - exact) < 3 * se + 1e-9


def test_estimator_interval_covers_exact():
    _, _, q = bit_query(12, [0, 1], "1/2")
    exact = ap_count_exact(q)
    est = ap_sample_estimate(q, 20000, seed=1)
    assert est.lower <= exact <= est.upper


def test_estimator_is_deterministic():
    _, _, q = bit_query(12, [0, 1], "1/2")
    a = ap_sample_estimate(q, 5000, seed=9)
    b = ap_sample_estimate(q, 5000, seed=9)
    assert a == b


def test_estimator_upper_bound_only():
    _, _, q = bit_query(40, [0, 1, 2], "1/100", ("1/2", "1/2"))
    est = ap_sample_estimate(q, 100, seed=0)
    assert est.flag in ("upper_bound_only", "exact_empty")
    assert est.estimate == 0


def test_sampled_member_is_member():
    _, _, q = bit_query(10, [0, 1], "1/2")
    phi = sample_ap_member(q, np.random.default_rng(0))
    assert ap_member(phi, q)[0]


def _joint_setup(d, delta):
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    a = Observable.coordinate(S)
    b = Observable.from_function(S, [0, 1], lambda u, v: u ^ v, codomain=(0, 1))
    g, ra, rb = join(a, b)
    q = APQuery.build(S, g, [0, 1], delta, cyclic_approx(d))
    return q, ra, rb


@pytest.mark.parametrize("d", [4, 6])
def test_relative_counts_match_brute_force(d):
    q, ra, rb = _joint_setup(d, "5/4")
    members = [tuple(p) for p in ap_enumerate(q)]
    assert members
    A = ra.indices().tolist()
    B = rb.indices().tolist()
    for psi in itertools.product([0, 1], repeat=d):
        assert rel_ap_count(q, ra, rb, psi) == len(brute_rel(members, A, B, psi))
    sup = rel_ap_sup(q, ra, rb)
    assert sup.value == brute_rel_sup(members, A, B)
    assert rel_ap_count(q, ra, rb, sup.argmax) == sup.value


def test_relative_sup_empty():
    q, ra, rb = _joint_setup(4, "3/4")
    assert ap_count_exact(q) == 0
    res = rel_ap_sup(q, ra, rb)
    assert res.empty and res.value is EMPTY and res.n_psi == 0


def test_relative_set_projects_members():
    q, ra, rb = _joint_setup(6, "1")
    psi = [0, 1, 1, 0, 0, 1]
    got = rel_ap_set(q, ra, rb, psi)
    A = ra.indices()
    B = rb.indices()
    direct = {A[np.asarray(p)].astype(np.int16).tobytes() for p in ap_enumerate(q) if list(B[p]) == psi}
    assert got == direct


def test_relative_rejects_foreign_refinement():
    q, ra, rb = _joint_setup(4, "1")
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    other, ro, _ = join(Observable.coordinate(S, at=3), Observable.coordinate(S))
    with pytest.raises(ValueError):
        rel_ap_count(q, ro, rb, [0, 0, 0, 0])


def test_query_validation():
    S = ShiftSystem.bernoulli([0, 1], ["1/2", "1/2"])
    a = Observable.coordinate(S)
    with pytest.raises(ValueError):
        APQuery.build(S, a, [0], 0, cyclic_approx(4))
    with pytest.raises(ValueError):
        APQuery.build(S, a, [0], "1/2", torus_approx(2, 2))
    with pytest.raises(ValueError):
        APQuery(a, (0,), "1/2", cyclic_approx(3), law(S, a, [0, 1], exact=True))
