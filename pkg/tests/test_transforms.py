import numpy as np
import pytest
from conftest import basis_martingales

from honestime.corpus import random_corpus
from honestime.enlargement import survival_bundle
from honestime.space import Rational, ValidationError, increments, is_martingale, rational_array
from honestime.transforms import (
    bracket_identities,
    m_hat_after,
    mm_ftau_functional,
    t_after,
    t_after_simple,
    t_before,
)

Q = Rational


def test_after_tau_of_m_on_s1(s1):
    b = survival_bundle(s1.space, s1.tau)
    assert increments(t_after(b.m, b))[2, 0] == 0
    assert is_martingale(s1.space, t_after(b.m, b), b.GF).ok
    assert is_martingale(s1.space, m_hat_after(b.m, b), b.GF).ok


def test_before_tau_of_m_on_s1(s1):
    b = survival_bundle(s1.space, s1.tau)
    d = increments(t_before(b.m, b))
    assert d[1, 0] == 0 and d[1, 1] == 0


def test_constants_map_to_zero(s1, s2):
    for sc in (s1, s2):
        b = survival_bundle(sc.space, sc.tau)
        c = rational_array(np.full((3, 4), 5))
        for op in (t_after, t_before, m_hat_after):
            assert np.all(op(c, b) == 0)
        assert mm_ftau_functional(c, b) == 0


def test_before_tau_on_stopping_time(s2):
    b = survival_bundle(s2.space, s2.tau)
    for M in basis_martingales(s2.space):
        assert is_martingale(s2.space, t_before(M, b), b.GF).ok


def test_tau_zero_gives_plain_increments(s1):
    b = survival_bundle(s1.space, np.zeros(4, dtype=int))
    for M in basis_martingales(s1.space):
        assert np.all(t_after(M, b) == M - M[0])
        assert is_martingale(s1.space, t_after(M, b), b.GF).ok


def test_linearity(corpus200):
    for sc in corpus200[:20]:
        b = survival_bundle(sc.space, sc.tau)
        basis = basis_martingales(sc.space)
        X, Y = basis[0], basis[-1]
        lhs = t_after(Q(3) * X - Q(1, 2) * Y, b)
        assert np.all(lhs == Q(3) * t_after(X, b) - Q(1, 2) * t_after(Y, b))


def test_simplified_form_when_no_jump_to_one():
    for sc in random_corpus(30, seed=2, require=("no_Gtilde1_Gminus_lt1",)):
        b = survival_bundle(sc.space, sc.tau)
        for M in basis_martingales(sc.space):
            assert np.all(t_after(M, b) == t_after_simple(M, b))
            assert np.all(t_after(M, b, jump_term=False) == t_after(M, b))


def test_compensator_term_needed_on_s1(s1):
    b = survival_bundle(s1.space, s1.tau)
    results = [is_martingale(s1.space, t_after(M, b, jump_term=False), b.GF).ok for M in basis_martingales(s1.space)]
    assert all(is_martingale(s1.space, t_after(M, b), b.GF).ok for M in basis_martingales(s1.space))
    assert not all(results)


def test_integrability_functional_s1(s1):
    b = survival_bundle(s1.space, s1.tau)
    # only outcome a at k = 2 has G̃ < 1 and a nonzero jump: (1/4)/(1 + 1/2) weighted by 1/4
    assert mm_ftau_functional(b.m, b) == Q(1, 24)
    dm = increments(b.m)
    brute = sum(
        s1.space.probs[i] * dm[k, i] ** 2 / (1 - b.Gtilde[k, i] + abs(dm[k, i]))
        for k in range(1, 3)
        for i in range(4)
        if b.Gtilde[k, i] < 1 and dm[k, i] != 0
    )
    assert brute == Q(1, 24)


def test_bracket_identities_refuse_without_assumptions(s1):
    b = survival_bundle(s1.space, s1.tau)
    with pytest.raises(ValidationError):
        bracket_identities(b.m, b.m, b)


def test_bracket_identities_s2_and_zero(s2):
    b = survival_bundle(s2.space, s2.tau)
    res = bracket_identities(b.m, b.m, b)
    assert all(r.ok for r in res.values())
    zero = rational_array(np.zeros((3, 4), dtype=int))
    assert bracket_identities(zero, b.m, b)["bracket"].ok


def test_bracket_identities_random():
    for sc in random_corpus(20, seed=9, require=("no_Gtilde1_Gminus_lt1",)):
        b = survival_bundle(sc.space, sc.tau)
        basis = basis_martingales(sc.space)
        res = bracket_identities(basis[0], basis[-1], b)
        assert set(res) == {"bracket", "exponential_ratio", "ratio_martingale"}
        assert all(r.ok for r in res.values())
