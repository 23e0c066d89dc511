import numpy as np
import pytest

from honestime import deflators as D
from honestime.corpus import has_live_after_region, random_corpus
from honestime.enlargement import check_assumptions, survival_bundle
from honestime.space import (
    ONE,
    FiniteFilteredSpace,
    Rational,
    ValidationError,
    indicator,
    is_martingale,
    ones,
    rational_array,
    safe_div,
    stoch_exponential,
    stoch_integral,
    stopped,
    zeros,
)

Q = Rational


def test_unit_density_on_martingale_price(s2):
    Z = ones((3, 4))
    assert D.classify(s2.space, Z, s2.price).verdict == "both"


def test_drifting_price_is_rejected(s2):
    S = rational_array([[4] * 4, [6, 6, 3, 3], [7, 5, 4, 2]])
    rep = D.classify(s2.space, ones((3, 4)), S)
    assert rep.verdict == "neither"
    w = D.is_deflator(s2.space, ones((3, 4)), S).witness
    # E[ΔS_1] = 1/2 > 0: the violating c is the upper endpoint 1/max|ΔS⁻| = 1
    assert (w["k"], w["c"]) == (1, ONE)
    assert w["lhs"] > w["rhs"]
    assert not D.is_lmd(s2.space, ones((3, 4)), S).ok


def test_zero_price_reduces_to_supermartingale(s1):
    X = zeros((3, 4))
    sup = rational_array([[1] * 4, [Q(1, 2)] * 2 + [1] * 2, [Q(1, 4), Q(1, 2), Q(1, 2), 1]])
    assert D.is_deflator(s1.space, sup, X).ok
    sub = rational_array([[1] * 4, [2, 2, 1, 1], [2, 2, 1, 1]])
    assert not D.is_deflator(s1.space, sub, X).ok
    assert is_martingale(s1.space, sup, direction="le").ok


def test_martingale_density_is_lmd(s2):
    S = rational_array([[4] * 4, [6, 6, 3, 3], [7, 5, 4, 2]])
    Z = D.martingale_density(s2.space, S)
    assert D.is_lmd(s2.space, Z, S).ok
    assert D.is_deflator(s2.space, Z, S).ok


def test_lmd_implies_deflator_and_scaling():
    for sc in random_corpus(30, seed=12):
        try:
            Z = D.martingale_density(sc.space, sc.price)
        except ValidationError:
            continue
        assert D.is_lmd(sc.space, Z, sc.price).ok
        assert D.is_deflator(sc.space, Z, sc.price).ok
        Y = ones(Z.shape)
        assert D.is_deflator(sc.space, Y, sc.price).ok == D.is_deflator(sc.space, Y, sc.price * Q(7, 3)).ok


def test_hat_model_s2_and_s1(s1, s2):
    b = survival_bundle(s2.space, s2.tau)
    hat = D.hat_model(b, s2.price)
    assert np.all(hat.Zhat == 1)
    assert list(hat.Qhat) == list(s2.space.probs)
    with pytest.raises(ValidationError):
        D.hat_model(survival_bundle(s1.space, s1.tau), s1.price)


def test_unit_deflator_transfers(s2):
    b = survival_bundle(s2.space, s2.tau)
    tr = D.transfer_after(ones((3, 4)), b, s2.price)
    assert np.all(tr.ZG == 1) and tr.output_report.ok and tr.consistent


def test_transfer_and_recovery():
    for sc in random_corpus(10, seed=13, require=("honest", "no_Gtilde1_Gminus_lt1"), accept=has_live_after_region):
        b = survival_bundle(sc.space, sc.tau)
        hat = D.hat_model(b, sc.price)
        assert is_martingale(sc.space, hat.Zhat).ok and hat.exponential_matches
        rng = np.random.default_rng(sc.seed)
        for violate in (False, True):
            Z = D.sample_deflator(b, hat, rng, violate=violate)
            tr = D.transfer_after(Z, b, sc.price, hat)
            assert tr.input_report.ok != violate
            assert tr.consistent
            if violate:
                assert (tr.transported["lhs"], tr.transported["rhs"]) == (tr.input_report.witness["lhs"], tr.input_report.witness["rhs"])
            W, back = D.recover_after(tr.ZG, b, sc.price, hat)
            assert np.all((W == Z)[:, hat.Qhat > 0])


def test_violation_needs_a_live_atom(s2):
    b = survival_bundle(s2.space, np.full(4, 2))
    hat = D.hat_model(b, s2.price)
    with pytest.raises(ValidationError):
        D.sample_deflator(b, hat, np.random.default_rng(0), violate=True)


def test_assembly_with_trivial_factors():
    for sc in random_corpus(10, seed=14, require=("honest", "no_Gtilde1_Gminus_lt1", "G_positive")):
        b = survival_bundle(sc.space, sc.tau)
        try:
            S = sc.price
            Z = D.martingale_density(sc.space, S)
        except ValidationError:
            continue
        # turn S into a P-martingale by reweighting the outcomes with Z_T
        probs = Z[-1] * sc.space.probs
        if any(p == 0 for p in probs):
            continue
        space = FiniteFilteredSpace(sc.space.outcomes, probs, sc.space.horizon, [sc.space.filtration.atoms(n) for n in range(sc.space.horizon + 1)])
        bq = survival_bundle(space, sc.tau)
        if not all(check_assumptions(space, sc.tau, bq).as_dict().values()):
            continue
        one = ones(S.shape)
        out = D.assemble_general(one, one, zeros(S.shape), zeros(S.shape), bq, S)
        before = stoch_exponential(stoch_integral(safe_div(indicator(bq.up_to()), bq.G_prev), bq.m))
        after = stoch_exponential(stoch_integral(-safe_div(indicator(bq.after()), 1 - bq.G_prev), bq.m))
        assert np.all(out.ZG == 1 / (before * after))
        assert out.deflator.ok and out.lmd.ok


def test_positivity_witnesses():
    sc = random_corpus(1, seed=15, require=("honest", "no_Gtilde1_Gminus_lt1", "G_positive"))[0]
    b = survival_bundle(sc.space, sc.tau)
    phi_o = D.random_phi_o(b, np.random.default_rng(0))
    assert D.positivity_witness(b, phi_o, zeros(phi_o.shape)) is None
    i = next(i for i in range(sc.space.n) if sc.tau[i] > 0)
    k = int(sc.tau[i])
    bad = zeros(phi_o.shape)
    bad[k, list(b.F.atoms(k)[b.F.atom_of(k)[i]])] = -ONE
    w = D.positivity_witness(b, phi_o, bad)
    assert w["condition"] == "phi_pr > -1" and w["k"] == k


def test_endpoint_rule_examples():
    assert D.admissible_interval([Q(2), Q(-4)]) == (Q(-1, 2), Q(1, 4))
    assert D.admissible_interval([Q(1)]) == (Q(-1), None)
    # unbounded above with s > 0: some large c violates
    assert D.atom_condition(Q(1, 2), Q(1), ONE, Q(-1), None) > Q(1, 2)
    assert D.atom_condition(Q(1, 2), Q(-1), ONE, Q(-1, 4), None) is None


def test_invalid_deflator_inputs(s1):
    Z = ones((3, 4))
    Z[0, 0] = Q(2)
    with pytest.raises(ValidationError):
        D.is_deflator(s1.space, Z, s1.price)
    with pytest.raises(ValidationError):
        D.is_deflator(s1.space, stopped(zeros((3, 4)), s1.tau), s1.price)
