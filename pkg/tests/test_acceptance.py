"""The six acceptance criteria, each printing one PASS/FAIL line."""

import time

import numpy as np
import pytest
from conftest import basis_martingales, random_adapted

from honestime import deflators as D
from honestime import representation as R
from honestime.corpus import fixture, has_live_after_region, random_corpus
from honestime.enlargement import (
    check_assumptions,
    d0f_identity,
    g2f_compensator_identity,
    is_honest,
    survival_bundle,
    xg_identity,
)
from honestime.mc_jumpdiff import JumpDiffusionConfig, run_suite
from honestime.space import (
    ONE,
    Rational,
    ZERO,
    cumulate,
    increments,
    is_martingale,
    quadratic_covariation,
    stoch_exponential,
    stoch_integral,
    zeros,
)
from honestime.transforms import bracket_identities, m_hat_after, t_after, t_before


def report(capsys, number, title, ok, detail=""):
    with capsys.disabled():
        print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {title} {detail}".rstrip())


@pytest.fixture(scope="module")
def scenarios(corpus200):
    return [fixture("S1"), fixture("S2"), *corpus200]


def _previous(X):
    out = X.copy()
    out[..., 1:, :] = X[..., :-1, :]
    return out


def test_criterion_1_exact_martingale_suite(scenarios, capsys):
    start = time.perf_counter()
    failures = []
    for sc in scenarios:
        b = survival_bundle(sc.space, sc.tau)
        space = sc.space
        if not is_martingale(space, b.m).ok:
            failures.append((sc.name, "m"))
        if not is_martingale(space, b.NG, b.GF).ok:
            failures.append((sc.name, "NG"))
        for M in basis_martingales(space):
            for name, op in (("after", t_after), ("before", t_before), ("hat", m_hat_after)):
                if not is_martingale(space, op(M, b), b.GF).ok:
                    failures.append((sc.name, name))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    report(capsys, 1, "exact martingale suite", ok, f"({len(scenarios)} scenarios, {elapsed:.1f}s, failures={failures[:3]})")
    assert ok


def test_criterion_2_exact_identities(scenarios, capsys):
    failures = []
    bracket_cases = 0
    for sc in scenarios:
        space = sc.space
        rng = np.random.default_rng(sc.seed or 0)
        b = survival_bundle(space, sc.tau)
        flags = check_assumptions(space, sc.tau, b)
        ids = xg_identity(b)
        if not (ids["gtm"].ok and ids["d0f"].ok):
            failures.append((sc.name, "gtm/d0f"))
        V = cumulate(abs(increments(random_adapted(space, rng))))
        if not g2f_compensator_identity(b, V).ok:
            failures.append((sc.name, "g2f"))
        X, Y = random_adapted(space, rng), random_adapted(space, rng)
        ibp = X * Y - X[:1] * Y[:1]
        rhs = stoch_integral(_previous(X), Y) + stoch_integral(_previous(Y), X) + quadratic_covariation(X, Y)
        if not np.all(ibp == rhs):
            failures.append((sc.name, "integration by parts"))
        A, B = X - X[:1], Y - Y[:1]
        if not np.all(stoch_exponential(A) * stoch_exponential(B) == stoch_exponential(A + B + quadratic_covariation(A, B))):
            failures.append((sc.name, "yor"))
        if flags.no_Gtilde1_Gminus_lt1:
            bracket_cases += 1
            basis = basis_martingales(space)
            for j in range(min(len(basis), 3)):
                res = bracket_identities(basis[j], basis[-1 - j], b)
                if not all(r.ok for r in res.values()):
                    failures.append((sc.name, "bracket identities"))
    s3 = fixture("S3")
    b3 = survival_bundle(s3.space, s3.tau)
    d0f = d0f_identity(b3)
    wit = is_honest(s3.space, s3.tau).describe(s3.space)
    s3_ok = (not d0f.ok) and wit == {"honest": False, "witness": {"n": 3, "atom": ["a", "b"], "outcomes": ["a", "b"], "tau": [1, 2]}}
    ok = not failures and s3_ok and bracket_cases > 0
    report(capsys, 2, "exact identities", ok, f"(bracket identities on {bracket_cases} scenarios, S3 witness={wit.get('witness')})")
    assert ok


def test_criterion_3_representation_roundtrip(scenarios, capsys):
    start = time.perf_counter()
    failures = []
    unique_checked = 0
    for sc in scenarios:
        b = survival_bundle(sc.space, sc.tau)
        MG = R.random_g_martingales(b, np.random.default_rng(sc.seed or 0), 100)
        dec = R.decompose_full(MG, b)
        checks = R.check_decomposition(MG, dec, b)
        if not all(checks.values()):
            failures.append((sc.name, [k for k, v in checks.items() if not v]))
        MF = R.after_tau_component(MG, b)
        for j in range(len(MG)):
            if not all(R.discrete_after_tau_identities(MG[j], MF[j], b).values()):
                failures.append((sc.name, "after-tau identities"))
                break
        if check_assumptions(sc.space, sc.tau, b).all_true:
            unique_checked += 1
            if R.uniqueness_check(b) != 0:
                failures.append((sc.name, "uniqueness"))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 300
    report(capsys, 3, "representation roundtrip", ok, f"({len(scenarios)}x100 martingales, uniqueness on {unique_checked}, {elapsed:.1f}s)")
    assert ok


def _grid_violation(weights, z, dx, z_prev):
    """Brute-force scan: is there an admissible c with E[z(1 + c dx)] > z_prev?"""
    grid = {Rational(j, 16) for j in range(-1600, 1601)}
    grid |= {s * Rational(10) ** p for p in range(13) for s in (-1, 1)}
    grid |= {-ONE / v for v in dx if v != 0}
    mass = sum(weights, ZERO)
    for c in grid:
        if any(c * v < -1 for v in dx):
            continue
        lhs = sum((w * zi * (1 + c * v) for w, zi, v in zip(weights, z, dx)), ZERO) / mass
        if lhs > z_prev:
            return True
    return False


def _endpoint_oracle_agreement(n_triples=1000, seed=4):
    rng = np.random.default_rng(seed)
    disagreements = 0
    for _ in range(n_triples):
        size = int(rng.integers(1, 5))
        weights = [Rational(int(rng.integers(1, 6))) for _ in range(size)]
        z = [Rational(int(rng.integers(1, 12)), int(rng.integers(4, 9))) for _ in range(size)]
        mode = rng.integers(4)
        signs = {0: [1, -1], 1: [1], 2: [-1], 3: [0]}[int(mode)]
        dx = [int(rng.choice(signs)) * Rational(int(rng.integers(1, 9)), int(rng.integers(1, 5))) for _ in range(size)]
        z_prev = Rational(int(rng.integers(2, 12)), int(rng.integers(4, 9)))
        mass = sum(weights, ZERO)
        e = sum((w * zi for w, zi in zip(weights, z)), ZERO) / mass
        s = sum((w * zi * v for w, zi, v in zip(weights, z, dx)), ZERO) / mass
        lo, hi = D.admissible_interval(dx)
        fast = D.atom_condition(e, s, z_prev, lo, hi) is not None
        if fast != _grid_violation(weights, z, dx, z_prev):
            disagreements += 1
    return disagreements


def test_criterion_4_deflator_transfer(capsys):
    corpus = random_corpus(50, seed=11, require=("honest", "no_Gtilde1_Gminus_lt1"), accept=has_live_after_region)
    failures = []
    sampled = 0
    for sc in corpus:
        b = survival_bundle(sc.space, sc.tau)
        hat = D.hat_model(b, sc.price)
        if not is_martingale(sc.space, hat.Zhat).ok:
            failures.append((sc.name, "Zhat"))
        rng = np.random.default_rng(sc.seed)
        kept = 0
        while kept < 20:
            Z = D.sample_deflator(b, hat, rng, violate=bool(rng.random() < 0.25))
            tr = D.transfer_after(Z, b, sc.price, hat)
            if not tr.consistent:
                failures.append((sc.name, "transfer"))
            if tr.input_report.ok:
                kept += 1
            elif tr.transported is None or (tr.transported["lhs"], tr.transported["rhs"]) != (tr.input_report.witness["lhs"], tr.input_report.witness["rhs"]):
                failures.append((sc.name, "witness transport"))
            W, back = D.recover_after(tr.ZG, b, sc.price, hat)
            if not np.all((W == Z)[:, hat.Qhat > 0]) or back.ok != tr.input_report.ok:
                failures.append((sc.name, "recovery"))
        sampled += kept
    disagreements = _endpoint_oracle_agreement()
    ok = not failures and disagreements == 0
    report(capsys, 4, "deflator transfer equivalence", ok, f"({len(corpus)} scenarios, {sampled} deflators, oracle disagreements={disagreements})")
    assert ok


def test_criterion_5_general_assembly(capsys):
    corpus = random_corpus(20, seed=21, require=("honest", "no_Gtilde1_Gminus_lt1", "G_positive"))
    failures = []
    rejected = 0
    for sc in corpus:
        b = survival_bundle(sc.space, sc.tau)
        S = sc.price
        Sa = stoch_integral(np.where(b.G_prev < 1, ONE, ZERO), S)
        ZFb, ZFa = D.martingale_density(sc.space, S), D.martingale_density(sc.space, Sa)
        rng = np.random.default_rng(sc.seed)
        phi_o, phi_pr = D.random_phi_o(b, rng), zeros(b.G.shape)
        out = D.assemble_general(ZFb, ZFa, phi_o, phi_pr, b, S)
        if not (out.inputs["ZFb_lmd"] and out.inputs["ZFa_lmd"] and out.lmd.ok and out.deflator.ok):
            failures.append((sc.name, out.inputs, out.lmd.witness))
        cases = []
        i = next(i for i in range(sc.space.n) if b.tau[i] > 0)
        k = int(b.tau[i])
        bad_pr = phi_pr.copy()
        bad_pr[k, list(b.F.atoms(k)[b.F.atom_of(k)[i]])] = -ONE
        cases.append((phi_o, bad_pr, "phi_pr > -1", i))
        i = next((i for i in range(sc.space.n) if b.tau[i] > 0 and b.G[b.tau[i], i] > 0), None)
        if i is not None:
            k = int(b.tau[i])
            bad_o = phi_o.copy()
            bad_o[k, list(b.F.atoms(k)[b.F.atom_of(k)[i]])] = -b.Gtilde[k, i] / b.G[k, i]
            cases.append((bad_o, phi_pr, "phi_o > -Gtilde/G", i))
        for po, pp, cond, i in cases:
            k = int(b.tau[i])
            atom = b.F.atoms(k)[b.F.atom_of(k)[i]]
            try:
                D.assemble_general(ZFb, ZFa, po, pp, b, S)
                failures.append((sc.name, "accepted", cond))
            except D.PositivityViolation as exc:
                w = exc.witness
                first = min(j for j in atom if b.tau[j] == k)
                if w["condition"] != cond or w["k"] != k or w["outcome"] != sc.space.outcomes[first]:
                    failures.append((sc.name, "witness", w))
                rejected += 1
    ok = not failures
    report(capsys, 5, "general assembly", ok, f"({len(corpus)} scenarios, {rejected} boundary inputs rejected)")
    assert ok


@pytest.mark.slow
def test_criterion_6_monte_carlo_suite(capsys):
    cfg = JumpDiffusionConfig()
    assert (cfg.n_paths, cfg.grid_steps) == (100_000, 256)
    res = run_suite(cfg)
    ok = res["passed"] and res["seconds"] < 120
    z_w = max(abs(c["z"]) for c in res["martingale_tests"]["t_a_W"]["checkpoints"])
    z_n = max(abs(c["z"]) for c in res["martingale_tests"]["t_a_NF"]["checkpoints"])
    report(
        capsys,
        6,
        "Monte Carlo suite",
        ok,
        f"(max|z| W={z_w:.2f} NF={z_n:.2f}, G validation z={res['g_validation']['mean_deviation'] / res['g_validation']['se']:.2f}, "
        f"{res['seconds']:.1f}s, checks={ {k: v for k, v in res['checks'].items() if not v} or 'all true'})",
    )
    assert ok
