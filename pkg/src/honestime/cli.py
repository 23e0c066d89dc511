"""Command line entry point: ``honestime analyze|decompose|deflate|mc|fixtures``.

Exit status is 0 when every check in the report passes, 1 when some check
fails and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus, deflators, enlargement, representation
from .mc_jumpdiff import JumpDiffusionConfig, run_suite
from .scenario_io import ScenarioError, dump_scenario, load_scenario
from .space import Rational, ValidationError, cond_expect, increments, indicator, is_martingale, stoch_integral, zeros
from .transforms import t_after, t_after_simple

SCHEMA_VERSION = 1


class Report:
    def __init__(self, command: str, scenario: str, seed: int | None):
        self.data = {"schema": SCHEMA_VERSION, "command": command, "scenario": scenario, "seed": seed, "checks": [], "findings": {}}

    def check(self, name: str, anchor: str, passed: bool, detail=None) -> None:
        entry = {"name": name, "paper_ref": anchor, "passed": bool(passed)}
        if detail is not None:
            entry["detail"] = detail
        self.data["checks"].append(entry)

    def note(self, **findings) -> None:
        self.data["findings"].update(findings)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.data["checks"])

    def finish(self) -> dict:
        self.data["passed"] = self.passed
        return _jsonable(self.data)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, float | np.floating):
        return float(x)
    if isinstance(x, Rational):
        q = Rational(x)
        return int(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"
    return x if x is None or isinstance(x, str) else str(x)


def _scenario(args) -> corpus.Scenario:
    if bool(args.fixture) == bool(args.scenario):
        raise ScenarioError("give exactly one of --fixture or --scenario")
    if args.fixture:
        try:
            return corpus.fixture(args.fixture)
        except KeyError as exc:
            raise ScenarioError(str(exc.args[0]), "--fixture") from None
    return load_scenario(args.scenario)


def _basis_martingales(space):
    """One 𝔽-martingale per terminal atom: E[I_A | 𝓕_n] - P(A)."""
    F = space.filtration
    atoms = F.atoms(space.horizon)
    xi = zeros((len(atoms), space.n))
    for j, atom in enumerate(atoms):
        xi[j, list(atom)] = 1
    out = np.empty((len(atoms), space.horizon + 1, space.n), dtype=object)
    for n in range(space.horizon + 1):
        out[:, n, :] = cond_expect(space, xi, n)
    return out - out[:, :1, :]


def cmd_analyze(sc: corpus.Scenario, args, rep: Report) -> None:
    space, tau = sc.space, sc.tau
    b = enlargement.survival_bundle(space, tau)
    flags = enlargement.check_assumptions(space, tau, b)
    honesty = enlargement.is_honest(space, tau)
    rep.note(
        honest=honesty.honest,
        honesty=honesty.describe(space),
        flags=flags.as_dict(),
        condition_no_gtilde_one_above_gminus=flags.no_Gtilde1_Gminus_lt1,
        flag_witnesses=flags.witnesses,
        G=b.G,
        Gtilde=b.Gtilde,
        m=b.m,
        NG=b.NG,
        enlarged_atoms=[[space.labels(a) for a in b.GF.atoms(n)] for n in range(space.horizon + 1)],
    )
    rep.check("m_is_f_martingale", "survival-martingale-m", is_martingale(space, b.m).ok)
    rep.check("NG_is_g_martingale", "default-martingale-NG", is_martingale(space, b.NG, b.GF).ok)
    jumps = increments(b.DoF)
    jumps[0] = b.DoF[0]
    rep.check("gtilde_equals_g_plus_dual_optional_jump", "survival-processes-G-Gtilde", bool(np.all(b.Gtilde == b.G + jumps)))
    rep.check("honesty_iff_gtilde_one_at_tau", "honest-time-gtilde-at-tau", enlargement.gtilde_at_tau_is_one(b) == honesty.honest)
    if honesty.honest:
        ids = enlargement.xg_identity(b)
        rep.check("after_tau_dual_optional_vanishes", "after-tau-dual-optional-vanishes", ids["d0f"].ok, ids["d0f"].violation)
        rep.check("survival_ratio_is_m_exponential", "survival-ratio-exponential", ids["gtm"].ok, ids["gtm"].violation)
        basis = _basis_martingales(space)
        rep.check("after_tau_operator_g_martingale", "after-tau-operator", all(is_martingale(space, t_after(M, b), b.GF).ok for M in basis))
        if flags.no_Gtilde1_Gminus_lt1:
            rep.check("after_tau_operator_simplified_form", "after-tau-operator-simplified", all(np.all(t_after(M, b) == t_after_simple(M, b)) for M in basis))


def cmd_decompose(sc: corpus.Scenario, args, rep: Report) -> None:
    space, tau = sc.space, sc.tau
    honesty = enlargement.is_honest(space, tau)
    rep.check("honest", "honest-time", honesty.honest, None if honesty.honest else honesty.describe(space)["witness"])
    if not honesty.honest:
        return
    b = enlargement.survival_bundle(space, tau)
    flags = enlargement.check_assumptions(space, tau, b)
    rng = np.random.default_rng(args.seed)
    MG = representation.random_g_martingales(b, rng, args.random_martingales)
    try:
        dec = representation.decompose_full(MG, b)
    except representation.InfeasibleDecomposition as exc:
        rep.check("decomposition_exists", "general-representation", False, str(exc))
        return
    checks = representation.check_decomposition(MG, dec, b)
    rep.check("roundtrip_exact", "general-representation", checks.pop("reconstructs"))
    for name, ok in checks.items():
        rep.check(name, "general-representation-components", ok)
    MF = representation.after_tau_component(MG, b)
    ids = {k: True for k in ("sum_over_one_minus_gtilde", "sum_of_t_after_over_one_minus_gminus", "no_jump_on_gtilde_one")}
    for j in range(MG.shape[0]):
        for k, ok in representation.discrete_after_tau_identities(MG[j], MF[j], b).items():
            ids[k] &= ok
    for name, ok in ids.items():
        rep.check(name, "discrete-after-tau-representation", ok)
    nullity = representation.uniqueness_check(b)
    rep.note(flags=flags.as_dict(), uniqueness_nullity=nullity, random_martingales=int(MG.shape[0]))
    if flags.all_true:
        rep.check("unique_parametrization", "representation-uniqueness", nullity == 0, {"nullity": nullity})


def cmd_deflate(sc: corpus.Scenario, args, rep: Report) -> None:
    space, tau = sc.space, sc.tau
    if sc.price is None:
        raise ScenarioError("the deflate command needs a price", "$.price")
    S = sc.price
    b = enlargement.survival_bundle(space, tau)
    flags = enlargement.check_assumptions(space, tau, b)
    rep.note(flags=flags.as_dict())
    verdicts = []
    for j, Z in enumerate(sc.candidates):
        try:
            r = deflators.classify(space, Z, S)
            verdicts.append({"candidate": j, "verdict": r.verdict, "witness": r.witness})
        except ValidationError as exc:
            verdicts.append({"candidate": j, "verdict": "invalid", "reason": str(exc)})
    rep.note(candidates=verdicts)
    if not (flags.honest and flags.no_Gtilde1_Gminus_lt1):
        rep.note(transfer="not applicable: needs an honest time and an empty {Gtilde = 1 > G_-}")
        return
    hat = deflators.hat_model(b, S)
    rep.check("hat_density_f_martingale", "censored-measure-density", is_martingale(space, hat.Zhat).ok)
    rep.check("hat_density_is_m_exponential", "censored-measure-density", hat.exponential_matches)
    rng = np.random.default_rng(args.seed)
    zs = [np.asarray(Z, dtype=object) for Z in sc.candidates]
    if not zs:
        zs = [deflators.sample_deflator(b, hat, rng) for _ in range(args.samples)]
    transfers = []
    for j, Z in enumerate(zs):
        try:
            tr = deflators.transfer_after(Z, b, S, hat)
        except ValidationError as exc:
            transfers.append({"candidate": j, "error": str(exc)})
            continue
        W, back = deflators.recover_after(tr.ZG, b, S, hat)
        charged = hat.Qhat > 0
        roundtrip = bool(np.all((W == Z)[:, charged]))
        transfers.append({"candidate": j, "input_deflator": tr.input_report.ok, "output_deflator": tr.output_report.ok, "roundtrip": roundtrip})
        rep.check(f"transfer_{j}_equivalent", "deflator-transfer-after-tau", tr.consistent, tr.transported)
        rep.check(f"transfer_{j}_recovers", "deflator-transfer-after-tau", roundtrip and back.ok == tr.input_report.ok)
    rep.note(transfers=transfers)
    if flags.G_positive:
        Sa = stoch_integral(indicator(b.G_prev < 1), S)
        try:
            dens_b = deflators.martingale_density(space, S)
            dens_a = deflators.martingale_density(space, Sa)
        except ValidationError as exc:
            rep.note(assembly=f"not applicable: {exc}")
            return
        phi_o = deflators.random_phi_o(b, rng)
        phi_pr = zeros(phi_o.shape)
        out = deflators.assemble_general(dens_b, dens_a, phi_o, phi_pr, b, S)
        rep.check("assembled_lmd", "general-deflator-assembly", out.lmd.ok, out.lmd.witness)
        rep.check("assembled_deflator", "general-deflator-assembly", out.deflator.ok, out.deflator.witness)
        rep.note(assembly_inputs=out.inputs)


def cmd_mc(args, rep: Report) -> None:
    cfg = JumpDiffusionConfig(
        grid_steps=args.steps,
        n_paths=args.paths,
        seed=args.seed,
        max_sampling=args.max_sampling,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise ScenarioError(str(exc), "--mc-config") from None
    res = run_suite(cfg, n_outer=args.outer)
    anchors = {
        "reflection_G_validated": "jump-diffusion-honest-time",
        "t_a_W_zero_mean": "jump-diffusion-representation",
        "t_a_NF_zero_mean": "jump-diffusion-representation",
        "assembled_zero_mean": "jump-diffusion-representation",
        "negative_control_no_bracket_fails": "after-tau-operator",
        "deflator_supermartingale": "jump-diffusion-deflator",
        "negative_control_wrong_psi_fails": "jump-diffusion-deflator",
        "exclusion_rate_below_half_percent": "jump-diffusion-representation",
        "price_positive": "jump-diffusion-price",
    }
    for name, ok in res.pop("checks").items():
        rep.check(name, anchors[name], ok)
    res.pop("passed")
    rep.note(**res)


def cmd_fixtures(args, rep: Report) -> None:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in corpus.FIXTURES:
        dump_scenario(corpus.fixture(name), out / f"{name}.json")
        written.append(f"{name}.json")
    for sc in corpus.random_corpus(args.count, seed=args.seed):
        dump_scenario(sc, out / f"{sc.name}.json")
        written.append(f"{sc.name}.json")
    rep.note(directory=str(out), files=written)


def _render_text(report: dict) -> str:
    lines = [f"{report['command']} {report['scenario']}: {'PASS' if report['passed'] else 'FAIL'}"]
    for c in report["checks"]:
        lines.append(f"  {'PASS' if c['passed'] else 'FAIL'} {c['name']} [{c['paper_ref']}]")
    for key, val in report["findings"].items():
        if isinstance(val, (dict, list)) and len(json.dumps(val)) > 200:
            continue
        lines.append(f"  {key}: {json.dumps(val)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="honestime", description="Exact and Monte Carlo checks for honest-time enlargements.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--fixture", choices=corpus.FIXTURES)
            sp.add_argument("--scenario", metavar="PATH")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--format", choices=("json", "text"), default="json")

    common(sub.add_parser("analyze", help="survival processes, assumption flags and honesty"))
    sp = sub.add_parser("decompose", help="representation roundtrip and uniqueness")
    common(sp)
    sp.add_argument("--random-martingales", type=int, default=100)
    sp = sub.add_parser("deflate", help="deflator verdicts and transfer after tau")
    common(sp)
    sp.add_argument("--samples", type=int, default=5, help="sampled deflators when the scenario has no candidates")
    sp = sub.add_parser("mc", help="jump-diffusion Monte Carlo suite")
    common(sp, scenario=False)
    sp.set_defaults(seed=JumpDiffusionConfig.seed)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--steps", type=int, default=256)
    sp.add_argument("--outer", type=int, default=10_000, help="outer paths of the nested G validation")
    sp.add_argument("--max-sampling", choices=("bridge", "grid"), default="bridge")
    sp = sub.add_parser("fixtures", help="write S1, S2, S3 and a random corpus as JSON")
    common(sp, scenario=False)
    sp.add_argument("--count", type=int, default=10)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        if args.command in ("mc", "fixtures"):
            rep = Report(args.command, args.command, args.seed)
            (cmd_mc if args.command == "mc" else cmd_fixtures)(args, rep)
        else:
            sc = _scenario(args)
            rep = Report(args.command, sc.name, args.seed)
            {"analyze": cmd_analyze, "decompose": cmd_decompose, "deflate": cmd_deflate}[args.command](sc, args, rep)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = rep.finish()
    text = json.dumps(report, indent=1) if args.format == "json" else _render_text(report)
    if args.out and args.command != "fixtures":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}-{report['scenario']}.{args.format if args.format == 'json' else 'txt'}").write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0 if report["passed"] else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
