"""Deflator and local-martingale-deflator checks for a scalar price, and the
transfer of deflators between the base and the enlarged filtration.

Supermartingale check for Z 𝓔(φ ⊙ X) over all admissible φ
-----------------------------------------------------------
On an atom B of time k-1, φ_k = c is a constant and 𝓔(φ ⊙ X)_{k-1} a
nonnegative constant, so the condition is

    e + c s ≤ Z_{k-1}(B),   e = E_Q[Z_k | B],  s = E_Q[Z_k ΔX_k | B],

for every c with c ΔX_k ≥ -1 on the Q-charged outcomes of B.  That set is
an interval [lo, hi] with lo = -1/max ΔX⁺ and hi = 1/max ΔX⁻ (infinite when
the corresponding side is empty).  The left side is affine in c, so it is
enough to test c = 0, the finite endpoints, and the sign of s at an infinite
end.

Local martingale deflators
--------------------------
Z is a local martingale deflator when Z and Z(φ ⊙ X) are martingales for
some predictable φ in (0, 1].  In finite discrete time local martingales are
martingales, and Z(φ ⊙ X) is a martingale exactly when φ_k s = 0 on every
atom.  Since φ_k > 0 this is s = 0, independent of the choice of φ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .enlargement import SurvivalBundle, check_assumptions, is_honest
from .space import (
    ONE,
    ZERO,
    Filtration,
    Rational,
    ValidationError,
    first_nonadapted,
    increments,
    indicator,
    ones,
    safe_div,
    stoch_exponential,
    stoch_integral,
    stopped,
    zeros,
)


@dataclass
class DeflatorReport:
    verdict: str  # deflator | lmd | both | neither
    witness: dict | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.witness is None

    def __bool__(self) -> bool:
        return self.ok


def admissible_interval(dx) -> tuple:
    """[lo, hi] of c with c·dx ≥ -1 for every dx; None marks an infinite end."""
    pos = [v for v in dx if v > 0]
    neg = [-v for v in dx if v < 0]
    lo = -ONE / max(pos) if pos else None
    hi = ONE / max(neg) if neg else None
    return lo, hi


def atom_condition(e, s, z_prev, lo, hi):
    """First c in the admissible interval with e + c·s > z_prev, or None."""
    if e > z_prev:
        return ZERO
    for c in (lo, hi):
        if c is not None and e + c * s > z_prev:
            return c
    if hi is None and s > 0:
        return max(ZERO, (z_prev - e) / s) + 1
    if lo is None and s < 0:
        return min(ZERO, (z_prev - e) / s) - 1
    return None


def _prepare(space, Z, X, filtration, weights):
    filt: Filtration = filtration or space.filtration
    w = space.probs if weights is None else np.asarray(weights, dtype=object)
    Z = np.asarray(Z, dtype=object)
    X = np.asarray(X, dtype=object)
    if np.any(Z[0] != 1):
        raise ValidationError("a deflator must start at 1")
    if np.any(Z <= 0):
        raise ValidationError("a deflator must be strictly positive")
    if any(v < 0 for v in w) or sum(w, ZERO) != 1:
        raise ValidationError("measure weights must be nonnegative and sum to 1")
    for name, proc in (("Z", Z), ("X", X)):
        bad = first_nonadapted(filt, proc)
        if bad is not None:
            raise ValidationError(f"{name} is not adapted at time {bad[0]} on atom {bad[1]}")
    return filt, w, Z, X


def _atom_stats(filt, w, Z, dX, k, atom):
    live = [i for i in atom if w[i] != 0]
    if not live:
        return None
    mass = sum((w[i] for i in live), ZERO)
    e = sum((w[i] * Z[k, i] for i in live), ZERO) / mass
    s = sum((w[i] * Z[k, i] * dX[k, i] for i in live), ZERO) / mass
    return live, e, s


def check_at(space, Z, X, k, atom, c, filtration=None, weights=None):
    """(lhs, rhs) = (E_Q[Z_k(1 + c ΔX_k) | atom], Z_{k-1}) on one atom."""
    filt, w, Z, X = _prepare(space, Z, X, filtration, weights)
    live, e, s = _atom_stats(filt, w, Z, increments(X), k, atom)
    return e + c * s, Z[k - 1, live[0]]


def is_deflator(space, Z, X, filtration=None, weights=None) -> DeflatorReport:
    filt, w, Z, X = _prepare(space, Z, X, filtration, weights)
    dX = increments(X)
    diag = []
    for k in range(1, Z.shape[0]):
        for a, atom in enumerate(filt.atoms(k - 1)):
            st = _atom_stats(filt, w, Z, dX, k, atom)
            if st is None:
                continue
            live, e, s = st
            z_prev = Z[k - 1, live[0]]
            lo, hi = admissible_interval([dX[k, i] for i in live])
            diag.append({"k": k, "atom": list(atom), "lo": lo, "hi": hi, "e": e, "s": s})
            c = atom_condition(e, s, z_prev, lo, hi)
            if c is not None:
                wit = {"kind": "supermartingale", "k": k, "atom": list(atom), "c": c, "lhs": e + c * s, "rhs": z_prev}
                return DeflatorReport("neither", wit, diag)
    return DeflatorReport("deflator", None, diag)


def is_lmd(space, Z, X, filtration=None, weights=None) -> DeflatorReport:
    filt, w, Z, X = _prepare(space, Z, X, filtration, weights)
    dX = increments(X)
    for k in range(1, Z.shape[0]):
        for a, atom in enumerate(filt.atoms(k - 1)):
            st = _atom_stats(filt, w, Z, dX, k, atom)
            if st is None:
                continue
            live, e, s = st
            z_prev = Z[k - 1, live[0]]
            if e != z_prev:
                return DeflatorReport("neither", {"kind": "martingale", "k": k, "atom": list(atom), "c": ZERO, "lhs": e, "rhs": z_prev})
            if s != 0:
                return DeflatorReport("neither", {"kind": "orthogonality", "k": k, "atom": list(atom), "c": ONE, "lhs": s, "rhs": ZERO})
    return DeflatorReport("lmd")


def classify(space, Z, X, filtration=None, weights=None) -> DeflatorReport:
    d = is_deflator(space, Z, X, filtration, weights)
    m = is_lmd(space, Z, X, filtration, weights)
    verdict = {(True, True): "both", (True, False): "deflator", (False, True): "lmd", (False, False): "neither"}[(d.ok, m.ok)]
    return DeflatorReport(verdict, d.witness or m.witness, d.diagnostics)


def martingale_density(space, X, filtration=None, weights=None) -> np.ndarray:
    """Density process of a measure equivalent to ``weights`` under which X is a martingale.

    Per atom with children x_j and conditional weights p_j, the ratio is
    proportional to Σ⁻ on up-moves, Σ⁺ on down-moves and their mean on flat
    ones, where Σ± = Σ p_j x_j^±.
    """
    filt = filtration or space.filtration
    w = space.probs if weights is None else weights
    X = np.asarray(X, dtype=object)
    dX = increments(X)
    Z = zeros(X.shape)
    Z[0] = ONE
    for k in range(1, X.shape[0]):
        Z[k] = Z[k - 1]
        for a, atom in enumerate(filt.atoms(k - 1)):
            kids = [filt.atoms(k)[c] for c in filt.children(k - 1, a)]
            mass = [sum((w[i] for i in c), ZERO) for c in kids]
            x = [dX[k, c[0]] for c in kids]
            up = sum((m * v for m, v in zip(mass, x) if v > 0), ZERO)
            down = sum((-m * v for m, v in zip(mass, x) if v < 0), ZERO)
            if up == 0 and down == 0:
                continue
            if up == 0 or down == 0:
                raise ValidationError(f"no martingale measure: one-sided move at time {k} on atom {list(atom)}")
            raw = [down if v > 0 else up if v < 0 else (up + down) / 2 for v in x]
            norm = sum((m * r for m, r in zip(mass, raw)), ZERO) / sum(mass, ZERO)
            for c, r in zip(kids, raw):
                Z[k, list(c)] = Z[k - 1, list(c)] * (r / norm)
    return Z


# --- the censored model on the base filtration ------------------------------


@dataclass
class HatModel:
    Zhat: np.ndarray
    Qhat: np.ndarray
    Shat: np.ndarray
    exponential_matches: bool


def _require_flags(bundle: SurvivalBundle, names) -> None:
    flags = check_assumptions(bundle.space, bundle.tau, bundle)
    d = flags.as_dict()
    missing = [n for n in names if not d[n]]
    if missing:
        raise ValidationError(f"assumption flags fail: {missing} ({flags.witnesses})")


def hat_model(bundle: SurvivalBundle, S) -> HatModel:
    """Ẑ_n = Π ((1-G̃_k)/(1-G_{k-1}) on {G_{k-1}<1}, 1 elsewhere), Q̂ = Ẑ_T·P, Ŝ = I{G_-<1} ⊙ S."""
    _require_flags(bundle, ("honest", "no_Gtilde1_Gminus_lt1"))
    S = np.asarray(S, dtype=object)
    live = bundle.G_prev < 1
    factor = ones(live.shape)
    factor[live] = (1 - bundle.Gtilde[live]) / (1 - bundle.G_prev[live])
    factor[0] = ONE
    Zhat = np.cumprod(factor, axis=0)
    Qhat = Zhat[-1] * bundle.space.probs
    Shat = stoch_integral(indicator(live), S)
    H = -safe_div(indicator(live), 1 - bundle.G_prev)
    expo = stoch_exponential(stoch_integral(H, bundle.m))
    return HatModel(Zhat, Qhat, Shat, bool(np.all(expo == Zhat)))


def after_tau_price(bundle: SurvivalBundle, S) -> np.ndarray:
    S = np.asarray(S, dtype=object)
    return S - stopped(S, bundle.tau)


@dataclass
class TransferReport:
    ZG: np.ndarray
    input_report: DeflatorReport
    output_report: DeflatorReport
    stopped_is_one: bool
    transported: dict | None = None

    @property
    def consistent(self) -> bool:
        return self.input_report.ok == self.output_report.ok and self.stopped_is_one


def transfer_after(Z, bundle: SurvivalBundle, S, hat: HatModel | None = None) -> TransferReport:
    """Z^𝔾 = Z/Z^τ, with the deflator verdicts on both sides.

    When Z fails on a base atom B at time k, the same c is evaluated on the
    enlarged atom B ∩ {τ < k}; both sides give the same (lhs, rhs).
    """
    hat = hat or hat_model(bundle, S)
    space = bundle.space
    Z = np.asarray(Z, dtype=object)
    inp = is_deflator(space, Z, hat.Shat, None, hat.Qhat)
    ZG = Z / stopped(Z, bundle.tau)
    X = after_tau_price(bundle, S)
    out = is_deflator(space, ZG, X, bundle.GF, None)
    transported = None
    if inp.witness is not None:
        k, atom, c = inp.witness["k"], inp.witness["atom"], inp.witness["c"]
        cell = tuple(i for i in atom if bundle.tau[i] < k)
        if cell:
            lhs, rhs = check_at(space, ZG, X, k, cell, c, bundle.GF)
            transported = {"k": k, "atom": list(cell), "c": c, "lhs": lhs, "rhs": rhs}
    stopped_one = bool(np.all(stopped(ZG, bundle.tau) == 1))
    return TransferReport(ZG, inp, out, stopped_one, transported)


def recover_after(W, bundle: SurvivalBundle, S, hat: HatModel | None = None):
    """Base-filtration Z with Z_k/Z_{k-1} = W_k/W_{k-1} on {τ < k}, and ratio 1 where G_{k-1} = 1.

    Returns (Z, report of is_deflator(Z, Ŝ, 𝔽, Q̂)).
    """
    hat = hat or hat_model(bundle, S)
    W = np.asarray(W, dtype=object)
    if np.any(stopped(W, bundle.tau) != 1):
        raise ValidationError("W must equal 1 up to τ")
    if not is_honest(bundle.space, bundle.tau):
        raise ValidationError("τ must be honest")
    F = bundle.F
    Z = zeros(W.shape)
    Z[0] = ONE
    for k in range(1, bundle.T + 1):
        Z[k] = Z[k - 1]
        for a, atom in enumerate(F.atoms(k - 1)):
            if bundle.G[k - 1, atom[0]] == 1:
                continue
            for c in F.children(k - 1, a):
                cell = F.atoms(k)[c]
                dead = [i for i in cell if bundle.tau[i] < k]
                if dead:
                    r = W[k, dead[0]] / W[k - 1, dead[0]]
                    Z[k, list(cell)] = Z[k - 1, cell[0]] * r
    return Z, is_deflator(bundle.space, Z, hat.Shat, None, hat.Qhat)


def sample_deflator(bundle: SurvivalBundle, hat: HatModel, rng: np.random.Generator, *, tight: float = 0.3, violate: bool = False) -> np.ndarray:
    """Random deflator for (Ŝ, Q̂) on the base filtration, normalized to ratio 1 where G_{k-1} = 1.

    Each atom draws positive ratios r and scales them by λ so that
    e = λE[r] and s = λE[r ΔŜ] satisfy -(1-e)·maxΔŜ⁺ ≤ s ≤ (1-e)·max|ΔŜ⁻|.
    With ``violate=True`` one atom is pushed just past its bound.
    """
    F = bundle.F
    dS = increments(hat.Shat)
    w = hat.Qhat
    Z = zeros(hat.Shat.shape)
    Z[0] = ONE
    spots = [(k, a) for k in range(1, bundle.T + 1) for a, atom in enumerate(F.atoms(k - 1)) if bundle.G[k - 1, atom[0]] < 1]
    if violate and not spots:
        raise ValidationError("no atom with G_{k-1} < 1 to push past its bound")
    broken = spots[int(rng.integers(len(spots)))] if violate else None
    for k in range(1, bundle.T + 1):
        Z[k] = Z[k - 1]
        for a, atom in enumerate(F.atoms(k - 1)):
            if bundle.G[k - 1, atom[0]] == 1:
                continue
            kids = [F.atoms(k)[c] for c in F.children(k - 1, a)]
            mass = [sum((w[i] for i in c), ZERO) for c in kids]
            total = sum(mass, ZERO)
            r0 = [Rational(int(rng.integers(1, 10)), int(rng.integers(1, 10))) for _ in kids]
            if total == 0:
                scale = ONE
            else:
                q = [m / total for m in mass]
                x = [dS[k, c[0]] for c in kids]
                e0 = sum((qi * r for qi, r in zip(q, r0)), ZERO)
                s0 = sum((qi * r * xi for qi, r, xi in zip(q, r0, x)), ZERO)
                up = max([xi for qi, xi in zip(q, x) if qi > 0 and xi > 0], default=ZERO)
                down = max([-xi for qi, xi in zip(q, x) if qi > 0 and xi < 0], default=ZERO)
                bound = ONE / e0
                if s0 > 0:
                    if down == 0:
                        raise ValidationError(f"no deflator: increments are nonnegative at time {k} on atom {list(atom)}")
                    bound = min(bound, down / (s0 + e0 * down))
                elif s0 < 0:
                    if up == 0:
                        raise ValidationError(f"no deflator: increments are nonpositive at time {k} on atom {list(atom)}")
                    bound = min(bound, up / (-s0 + e0 * up))
                if broken == (k, a):
                    scale = bound * Rational(11, 10)
                elif rng.random() < tight:
                    scale = bound
                else:
                    scale = bound * Rational(int(rng.integers(1, 20)), 20)
            for c, r in zip(kids, r0):
                Z[k, list(c)] = Z[k - 1, c[0]] * r * scale
    return Z


# --- assembly on the full enlarged filtration --------------------------------


class PositivityViolation(ValidationError):
    def __init__(self, witness: dict):
        self.witness = witness
        super().__init__(f"positivity condition violated: {witness}")


def positivity_witness(bundle: SurvivalBundle, phi_o, phi_pr) -> dict | None:
    """First violation of the integrand conditions on the graph of τ, or None."""
    phi_o = np.asarray(phi_o, dtype=object)
    phi_pr = np.asarray(phi_pr, dtype=object)
    for i in np.argsort(bundle.tau, kind="stable"):
        k = int(bundle.tau[i])
        if k == 0:
            continue
        label = bundle.space.outcomes[i]
        pr, o = phi_pr[k, i], phi_o[k, i]
        g, gt = bundle.G[k, i], bundle.Gtilde[k, i]
        if not pr > -1:
            return {"condition": "phi_pr > -1", "k": k, "outcome": label, "value": pr, "bound": -ONE}
        if g > 0 and not o > -gt / g:
            return {"condition": "phi_o > -Gtilde/G", "k": k, "outcome": label, "value": o, "bound": -gt / g}
        if not o * (gt - g) < gt:
            return {"condition": "phi_o (Gtilde - G) < Gtilde", "k": k, "outcome": label, "value": o * (gt - g), "bound": gt}
        if pr != 0:
            # φ^(pr)_τ is measurable at τ, so its conditional mean there is itself
            return {"condition": "E[phi_pr_tau | F_tau] = 0", "k": k, "outcome": label, "value": pr, "bound": ZERO}
    return None


@dataclass
class AssemblyReport:
    ZG: np.ndarray
    inputs: dict
    deflator: DeflatorReport
    lmd: DeflatorReport


def assemble_general(ZFb, ZFa, phi_o, phi_pr, bundle: SurvivalBundle, S) -> AssemblyReport:
    """Z^𝔾 = (Z^b)^τ/𝓔(G_-^{-1} ⊙ m)^τ · (Z^a/(Z^a)^τ)/𝓔(-I_{]]τ,∞[[}(1-G_-)^{-1} ⊙ m) · 𝓔(φ^(o) ⊙ N^𝔾) 𝓔(φ^(pr) ⊙ D)."""
    _require_flags(bundle, ("honest", "no_Gtilde1_Gminus_lt1", "G_positive"))
    wit = positivity_witness(bundle, phi_o, phi_pr)
    if wit is not None:
        raise PositivityViolation(wit)
    space = bundle.space
    S = np.asarray(S, dtype=object)
    ZFb = np.asarray(ZFb, dtype=object)
    ZFa = np.asarray(ZFa, dtype=object)
    tau = bundle.tau
    up = indicator(bundle.up_to())
    after = indicator(bundle.after())
    before_corr = stoch_exponential(stoch_integral(safe_div(up, bundle.G_prev), bundle.m))
    after_corr = stoch_exponential(stoch_integral(-safe_div(after, 1 - bundle.G_prev), bundle.m))
    ZG = (
        stopped(ZFb, tau) / before_corr
        * (ZFa / stopped(ZFa, tau)) / after_corr
        * stoch_exponential(stoch_integral(phi_o, bundle.NG))
        * stoch_exponential(stoch_integral(phi_pr, bundle.D))
    )
    if np.any(ZG <= 0):
        raise AssertionError("assembled deflator is not positive")
    Sa = stoch_integral(indicator(bundle.G_prev < 1), S)
    inputs = {
        "ZFb_deflator": is_deflator(space, ZFb, S).ok,
        "ZFb_lmd": is_lmd(space, ZFb, S).ok,
        "ZFa_deflator": is_deflator(space, ZFa, Sa).ok,
        "ZFa_lmd": is_lmd(space, ZFa, Sa).ok,
    }
    return AssemblyReport(ZG, inputs, is_deflator(space, ZG, S, bundle.GF), is_lmd(space, ZG, S, bundle.GF))


def random_phi_o(bundle: SurvivalBundle, rng: np.random.Generator) -> np.ndarray:
    """Base-adapted φ^(o) strictly inside its admissible band on every atom."""
    F = bundle.F
    out = zeros(bundle.G.shape)
    for k in range(1, bundle.T + 1):
        for atom in F.atoms(k):
            i = atom[0]
            g, gt = bundle.G[k, i], bundle.Gtilde[k, i]
            lo = -gt / g if g > 0 else Rational(-2)
            hi = gt / (gt - g) if gt > g else Rational(2)
            u = Rational(int(rng.integers(1, 20)), 20)
            out[k, list(atom)] = lo + u * (hi - lo)
    return out
