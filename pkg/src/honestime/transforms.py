"""Operators sending base-filtration martingales to enlarged-filtration martingales.

All formulas are the discrete-time increments on the regions after τ
(k > τ) and up to τ (1 ≤ k ≤ τ).
"""

from __future__ import annotations

import numpy as np

from .enlargement import IdentityReport, SurvivalBundle, _first_mismatch, after_tau_m_exponential, check_assumptions
from .space import (
    ZERO,
    ValidationError,
    cumulate,
    dual_predictable_projection,
    increments,
    indicator,
    is_martingale,
    quadratic_covariation,
    safe_div,
    stoch_exponential,
    zeros,
)


def _compensated_increments(bundle: SurvivalBundle, dV: np.ndarray) -> np.ndarray:
    """Increments of the 𝔽-compensator of the process with increments dV."""
    Vp = dual_predictable_projection(bundle.space, cumulate(dV))
    return increments(Vp)


def _ratio_after(bundle: SurvivalBundle) -> tuple[np.ndarray, np.ndarray]:
    """(I{τ<k}, I{τ<k}(1 - G_{k-1})/(1 - G_k)); the denominator never vanishes after τ."""
    after = bundle.after()
    if np.any((1 - bundle.G)[after] == 0):
        raise AssertionError("1 - G_k vanished on {τ < k}")
    ratio = zeros(after.shape)
    ratio[after] = (1 - bundle.G_prev[after]) / (1 - bundle.G[after])
    return indicator(after), ratio


def t_after(M, bundle: SurvivalBundle, *, jump_term: bool = True) -> np.ndarray:
    """𝒯^(a)(M): increments I{τ<k}[(1-G_{k-1})/(1-G_k) ΔM_k + E[ΔM_k I{G̃_k=1} | 𝓕_{k-1}]].

    ``jump_term=False`` drops the compensator summand, which is exact when
    {G̃ = 1 > G_-} is empty.
    """
    M = np.asarray(M, dtype=object)
    ind, ratio = _ratio_after(bundle)
    dM = increments(M)
    d = ratio * dM
    if jump_term:
        d = d + ind * _compensated_increments(bundle, dM * indicator(bundle.Gtilde == 1))
    return cumulate(d)


def t_before(M, bundle: SurvivalBundle) -> np.ndarray:
    """𝒯^(b)(M): increments I{k≤τ}(ΔM_k - ΔM_k Δm_k/G̃_k + E[ΔM_k I{G̃_k=0<G_{k-1}} | 𝓕_{k-1}])."""
    M = np.asarray(M, dtype=object)
    up = bundle.up_to()
    if np.any(bundle.Gtilde[up] == 0):
        raise AssertionError("G̃_k vanished on {k ≤ τ}")
    dM = increments(M)
    dm = increments(bundle.m)
    jumps = dM * indicator((bundle.Gtilde == 0) & (bundle.G_prev > 0))
    jumps[..., 0, :] = ZERO
    d = dM - safe_div(dM * dm, bundle.Gtilde) + _compensated_increments(bundle, jumps)
    return cumulate(indicator(up) * d)


def m_hat_after(M, bundle: SurvivalBundle) -> np.ndarray:
    """M̂^(a) = I_{]]τ,∞[[} ⊙ M + (1-G_-)^{-1} I_{]]τ,∞[[} ⊙ ⟨m, M⟩."""
    M = np.asarray(M, dtype=object)
    after = bundle.after()
    if np.any((1 - bundle.G_prev)[after] == 0):
        raise AssertionError("1 - G_{k-1} vanished on {τ < k}")
    dM = increments(M)
    bracket = _compensated_increments(bundle, dM * increments(bundle.m))
    d = indicator(after) * (dM + safe_div(bracket, 1 - bundle.G_prev))
    return cumulate(d)


def t_after_simple(X, bundle: SurvivalBundle) -> np.ndarray:
    """I_{]]τ,∞[[} ⊙ X + I_{]]τ,∞[[}/(1-G̃) ⊙ [X, m], for semimartingales X."""
    X = np.asarray(X, dtype=object)
    after = indicator(bundle.after())
    dX = increments(X)
    d = after * (dX + safe_div(dX * increments(bundle.m), 1 - bundle.Gtilde))
    return cumulate(d)


def _require_assumptions(bundle: SurvivalBundle) -> None:
    flags = check_assumptions(bundle.space, bundle.tau, bundle)
    if not (flags.honest and flags.no_Gtilde1_Gminus_lt1):
        raise ValidationError(f"honesty and {{G̃=1>G_-}}=∅ are required: {flags.as_dict()}")


def bracket_identities(X, Y, bundle: SurvivalBundle, K=None) -> dict:
    """Exact checks of the after-τ bracket, exponential-ratio and ratio-martingale identities.

    ``K`` (an 𝔽-martingale) enables the third check; it defaults to X when X
    is an 𝔽-martingale and is skipped otherwise.
    """
    _require_assumptions(bundle)
    space = bundle.space
    X = np.asarray(X, dtype=object)
    Y = np.asarray(Y, dtype=object)
    after = indicator(bundle.after())
    out = {}

    ta_x, ta_y = t_after_simple(X, bundle), t_after_simple(Y, bundle)
    weight = safe_div(after * (1 - bundle.G_prev), 1 - bundle.Gtilde)
    target = cumulate(weight * increments(quadratic_covariation(X, Y)))
    left = quadratic_covariation(ta_x, Y)
    right = quadratic_covariation(X, ta_y)
    v = _first_mismatch(left, target) or _first_mismatch(right, target)
    out["bracket"] = IdentityReport(v is None, "after-tau-bracket-symmetry", v)

    denom = after_tau_m_exponential(bundle)
    lhs = stoch_exponential(cumulate(after * increments(X))) / denom
    inner = ta_x + cumulate(safe_div(after, 1 - bundle.G_prev) * increments(t_after_simple(bundle.m, bundle)))
    v = _first_mismatch(lhs, stoch_exponential(inner))
    out["exponential_ratio"] = IdentityReport(v is None, "after-tau-exponential-ratio", v)

    if K is None and is_martingale(space, X).ok:
        K = X
    if K is not None:
        ratio = cumulate(after * increments(np.asarray(K, dtype=object))) / denom
        rep = is_martingale(space, ratio, bundle.GF)
        viol = None if rep.ok else {"n": rep.n, "atom": rep.atom, "lhs": rep.lhs, "rhs": rep.rhs}
        out["ratio_martingale"] = IdentityReport(rep.ok, "after-tau-ratio-martingale", viol)
    return out


def mm_ftau_functional(M, bundle: SurvivalBundle):
    """E[Σ_k I{G̃_k<1} (ΔM_k)² / (1 - G̃_k + |ΔM_k|)]."""
    dM = increments(np.asarray(M, dtype=object))
    dM[..., 0, :] = ZERO
    live = bundle.Gtilde < 1
    den = 1 - bundle.Gtilde + np.abs(dM)
    terms = safe_div(indicator(live) * dM * dM, den)
    per_outcome = terms.sum(axis=-2)
    return (per_outcome * bundle.space.probs).sum(axis=-1)
