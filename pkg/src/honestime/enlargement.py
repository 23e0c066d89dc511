"""Progressive enlargement of the base filtration by a random time.

Builds the enlarged filtration, the survival processes G and G̃, the dual
optional projection of the default indicator, the martingale m and the
default martingale N^𝔾, and checks honesty and the standing assumptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .space import (
    ONE,
    ZERO,
    Filtration,
    FiniteFilteredSpace,
    ValidationError,
    cond_expect,
    cumulate,
    dual_optional_projection,
    dual_predictable_projection,
    increments,
    indicator,
    safe_div,
    stoch_exponential,
    stopped,
    zeros,
)


def validate_tau(space: FiniteFilteredSpace, tau) -> np.ndarray:
    t = np.asarray(tau)
    if t.shape != (space.n,):
        raise ValidationError("tau needs one value per outcome")
    if not np.issubdtype(t.dtype, np.integer) and not all(float(v).is_integer() for v in t):
        raise ValidationError("tau values must be integers")
    t = t.astype(np.intp)
    if np.any(t < 0) or np.any(t > space.horizon):
        raise ValidationError(f"tau values must lie in 0..{space.horizon}")
    return t


def enlarge(space: FiniteFilteredSpace, tau) -> Filtration:
    """Atoms at n: base atoms split by min(τ, n + 1), i.e. by τ∧0..τ∧n and I{τ ≤ n}."""
    tau = validate_tau(space, tau)
    parts = []
    for n in range(space.horizon + 1):
        groups: dict[tuple, list] = {}
        base = space.filtration.atom_of(n)
        for i in range(space.n):
            groups.setdefault((int(base[i]), min(int(tau[i]), n + 1)), []).append(i)
        parts.append(list(groups.values()))
    return Filtration(parts, space.n)


@dataclass
class HonestyReport:
    honest: bool
    witness: tuple | None = None  # (n, atom outcome indices, i, j) with τ_i != τ_j, both ≤ n

    def __bool__(self) -> bool:
        return self.honest

    def describe(self, space: FiniteFilteredSpace) -> dict:
        if self.honest:
            return {"honest": True}
        n, atom, i, j = self.witness
        return {
            "honest": False,
            "witness": {
                "n": n,
                "atom": space.labels(atom),
                "outcomes": [space.outcomes[i], space.outcomes[j]],
                "tau": [self._tau[i], self._tau[j]],
            },
        }

    _tau: tuple = field(default=(), repr=False)


def is_honest(space: FiniteFilteredSpace, tau) -> HonestyReport:
    """τ is honest when, for every n and base atom A at n, τ is constant on A ∩ {τ ≤ n}.

    Times are scanned from the horizon down, so a witness names the latest
    offending date.
    """
    tau = validate_tau(space, tau)
    filt = space.filtration
    for n in range(space.horizon, 0, -1):
        for atom in filt.atoms(n):
            seen = [i for i in atom if tau[i] <= n]
            for j in seen[1:]:
                if tau[j] != tau[seen[0]]:
                    return HonestyReport(False, (n, atom, seen[0], j), tuple(int(v) for v in tau))
    return HonestyReport(True, None, tuple(int(v) for v in tau))


@dataclass
class SurvivalBundle:
    space: FiniteFilteredSpace
    tau: np.ndarray
    GF: Filtration  # enlarged filtration 𝔾
    D: np.ndarray
    G: np.ndarray
    Gtilde: np.ndarray
    DoF: np.ndarray
    DpF: np.ndarray
    m: np.ndarray
    NG: np.ndarray
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def T(self) -> int:
        return self.space.horizon

    @property
    def F(self) -> Filtration:
        return self.space.filtration

    @property
    def G_prev(self) -> np.ndarray:
        """G_{k-1} in row k (row 0 holds G_0)."""
        out = self.G.copy()
        out[1:] = self.G[:-1]
        return out

    def after(self) -> np.ndarray:
        """Boolean I{τ < k} per (k, ω)."""
        k = np.arange(self.T + 1)[:, None]
        return self.tau[None, :] < k

    def up_to(self) -> np.ndarray:
        """Boolean I{k ≤ τ} per (k, ω), row 0 excluded (the interval ]]0, τ]])."""
        k = np.arange(self.T + 1)[:, None]
        mask = k <= self.tau[None, :]
        mask[0] = False
        return mask


def survival_bundle(space: FiniteFilteredSpace, tau) -> SurvivalBundle:
    tau = validate_tau(space, tau)
    T = space.horizon
    k = np.arange(T + 1)[:, None]
    D = indicator(tau[None, :] <= k)
    G = np.empty((T + 1, space.n), dtype=object)
    Gt = np.empty((T + 1, space.n), dtype=object)
    for n in range(T + 1):
        G[n] = cond_expect(space, indicator(tau > n), n)
        Gt[n] = cond_expect(space, indicator(tau >= n), n)
    DoF = dual_optional_projection(space, D)
    DpF = dual_predictable_projection(space, D)
    m = G + DoF
    up_to = (k <= tau[None, :]) & (k > 0)
    dNG = increments(D) - indicator(up_to) * safe_div(increments(DoF), Gt)
    NG = cumulate(dNG, D[0])
    return SurvivalBundle(space, tau, enlarge(space, tau), D, G, Gt, DoF, DpF, m, NG)


@dataclass
class AssumptionFlags:
    finite: bool
    honest: bool
    G_tau_lt_1: bool
    no_Gtilde1_Gminus_lt1: bool
    G_positive: bool
    witnesses: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "finite": self.finite,
            "honest": self.honest,
            "G_tau_lt_1": self.G_tau_lt_1,
            "no_Gtilde1_Gminus_lt1": self.no_Gtilde1_Gminus_lt1,
            "G_positive": self.G_positive,
        }

    @property
    def all_true(self) -> bool:
        return all(self.as_dict().values())


def check_assumptions(space: FiniteFilteredSpace, tau, bundle: SurvivalBundle | None = None) -> AssumptionFlags:
    tau = validate_tau(space, tau)
    b = bundle or survival_bundle(space, tau)
    T = space.horizon
    wit: dict = {}
    honesty = is_honest(space, tau)
    if not honesty:
        wit["honest"] = honesty.describe(space)["witness"]
    g_at_tau = b.G[tau, np.arange(space.n)]
    bad = np.flatnonzero(g_at_tau >= 1)
    if bad.size:
        wit["G_tau_lt_1"] = {"outcome": space.outcomes[bad[0]], "n": int(tau[bad[0]])}
    no_jump = True
    for n in range(1, T + 1):
        hit = np.flatnonzero((b.Gtilde[n] == 1) & (b.G[n - 1] < 1))
        if hit.size:
            no_jump = False
            wit["no_Gtilde1_Gminus_lt1"] = {"n": n, "outcome": space.outcomes[hit[0]]}
            break
    positive = True
    for n in range(T):
        hit = np.flatnonzero(b.G[n] <= 0)
        if hit.size:
            positive = False
            wit["G_positive"] = {"n": n, "outcome": space.outcomes[hit[0]]}
            break
    return AssumptionFlags(True, honesty.honest, not bad.size, no_jump, positive, wit)


def gtilde_at_tau_is_one(bundle: SurvivalBundle) -> bool:
    """G̃_τ = 1 on {τ ≥ 1}; equivalent to honesty on a finite space."""
    t = bundle.tau
    vals = bundle.Gtilde[t, np.arange(len(t))]
    return bool(np.all((vals == 1) | (t == 0)))


@dataclass
class IdentityReport:
    ok: bool
    name: str
    violation: dict | None = None
    cause: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def _first_mismatch(lhs, rhs, mask=None):
    diff = lhs != rhs
    if mask is not None:
        diff &= mask
    hit = np.argwhere(diff)
    if hit.size == 0:
        return None
    n, i = (int(v) for v in hit[0][-2:])
    return {"n": n, "outcome": i, "lhs": lhs[tuple(hit[0])], "rhs": rhs[tuple(hit[0])]}


def d0f_identity(bundle: SurvivalBundle) -> IdentityReport:
    """I{τ < k} ΔD^{o,𝔽}_k = 0 for every k."""
    lhs = indicator(bundle.after()) * increments(bundle.DoF)
    v = _first_mismatch(lhs, zeros(lhs.shape))
    return IdentityReport(v is None, "after-tau-dual-optional-vanishes", v)


def xg_process(bundle: SurvivalBundle) -> np.ndarray:
    """(1 - G)/(1 - G^τ) after τ, and 1 up to τ."""
    Gs = stopped(bundle.G, bundle.tau)
    after = bundle.after()
    out = np.where(after, ZERO, ONE).astype(object)
    out[after] = (1 - bundle.G[after]) / (1 - Gs[after])
    return out


def after_tau_m_exponential(bundle: SurvivalBundle) -> np.ndarray:
    """𝓔(-(1 - G_-)^{-1} I_{]]τ,∞[[} ⊙ m)."""
    H = indicator(bundle.after())
    H = -safe_div(H, 1 - bundle.G_prev)
    return stoch_exponential(cumulate(H * increments(bundle.m)))


def xg_identity(bundle: SurvivalBundle) -> dict:
    """Check (1-G)/(1-G^τ) = 𝓔(-(1-G_-)^{-1} I_{]]τ,∞[[} ⊙ m) and the vanishing of
    I_{]]τ,∞[[} ⊙ D^{o,𝔽}; non-honest times are reported as the cause of failure."""
    v = _first_mismatch(xg_process(bundle), after_tau_m_exponential(bundle))
    honest = is_honest(bundle.space, bundle.tau)
    cause = None if honest else "tau is not honest"
    gtm = IdentityReport(v is None, "survival-ratio-exponential", v, None if v is None else cause)
    d0f = d0f_identity(bundle)
    if not d0f.ok:
        d0f.cause = cause
    return {"gtm": gtm, "d0f": d0f, "honesty": honest}


class NotHonestError(ValidationError):
    def __init__(self, report: HonestyReport, space: FiniteFilteredSpace):
        self.report = report
        super().__init__(f"tau is not honest: {report.describe(space)['witness']}")


def _require_honest(bundle: SurvivalBundle) -> None:
    rep = is_honest(bundle.space, bundle.tau)
    if not rep:
        raise NotHonestError(rep, bundle.space)


def optional_reduction(bundle: SurvivalBundle, H) -> np.ndarray:
    """𝔽-optional H^𝔽 equal to the 𝔾-optional H on ]]τ, ∞[[ (0 where undetermined)."""
    _require_honest(bundle)
    H = np.asarray(H, dtype=object)
    F = bundle.F
    out = zeros(H.shape)
    for n in range(bundle.T + 1):
        for a, atom in enumerate(F.atoms(n)):
            live = [i for i in atom if bundle.tau[i] < n]
            if not live:
                continue
            vals = {H[n, i] for i in live}
            if len(vals) != 1:
                raise ValidationError(f"H is not 𝔾-optional at time {n}")
            out[n, list(atom)] = vals.pop()
    return out


def predictable_split(bundle: SurvivalBundle, H, bounds: tuple | None = None):
    """𝔽-predictable (J, K) with H = J on [[0, τ]] and H = K on ]]τ, ∞[[.

    ``bounds = (lo, hi)`` asserts lo < H ≤ hi; undetermined entries are set to
    ``hi`` when 0 falls outside that range, and to 0 otherwise.
    """
    _require_honest(bundle)
    H = np.asarray(H, dtype=object)
    F = bundle.F
    fill = ZERO
    if bounds is not None:
        lo, hi = bounds
        if np.any(H <= lo) or np.any(H > hi):
            raise ValidationError("H violates the stated bounds")
        if not lo < 0 <= hi:
            fill = hi
    J = np.empty(H.shape, dtype=object)
    K = np.empty(H.shape, dtype=object)
    J.fill(fill)
    K.fill(fill)
    if F.constant_on_atoms(H[0], 0) is not None:
        raise ValidationError("H_0 must be measurable at time 0 of the base filtration")
    J[0] = H[0]
    K[0] = H[0]
    for k in range(1, bundle.T + 1):
        for atom in F.atoms(k - 1):
            idx = list(atom)
            before = [i for i in atom if bundle.tau[i] >= k]
            after = [i for i in atom if bundle.tau[i] < k]
            for group, target in ((before, J), (after, K)):
                if group:
                    vals = {H[k, i] for i in group}
                    if len(vals) != 1:
                        raise ValidationError(f"H is not 𝔾-predictable at time {k}")
                    target[k, idx] = vals.pop()
    return J, K


def g2f_compensator_identity(bundle: SurvivalBundle, V) -> IdentityReport:
    """I_{]]τ,∞[[} ⊙ V^{p,𝔾} = I_{]]τ,∞[[} (1 - G_-)^{-1} ⊙ ((1 - G̃) ⊙ V)^{p,𝔽}."""
    space = bundle.space
    V = np.asarray(V, dtype=object)
    after = indicator(bundle.after())
    VpG = dual_predictable_projection(space, V, bundle.GF)
    lhs = cumulate(after * increments(VpG))
    W = cumulate((1 - bundle.Gtilde) * increments(V))
    WpF = dual_predictable_projection(space, W)
    rhs = cumulate(safe_div(after, 1 - bundle.G_prev) * increments(WpF))
    v = _first_mismatch(lhs, rhs)
    return IdentityReport(v is None, "after-tau-compensator-transfer", v)
