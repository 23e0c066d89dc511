"""Decomposition of enlarged-filtration martingales into four labelled parts.

    M^𝔾 = 𝒯^(b)(M^(𝔽,b)) + φ^(o) ⊙ N^𝔾 + φ^(pr) ⊙ D + 𝒯^(a)(M̄^(𝔽,a))

The integrands are found block by block, one exact linear system per
(time k, base atom at k-1), matched against the increments of M^𝔾 on every
enlarged atom.  Up to τ the unknowns per child atom c of the block are
ΔM^(𝔽,b)(c), φ^(o)(c) and φ^(pr) on the cell {τ = k} ∩ c; after τ the
unknown is ΔM̄^(𝔽,a)(c).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .enlargement import NotHonestError, SurvivalBundle, is_honest
from .linalg import LinearSolver, min_norm_solver
from .space import (
    ONE,
    ZERO,
    Rational,
    ValidationError,
    cond_expect,
    cumulate,
    increments,
    indicator,
    is_martingale,
    safe_div,
    stoch_integral,
    stopped,
    zeros,
)
from .transforms import t_after, t_before


class InfeasibleDecomposition(ValidationError):
    def __init__(self, k, atom, residual):
        self.k, self.atom, self.residual = k, atom, residual
        super().__init__(f"no representation on block k={k}, atom={atom}: residual {residual}")


@dataclass
class _Block:
    k: int
    atom: tuple
    solver: LinearSolver
    data_rows: list  # (row, representative outcome) pairs fed from ΔM^𝔾_k
    writes: list  # (var index, target name, outcome indices)


def _require_honest(bundle: SurvivalBundle) -> None:
    rep = is_honest(bundle.space, bundle.tau)
    if not rep:
        raise NotHonestError(rep, bundle.space)


def _before_blocks(bundle: SurvivalBundle) -> list[_Block]:
    F, tau, P = bundle.F, bundle.tau, bundle.space.probs
    blocks = []
    for k in range(1, bundle.T + 1):
        for a, atom in enumerate(F.atoms(k - 1)):
            g_prev = bundle.G[k - 1, atom[0]]
            rows, data_rows, writes = [], [], []
            nvar = 0
            layout = []
            for c in F.children(k - 1, a):
                cell = F.atoms(k)[c]
                at_k = [i for i in cell if tau[i] == k]
                later = [i for i in cell if tau[i] > k]
                a_var, f_var = nvar, nvar + 1
                p_var = nvar + 2 if at_k else None
                nvar += 3 if at_k else 2
                layout.append((c, cell, at_k, later, a_var, f_var, p_var))
                writes.append((a_var, "MFb", list(cell)))
                writes.append((f_var, "phi_o", list(cell)))
                if at_k:
                    writes.append((p_var, "phi_pr", at_k))
            for c, cell, at_k, later, a_var, f_var, p_var in layout:
                i0 = cell[0]
                gt, g = bundle.Gtilde[k, i0], bundle.G[k, i0]
                if gt == 0:
                    rows.append(_unit(nvar, a_var))
                    data_rows.append(None)
                if at_k:
                    r = [ZERO] * nvar
                    r[a_var], r[f_var], r[p_var] = g_prev / gt, g / gt, ONE
                    rows.append(r)
                    data_rows.append(at_k[0])
                    # the conditional mean of φ^(pr) at τ given 𝓕_τ is φ^(pr) itself
                    rows.append(_unit(nvar, p_var))
                    data_rows.append(None)
                if later:
                    r = [ZERO] * nvar
                    r[a_var], r[f_var] = g_prev / gt, -(gt - g) / gt
                    rows.append(r)
                    data_rows.append(later[0])
                if not (at_k and later):
                    rows.append(_unit(nvar, f_var))
                    data_rows.append(None)
            mart = [ZERO] * nvar
            for c, cell, at_k, later, a_var, f_var, p_var in layout:
                mart[a_var] = sum((P[i] for i in cell), ZERO)
            rows.append(mart)
            data_rows.append(None)
            solver = min_norm_solver(rows, nvar)
            blocks.append(_Block(k, atom, solver, [(r, o) for r, o in enumerate(data_rows) if o is not None], writes))
    return blocks


def _after_blocks(bundle: SurvivalBundle) -> list[_Block]:
    F, tau, P = bundle.F, bundle.tau, bundle.space.probs
    blocks = []
    for k in range(1, bundle.T + 1):
        for a, atom in enumerate(F.atoms(k - 1)):
            g_prev = bundle.G[k - 1, atom[0]]
            kids = F.children(k - 1, a)
            nvar = len(kids)
            rows, data_rows, writes = [], [], []
            for v, c in enumerate(kids):
                cell = F.atoms(k)[c]
                writes.append((v, "MFa", list(cell)))
                gt = bundle.Gtilde[k, cell[0]]
                dead = [i for i in cell if tau[i] < k]
                if g_prev == 1 or gt == 1:
                    rows.append(_unit(nvar, v))
                    data_rows.append(None)
                if dead:
                    r = [ZERO] * nvar
                    r[v] = (1 - g_prev) / (1 - gt)
                    rows.append(r)
                    data_rows.append(dead[0])
            rows.append([sum((P[i] for i in F.atoms(k)[c]), ZERO) for c in kids])
            data_rows.append(None)
            solver = min_norm_solver(rows, nvar)
            blocks.append(_Block(k, atom, solver, [(r, o) for r, o in enumerate(data_rows) if o is not None], writes))
    return blocks


def _unit(n, j):
    r = [ZERO] * n
    r[j] = ONE
    return r


def _blocks(bundle: SurvivalBundle):
    hit = bundle.cache.get("representation_blocks")
    if hit is None:
        _require_honest(bundle)
        hit = (_before_blocks(bundle), _after_blocks(bundle))
        bundle.cache["representation_blocks"] = hit
    return hit


def _solve_blocks(blocks, dMG, targets):
    """Solve every block for a batch of increments dMG with shape (B, T+1, N)."""
    B = dMG.shape[0]
    for blk in blocks:
        s = blk.solver
        b = np.empty((s.nrows, B), dtype=object)
        b.fill(ZERO)
        for r, o in blk.data_rows:
            b[r] = dMG[:, blk.k, o]
        op = np.array(s.operator, dtype=object).reshape(s.ncols, s.nrows)
        x = op.dot(b) if s.nrows else np.empty((s.ncols, B), dtype=object)
        if s.nrows:
            res = np.array(s.A, dtype=object).dot(x) - b
            bad = np.argwhere(res != 0)
            if bad.size:
                r, j = (int(v) for v in bad[0])
                raise InfeasibleDecomposition(blk.k, blk.atom, {"row": r, "batch": j, "value": res[r, j]})
        for var, name, outcomes in blk.writes:
            targets[name][:, blk.k, outcomes] = x[var][:, None]


@dataclass
class GDecomposition:
    MFb: np.ndarray
    phi_o: np.ndarray
    phi_pr: np.ndarray
    MFa: np.ndarray
    parts: dict = field(default_factory=dict)

    LABELS = {"pf": "pure financial", "pd_o": "pure default", "pd_pr": "pure default", "cr": "correlation"}


def _parts(bundle, MFb, phi_o, phi_pr, MFa) -> dict:
    return {
        "pf": t_before(MFb, bundle),
        "pd_o": stoch_integral(phi_o, bundle.NG),
        "pd_pr": stoch_integral(phi_pr, bundle.D),
        "cr": t_after(MFa, bundle),
    }


def decompose_full(MG, bundle: SurvivalBundle) -> GDecomposition:
    """Find (M^(𝔽,b), φ^(o), φ^(pr), M̄^(𝔽,a)) representing the 𝔾-martingale MG.

    MG may carry leading batch axes.  Raises InfeasibleDecomposition with the
    residual when some block has no solution.
    """
    MG = np.asarray(MG, dtype=object)
    batch = MG.reshape((-1,) + MG.shape[-2:])
    if np.any(batch[:, 0, :] != 0):
        raise ValidationError("the 𝔾-martingale must start at 0")
    before, after = _blocks(bundle)
    dMG = increments(batch)
    targets = {name: zeros(batch.shape) for name in ("MFb", "phi_o", "phi_pr", "MFa")}
    _solve_blocks(before, dMG, targets)
    _solve_blocks(after, dMG, targets)
    MFb = cumulate(targets["MFb"])
    MFa = cumulate(targets["MFa"])
    phi_o, phi_pr = targets["phi_o"], targets["phi_pr"]
    shape = MG.shape
    arrays = [x.reshape(shape) for x in (MFb, phi_o, phi_pr, MFa)]
    dec = GDecomposition(*arrays)
    dec.parts = _parts(bundle, *arrays)
    return dec


def uniqueness_check(bundle: SurvivalBundle) -> int:
    """Kernel dimension of the homogeneous block systems (0 means unique)."""
    before, after = _blocks(bundle)
    return sum(b.solver.nullity for b in before + after)


def reconstruct(dec: GDecomposition, bundle: SurvivalBundle):
    """Sum of the four parts, with the risk label of each part."""
    parts = dec.parts or _parts(bundle, dec.MFb, dec.phi_o, dec.phi_pr, dec.MFa)
    total = parts["pf"] + parts["pd_o"] + parts["pd_pr"] + parts["cr"]
    return total, {name: GDecomposition.LABELS[name] for name in parts}


def after_tau_component(MG, bundle: SurvivalBundle) -> np.ndarray:
    """M^𝔽 with ΔM^𝔽_k = E[I{τ<k} ΔM^𝔾_k | 𝓕_k] and M^𝔽_0 = 0."""
    _require_honest(bundle)
    MG = np.asarray(MG, dtype=object)
    d = indicator(bundle.after()) * increments(MG)
    out = zeros(MG.shape)
    for k in range(1, bundle.T + 1):
        out[..., k, :] = cond_expect(bundle.space, d[..., k, :], k)
    return cumulate(out)


def discrete_after_tau_identities(MG, MF, bundle: SurvivalBundle) -> dict:
    """Check both forms of M^𝔾 - (M^𝔾)^τ in terms of M^𝔽 and the jump condition on M^𝔽."""
    MG = np.asarray(MG, dtype=object)
    after = indicator(bundle.after())
    lhs = MG - stopped(MG, bundle.tau)
    dMF = increments(MF)
    first = cumulate(after * safe_div(dMF, 1 - bundle.Gtilde))
    second = cumulate(after * safe_div(increments(t_after(MF, bundle)), 1 - bundle.G_prev))
    jump = dMF * indicator(bundle.Gtilde == 1)
    return {
        "sum_over_one_minus_gtilde": bool(np.all(lhs == first)),
        "sum_of_t_after_over_one_minus_gminus": bool(np.all(lhs == second)),
        "no_jump_on_gtilde_one": bool(np.all(jump == 0)),
    }


def random_g_martingales(bundle: SurvivalBundle, rng: np.random.Generator, count: int, scale: int = 20):
    """E[ξ | 𝒢_n] - E[ξ | 𝒢_0] for ``count`` random rational terminal variables ξ."""
    N = bundle.space.n
    num = rng.integers(-scale, scale + 1, size=(count, N))
    den = rng.integers(1, scale + 1, size=(count, N))
    xi = np.empty((count, N), dtype=object)
    for idx in np.ndindex(count, N):
        xi[idx] = Rational(int(num[idx]), int(den[idx]))
    out = np.empty((count, bundle.T + 1, N), dtype=object)
    for n in range(bundle.T + 1):
        out[:, n, :] = cond_expect(bundle.space, xi, n, bundle.GF)
    return out - out[:, :1, :]


def check_decomposition(MG, dec: GDecomposition, bundle: SurvivalBundle) -> dict:
    """Exact verification of a decomposition against its support conditions."""
    space = bundle.space
    total, _ = reconstruct(dec, bundle)
    dMFb, dMFa = increments(dec.MFb), increments(dec.MFa)
    tau = bundle.tau
    # φ^(pr) at τ is measurable at τ, so a zero conditional mean means φ^(pr)_τ = 0
    phi_pr_at_tau = dec.phi_pr[..., tau, np.arange(space.n)]
    checks = {
        "reconstructs": bool(np.all(total == MG)),
        "mfb_zero_on_gtilde_zero": bool(np.all(dMFb * indicator(bundle.Gtilde == 0) == 0)),
        "phi_pr_mean_zero_at_tau": bool(np.all(phi_pr_at_tau[..., tau > 0] == 0)),
        "mfa_zero_on_gminus_one": bool(np.all(dMFa * indicator(bundle.G_prev == 1) == 0)),
        "mfa_zero_on_gtilde_one": bool(np.all(dMFa * indicator(bundle.Gtilde == 1) == 0)),
    }
    for name, part in dec.parts.items():
        checks[f"{name}_is_g_martingale"] = is_martingale(space, part, bundle.GF).ok
    checks["mfb_is_f_martingale"] = is_martingale(space, dec.MFb).ok
    checks["mfa_is_f_martingale"] = is_martingale(space, dec.MFa).ok
    return checks
