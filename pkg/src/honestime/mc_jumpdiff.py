"""Monte Carlo checks for the jump-diffusion model with an argmax honest time.

Model on a uniform grid t_k = k·dt:

    ΔX_k = μ dt + σ ΔW_k + ζ ΔN^𝔽_k,   ΔN^𝔽_k = ΔN_k - λ dt,   S = S_0 𝓔(X),

with ΔN_k ~ Bernoulli(λ dt) (at most one jump per step).  Between grid
nodes W is a Brownian bridge; the maximum of each step is drawn exactly
from the bridge law, so the running maximum M is the maximum of the
continuous path.

τ is the continuous last argmax of W on [0, T'], rounded up to the grid.
For the grid filtration this is an honest time with

    G_k = P(τ > t_k | 𝓕_k) = 2Φ(-(M_k - W_k)/√(T' - t_k))   (t_k < T'),

and G̃_k = 1 when step k sets a new maximum, G̃_k = G_k otherwise.  The
after-τ operator is then

    Δ𝒯^(a)(W)_k = I{τ<k} [(1-G_{k-1})/(1-G_k) ΔW_k + 2x Φ̄(x/√dt)],   x = M_{k-1} - W_{k-1},

the last term being E[ΔW_k I{new maximum in step k} | 𝓕_{k-1}].  With
``max_sampling="grid"`` the maximum is taken over grid nodes only, the
compensator becomes √dt φ(x/√dt) and the reflection formula is only an
approximation of G; the validation gate then falls back to a tabulated
Monte Carlo G.

Floating point (float64) is used throughout this module.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

Coefficient = float | tuple


@dataclass(frozen=True)
class JumpDiffusionConfig:
    grid_steps: int = 256
    horizon: float = 1.0
    mu: Coefficient = 0.05
    sigma: Coefficient = 0.2
    zeta: Coefficient = 0.1
    lam: float = 1.0
    n_paths: int = 100_000
    seed: int = 20241015
    tau_cutoff: float = 0.5
    s0: float = 1.0
    chunk_size: int = 10_000
    max_sampling: str = "bridge"
    g_floor: float = 1e-6

    @property
    def dt(self) -> float:
        return self.horizon / self.grid_steps

    @property
    def cutoff_index(self) -> int:
        return int(round(self.tau_cutoff / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.grid_steps + 1) * self.dt

    def coefficient(self, name: str) -> np.ndarray:
        """Per-step values (step k uses the value at t_{k-1}); index 0 unused."""
        value = getattr(self, name)
        t = self.times
        if isinstance(value, (int, float)):
            vals = np.full(t.shape, float(value))
        else:
            vals = np.empty(t.shape)
            knots = sorted((float(a), float(b)) for a, b in value)
            left = np.concatenate(([t[0]], t[:-1]))
            for j, (start, v) in enumerate(knots):
                vals[left >= start] = v
            vals[left < knots[0][0]] = knots[0][1]
        return vals

    def validate(self) -> None:
        if self.grid_steps < 2 or self.horizon <= 0 or self.n_paths < 1:
            raise ValueError("grid_steps ≥ 2, horizon > 0 and n_paths ≥ 1 are required")
        if not 0 < self.tau_cutoff < self.horizon:
            raise ValueError("tau_cutoff must lie strictly inside (0, horizon)")
        if abs(self.cutoff_index * self.dt - self.tau_cutoff) > 1e-12 * self.horizon:
            raise ValueError("tau_cutoff must be a grid time")
        sig, zet = self.coefficient("sigma"), self.coefficient("zeta")
        if np.any(sig <= 0) or np.any(zet <= -1):
            raise ValueError("sigma > 0 and zeta > -1 are required")
        if self.lam <= 0 or self.lam * self.dt >= 1:
            raise ValueError("0 < lam·dt < 1 is required")
        if self.max_sampling not in ("bridge", "grid"):
            raise ValueError("max_sampling is 'bridge' or 'grid'")


@dataclass
class PathBatch:
    W: np.ndarray
    N: np.ndarray
    S: np.ndarray
    M: np.ndarray  # running maximum of W on [0, min(t, T')]
    dW: np.ndarray
    dNF: np.ndarray
    record: np.ndarray  # step k sets a new maximum (k ≤ cutoff)
    nonpositive_steps: int
    tau: np.ndarray | None = None
    G: np.ndarray | None = None
    Gtilde: np.ndarray | None = None


def _step_maxima(rng, dW, dt, mode):
    """Maximum of W - W_{k-1} over each step."""
    if mode == "grid":
        return np.maximum(dW, 0.0)
    u = rng.random(dW.shape)
    return 0.5 * (dW + np.sqrt(dW * dW - 2.0 * dt * np.log1p(-u)))


def simulate(config: JumpDiffusionConfig, n_paths: int | None = None, rng: np.random.Generator | None = None) -> PathBatch:
    config.validate()
    n = config.n_paths if n_paths is None else n_paths
    rng = rng or np.random.default_rng(config.seed)
    K, Kc, dt = config.grid_steps, config.cutoff_index, config.dt
    dW = np.zeros((n, K + 1))
    dW[:, 1:] = rng.standard_normal((n, K)) * math.sqrt(dt)
    jumps = np.zeros((n, K + 1))
    jumps[:, 1:] = rng.random((n, K)) < config.lam * dt
    dNF = jumps - config.lam * dt
    dNF[:, 0] = 0.0
    W = np.cumsum(dW, axis=1)
    N = np.cumsum(jumps, axis=1)
    mu, sig, zet = (config.coefficient(c) for c in ("mu", "sigma", "zeta"))
    dX = mu * dt + sig * dW + zet * dNF
    dX[:, 0] = 0.0
    factor = 1.0 + dX
    bad = int(np.count_nonzero(factor[:, 1:] <= 0))
    S = config.s0 * np.cumprod(factor, axis=1)
    peaks = np.zeros((n, K + 1))
    peaks[:, 1 : Kc + 1] = W[:, :Kc] + _step_maxima(rng, dW[:, 1 : Kc + 1], dt, config.max_sampling)
    M = np.maximum.accumulate(peaks, axis=1)
    record = np.zeros((n, K + 1), dtype=bool)
    record[:, 1 : Kc + 1] = M[:, 1 : Kc + 1] > M[:, :Kc]
    return PathBatch(W, N, S, M, dW, dNF, record, bad)


def reflection_G(x: np.ndarray, remaining: np.ndarray | float) -> np.ndarray:
    """2Φ(-x/√r) for r > 0, and 0 when r = 0."""
    r = np.asarray(remaining, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 2.0 * ndtr(-x / np.sqrt(np.where(r > 0, r, 1.0)))
    return np.where(r > 0, np.minimum(g, 1.0), 0.0)


@dataclass
class GTable:
    """Monte Carlo table of P(max of the walk over r steps > x) for r = 0..cutoff."""

    sorted_max: list

    def __call__(self, x: np.ndarray, r: int) -> np.ndarray:
        if r <= 0:
            return np.zeros_like(x)
        col = self.sorted_max[r]
        return 1.0 - np.searchsorted(col, x, side="right") / col.size


def build_g_table(config: JumpDiffusionConfig, n_paths: int = 20_000, seed: int | None = None) -> GTable:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed if seed is None else seed, 7]))
    Kc, dt = config.cutoff_index, config.dt
    dW = rng.standard_normal((n_paths, Kc)) * math.sqrt(dt)
    W = np.concatenate((np.zeros((n_paths, 1)), np.cumsum(dW, axis=1)), axis=1)
    peaks = W[:, :-1] + _step_maxima(rng, dW, dt, config.max_sampling)
    run = np.maximum.accumulate(peaks, axis=1)
    cols = [np.empty(0)] + [np.sort(run[:, r - 1]) for r in range(1, Kc + 1)]
    return GTable(cols)


def argmax_honest_time(batch: PathBatch, config: JumpDiffusionConfig, g_model="reflection") -> PathBatch:
    """Fill τ (grid index), G and G̃; ``g_model`` is "reflection" or a GTable."""
    K, Kc, dt = config.grid_steps, config.cutoff_index, config.dt
    n = batch.W.shape[0]
    Mc = batch.M[:, Kc]
    # τ: the step in which the final maximum on [0, T'] was reached
    hit = batch.record[:, : Kc + 1] & (batch.M[:, : Kc + 1] == Mc[:, None])
    tau = np.where(hit.any(axis=1), Kc - np.argmax(hit[:, ::-1], axis=1), 0)
    x = batch.M - batch.W
    G = np.zeros((n, K + 1))
    for k in range(Kc):
        if g_model == "reflection":
            G[:, k] = reflection_G(x[:, k], config.tau_cutoff - k * dt)
        else:
            G[:, k] = g_model(x[:, k], Kc - k)
    G[:, 0] = 1.0
    Gt = G.copy()
    Gt[batch.record] = 1.0
    batch.tau, batch.G, batch.Gtilde = tau, G, Gt
    return batch


def _jump_compensator(x_prev: np.ndarray, dt: float, mode: str) -> np.ndarray:
    """E[ΔW I{step sets a new maximum} | 𝓕_{k-1}] at distance x below the maximum."""
    sd = math.sqrt(dt)
    if mode == "grid":
        return sd * np.exp(-0.5 * (x_prev / sd) ** 2) / math.sqrt(2 * math.pi)
    return 2.0 * x_prev * ndtr(-x_prev / sd)


def after_tau_increments(batch: PathBatch, config: JumpDiffusionConfig, which: str, variant: str = "full"):
    """Per-step increments of 𝒯^(a) applied to W or N^𝔽, and the excluded-step mask.

    ``variant="no_bracket"`` keeps only I{τ<k} ΔX_k.
    """
    K, Kc, dt = config.grid_steps, config.cutoff_index, config.dt
    k = np.arange(K + 1)
    after = batch.tau[:, None] < k[None, :]
    after[:, 0] = False
    dM = batch.dW if which == "W" else batch.dNF
    if variant == "no_bracket":
        return np.where(after, dM, 0.0), np.zeros(after.shape, dtype=bool)
    one_g = 1.0 - batch.Gtilde
    excluded = after & (one_g < config.g_floor)
    live = after & ~excluded
    Gprev = np.empty_like(batch.G)
    Gprev[:, 0] = batch.G[:, 0]
    Gprev[:, 1:] = batch.G[:, :-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(live, (1.0 - Gprev) / np.where(live, one_g, 1.0), 0.0)
    d = ratio * dM
    if which == "W":
        xprev = np.empty_like(batch.M)
        xprev[:, 1:] = (batch.M - batch.W)[:, :-1]
        xprev[:, 0] = 0.0
        comp = np.zeros_like(d)
        steps = (k >= 1) & (k <= Kc)
        comp[:, steps] = _jump_compensator(xprev[:, steps], dt, config.max_sampling)
        d = d + np.where(live, comp, 0.0)
    return d, excluded


def _predictable_weights(batch: PathBatch):
    phi = np.ones_like(batch.W)
    psi = np.ones_like(batch.W)
    phi[:, 1:] = np.cos(batch.W[:, :-1])
    psi[:, 1:] = 1.0 / (1.0 + batch.N[:, :-1])
    return phi, psi


def default_checkpoints(config: JumpDiffusionConfig) -> list[int]:
    K = config.grid_steps
    return sorted({K // 8, K // 4, 3 * K // 8, config.cutoff_index, 3 * K // 4, K})


@dataclass
class CheckpointStat:
    k: int
    t: float
    mean: float
    se: float
    z: float
    passed: bool


def _test_zero_mean(values: np.ndarray, ks, dt) -> list[CheckpointStat]:
    out = []
    for j, k in enumerate(ks):
        v = values[:, j]
        mean = float(np.mean(v))
        se = float(np.std(v, ddof=1) / math.sqrt(v.size))
        z = mean / se if se > 0 else (0.0 if mean == 0 else math.inf)
        out.append(CheckpointStat(k, k * dt, mean, se, z, abs(mean) <= 3 * se))
    return out


def _test_supermartingale(values: np.ndarray, ks, dt) -> list[CheckpointStat]:
    """Increments between consecutive checkpoints; a mean more than 3·SE above 0 fails."""
    out = []
    prev = np.ones(values.shape[0])
    for j, k in enumerate(ks):
        inc = values[:, j] - prev
        prev = values[:, j]
        mean = float(np.mean(inc))
        se = float(np.std(inc, ddof=1) / math.sqrt(inc.size))
        z = mean / se if se > 0 else (0.0 if mean <= 0 else math.inf)
        out.append(CheckpointStat(k, k * dt, mean, se, z, mean <= 3 * se))
    return out


def psi_pair(config: JumpDiffusionConfig) -> tuple[np.ndarray, np.ndarray]:
    """ψ_2 = 0 and ψ_1 = -μ/σ, which solves μ + ψ_1σ + ψ_2ζλ = 0 with ψ_2 > -1."""
    mu, sig = config.coefficient("mu"), config.coefficient("sigma")
    psi1 = -mu / sig
    psi2 = np.zeros_like(psi1)
    residual = mu + psi1 * sig + psi2 * config.coefficient("zeta") * config.lam
    if np.any(np.abs(residual) > 1e-12) or np.any(psi2 <= -1):
        raise ValueError("(ψ_1, ψ_2) violates the drift constraint")
    return psi1, psi2


def deflated_wealth(batch: PathBatch, config: JumpDiffusionConfig, psi1: np.ndarray, sign: float) -> np.ndarray:
    """Z^𝔾 𝓔(φ ⊙ (S - S^τ)) with φ_k = sign/S_{k-1}.

    After τ, Z^𝔾 moves by (1 + ψ_1 ΔW_k)(1 - G_{k-1})/(1 - G̃_k); before τ it is 1.
    """
    K = config.grid_steps
    k = np.arange(K + 1)
    after = batch.tau[:, None] < k[None, :]
    after[:, 0] = False
    Gprev = np.empty_like(batch.G)
    Gprev[:, 0] = batch.G[:, 0]
    Gprev[:, 1:] = batch.G[:, :-1]
    one_g = 1.0 - batch.Gtilde
    live = after & (one_g >= config.g_floor)
    dX = np.zeros_like(batch.S)
    dX[:, 1:] = batch.S[:, 1:] / batch.S[:, :-1] - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        step = (1.0 + psi1 * batch.dW) * (1.0 - Gprev) / np.where(live, one_g, 1.0) * (1.0 + sign * dX)
    step = np.where(live, step, np.where(after, 0.0, 1.0))
    return np.cumprod(step, axis=1)


@dataclass
class GValidation:
    t: float
    n_outer: int
    n_inner: int
    mean_deviation: float
    se: float
    mean_abs_deviation: float
    passed: bool


def validate_reflection(config: JumpDiffusionConfig, n_outer: int = 10_000, n_inner: int = 200, seed: int | None = None) -> GValidation:
    """Compare 2Φ(-x/√(T'-t)) at t = T'/2 with a nested Monte Carlo estimate of P(τ > t | 𝓕_t)."""
    base = config.seed if seed is None else seed
    ss = np.random.SeedSequence([base, 11])
    outer_rng = np.random.default_rng(ss.spawn(1)[0])
    Kc, dt = config.cutoff_index, config.dt
    k_mid = Kc // 2
    r = Kc - k_mid
    dW = outer_rng.standard_normal((n_outer, k_mid)) * math.sqrt(dt)
    W = np.concatenate((np.zeros((n_outer, 1)), np.cumsum(dW, axis=1)), axis=1)
    peaks = W[:, :-1] + _step_maxima(outer_rng, dW, dt, config.max_sampling)
    M = np.maximum(np.max(peaks, axis=1), 0.0)
    x = M - W[:, -1]
    formula = reflection_G(x, config.tau_cutoff - k_mid * dt)
    inner_rng = np.random.default_rng(ss.spawn(2)[1])
    est = np.empty(n_outer)
    block = max(1, 2_000_000 // (n_inner * r))
    for s in range(0, n_outer, block):
        e = min(n_outer, s + block)
        m = e - s
        dV = inner_rng.standard_normal((m, n_inner, r)) * math.sqrt(dt)
        V = np.cumsum(dV, axis=2) - dV
        top = np.max(V + _step_maxima(inner_rng, dV, dt, config.max_sampling), axis=2)
        est[s:e] = np.mean(top > x[s:e, None], axis=1)
    dev = formula - est
    mean = float(np.mean(dev))
    se = float(np.std(dev, ddof=1) / math.sqrt(n_outer))
    return GValidation(k_mid * dt, n_outer, n_inner, mean, se, float(np.mean(np.abs(dev))), abs(mean) <= 3 * se)


def _chunks(config: JumpDiffusionConfig):
    n_chunks = -(-config.n_paths // config.chunk_size)
    children = np.random.SeedSequence(config.seed).spawn(n_chunks)
    for j, child in enumerate(children):
        size = min(config.chunk_size, config.n_paths - j * config.chunk_size)
        yield simulate(config, size, np.random.default_rng(child))


SELECTORS = ("t_a_W", "t_a_NF", "assembled", "no_bracket_W", "constant")


def _path_statistics(batch, config, ks, selectors):
    out = {}
    excluded = 0
    for name in selectors:
        if name == "constant":
            out[name] = np.zeros((batch.W.shape[0], len(ks)))
            continue
        if name == "no_bracket_W":
            d, _ = after_tau_increments(batch, config, "W", "no_bracket")
        elif name == "assembled":
            dw, ex = after_tau_increments(batch, config, "W")
            dn, _ = after_tau_increments(batch, config, "NF")
            phi, psi = _predictable_weights(batch)
            d = phi * dw + psi * dn
        else:
            d, ex = after_tau_increments(batch, config, "W" if name == "t_a_W" else "NF")
            if name == "t_a_W":
                excluded += int(ex.sum())
        out[name] = np.cumsum(d, axis=1)[:, ks]
    return out, excluded


def mg_stat_test(config: JumpDiffusionConfig, selector: str = "t_a_W", checkpoints=None, g_model="reflection") -> dict:
    """Zero-mean test of a 𝔾-martingale candidate at fixed checkpoints."""
    if selector not in SELECTORS:
        raise ValueError(f"selector must be one of {SELECTORS}")
    ks = list(checkpoints or default_checkpoints(config))
    vals, excluded = [], 0
    for batch in _chunks(config):
        argmax_honest_time(batch, config, g_model)
        stats, ex = _path_statistics(batch, config, ks, [selector])
        vals.append(stats[selector])
        excluded += ex
    res = _test_zero_mean(np.concatenate(vals), ks, config.dt)
    return {"selector": selector, "checkpoints": [asdict(c) for c in res], "passed": all(c.passed for c in res), "excluded_steps": excluded}


def jd_deflator_build(config: JumpDiffusionConfig, psi1_sign: float = 1.0, checkpoints=None, g_model="reflection") -> dict:
    """ψ pair and the supermartingale trend test of Z^𝔾 𝓔(φ ⊙ (S - S^τ)) for φ = ±1/S_-.

    ``psi1_sign=-1`` flips ψ_1 (a deliberately wrong deflator).
    """
    psi1, psi2 = psi_pair(config)
    psi1 = psi1 * psi1_sign
    ks = list(checkpoints or default_checkpoints(config))
    vals = {+1: [], -1: []}
    for batch in _chunks(config):
        argmax_honest_time(batch, config, g_model)
        for sign in vals:
            vals[sign].append(deflated_wealth(batch, config, psi1, sign)[:, ks])
    tests = {}
    for sign, chunks in vals.items():
        res = _test_supermartingale(np.concatenate(chunks), ks, config.dt)
        tests["long" if sign > 0 else "short"] = {"checkpoints": [asdict(c) for c in res], "passed": all(c.passed for c in res)}
    return {"psi1": float(psi1[1]), "psi2": float(psi2[1]), "tests": tests, "passed": all(t["passed"] for t in tests.values())}


def run_suite(config: JumpDiffusionConfig | None = None, *, n_outer: int = 10_000, n_inner: int = 200) -> dict:
    """The full seeded suite in one pass over the simulated paths."""
    config = config or JumpDiffusionConfig()
    config.validate()
    start = time.perf_counter()
    validation = validate_reflection(config, n_outer, n_inner)
    g_model = "reflection" if validation.passed else build_g_table(config)
    ks = default_checkpoints(config)
    psi1, psi2 = psi_pair(config)
    selectors = ["t_a_W", "t_a_NF", "assembled", "no_bracket_W"]
    acc = {name: [] for name in selectors}
    wealth = {("right", +1): [], ("right", -1): [], ("wrong", +1): [], ("wrong", -1): []}
    excluded = nonpositive = after_steps = 0
    for batch in _chunks(config):
        argmax_honest_time(batch, config, g_model)
        stats, ex = _path_statistics(batch, config, ks, selectors)
        for name in selectors:
            acc[name].append(stats[name])
        excluded += ex
        nonpositive += batch.nonpositive_steps
        after_steps += int(np.sum(config.grid_steps - batch.tau))
        for (kind, sign) in wealth:
            p = psi1 if kind == "right" else -psi1
            wealth[(kind, sign)].append(deflated_wealth(batch, config, p, sign)[:, ks])
    mg = {}
    for name in selectors:
        res = _test_zero_mean(np.concatenate(acc[name]), ks, config.dt)
        mg[name] = {"checkpoints": [asdict(c) for c in res], "passed": all(c.passed for c in res)}
    defl = {}
    for (kind, sign), chunks in wealth.items():
        res = _test_supermartingale(np.concatenate(chunks), ks, config.dt)
        defl[f"{kind}_{'long' if sign > 0 else 'short'}"] = {"checkpoints": [asdict(c) for c in res], "passed": all(c.passed for c in res)}
    exclusion_rate = excluded / max(after_steps, 1)
    checks = {
        "reflection_G_validated": validation.passed,
        "t_a_W_zero_mean": mg["t_a_W"]["passed"],
        "t_a_NF_zero_mean": mg["t_a_NF"]["passed"],
        "assembled_zero_mean": mg["assembled"]["passed"],
        "negative_control_no_bracket_fails": not mg["no_bracket_W"]["passed"],
        "deflator_supermartingale": defl["right_long"]["passed"] and defl["right_short"]["passed"],
        "negative_control_wrong_psi_fails": not (defl["wrong_long"]["passed"] and defl["wrong_short"]["passed"]),
        "exclusion_rate_below_half_percent": exclusion_rate < 0.005,
        "price_positive": nonpositive == 0,
    }
    return {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "g_model": "reflection" if g_model == "reflection" else "monte-carlo-table",
        "g_validation": asdict(validation),
        "psi1": float(psi1[1]),
        "psi2": float(psi2[1]),
        "martingale_tests": mg,
        "deflator_tests": defl,
        "excluded_steps": excluded,
        "exclusion_rate": exclusion_rate,
        "nonpositive_price_steps": nonpositive,
        "checks": checks,
        "passed": all(checks.values()),
        "seconds": time.perf_counter() - start,
    }
