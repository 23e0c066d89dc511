"""Built-in fixtures and seeded random honest scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .enlargement import check_assumptions, is_honest
from .space import ONE, FiniteFilteredSpace, Rational, rational_array, zeros

Q = Rational


@dataclass
class Scenario:
    name: str
    space: FiniteFilteredSpace
    tau: np.ndarray
    price: np.ndarray | None = None
    candidates: list = field(default_factory=list)
    seed: int | None = None


def _uniform4(T: int, parts) -> FiniteFilteredSpace:
    return FiniteFilteredSpace(list("abcd"), [Q(1, 4)] * 4, T, parts)


def fixture(name: str) -> Scenario:
    """S1, S2 (horizon 2) and the non-honest S3 (horizon 3)."""
    two = [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]]
    # a symmetric binomial price, a martingale under the uniform measure
    price2 = rational_array([[4, 4, 4, 4], [5, 5, 3, 3], [6, 4, 4, 2]])
    if name == "S1":
        return Scenario("S1", _uniform4(2, two), np.array([1, 2, 2, 2]), price2, [np.ones((3, 4), dtype=object) * ONE])
    if name == "S2":
        return Scenario("S2", _uniform4(2, two), np.array([1, 1, 2, 2]), price2, [np.ones((3, 4), dtype=object) * ONE])
    if name == "S3":
        three = [[[0, 1, 2, 3]]] * 3 + [[[0, 1], [2, 3]]]
        price3 = rational_array([[4] * 4, [4] * 4, [4] * 4, [5, 5, 3, 3]])
        return Scenario("S3", _uniform4(3, three), np.array([1, 2, 1, 1]), price3, [])
    raise KeyError(f"unknown fixture {name!r}; expected S1, S2 or S3")


FIXTURES = ("S1", "S2", "S3")


def random_space(rng: np.random.Generator, max_outcomes: int = 64, max_horizon: int = 5) -> FiniteFilteredSpace:
    """Recursive random refinement; small trees are more likely than large ones."""
    T = int(rng.integers(1, max_horizon + 1))
    target = int(min(max_outcomes, max(2, round(2 ** rng.uniform(1, np.log2(max_outcomes))))))
    parts = [[list(range(target))]]
    for n in range(1, T + 1):
        nxt = []
        remaining_levels = T - n + 1
        for atom in parts[-1]:
            size = len(atom)
            if size == 1:
                nxt.append(atom)
                continue
            # split more aggressively late so terminal atoms tend to be small
            hi = min(size, 2 if remaining_levels > 2 else 3)
            pieces = int(rng.integers(1, hi + 1))
            if remaining_levels == 1 and rng.random() < 0.7:
                pieces = size
            cuts = sorted(rng.choice(np.arange(1, size), size=pieces - 1, replace=False)) if pieces > 1 else []
            bounds = [0, *cuts, size]
            nxt.extend(atom[bounds[j]:bounds[j + 1]] for j in range(len(bounds) - 1))
        parts.append(nxt)
    weights = rng.integers(1, 10, size=target)
    total = int(weights.sum())
    probs = [Q(int(w), total) for w in weights]
    labels = [f"w{i}" for i in range(target)]
    return FiniteFilteredSpace(labels, probs, T, parts)


def random_honest_tau(space: FiniteFilteredSpace, rng: np.random.Generator, keep: float | None = None) -> np.ndarray:
    """τ(ω) = last n with ω in Γ_n, where Γ_0 = Ω and each Γ_n is a random union of atoms at n.

    Every such τ is the end of an adapted random set, hence honest.
    """
    p = rng.uniform(0.3, 0.9) if keep is None else keep
    tau = np.zeros(space.n, dtype=np.intp)
    for n in range(1, space.horizon + 1):
        for atom in space.filtration.atoms(n):
            if rng.random() < p:
                tau[list(atom)] = n
    return tau


def random_price(space: FiniteFilteredSpace, rng: np.random.Generator) -> np.ndarray:
    """Price with increments of both signs inside every atom that splits, 0 elsewhere."""
    F = space.filtration
    T = space.horizon
    S = zeros((T + 1, space.n))
    S[0] = Q(int(rng.integers(5, 20)))
    for k in range(1, T + 1):
        S[k] = S[k - 1]
        for a in range(len(F.atoms(k - 1))):
            kids = F.children(k - 1, a)
            if len(kids) < 2:
                continue
            order = rng.permutation(len(kids))
            for rank, j in enumerate(order):
                mag = Q(int(rng.integers(1, 6)), int(rng.integers(1, 4)))
                sign = 1 if rank == 0 else -1 if rank == 1 else int(rng.choice([-1, 1]))
                S[k, list(F.atoms(k)[kids[j]])] += sign * mag
    return S


def random_scenario(
    seed: int, *, require=(), accept=None, max_outcomes: int = 64, max_horizon: int = 5, tries: int = 400
) -> Scenario:
    """Seeded honest scenario; ``require`` names assumption flags that must hold and
    ``accept(space, tau)`` is an extra filter."""
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        space = random_space(rng, max_outcomes, max_horizon)
        tau = random_honest_tau(space, rng)
        if require:
            flags = check_assumptions(space, tau).as_dict()
            if not all(flags[r] for r in require):
                continue
        if accept is not None and not accept(space, tau):
            continue
        assert is_honest(space, tau)
        return Scenario(f"random-{seed}", space, tau, random_price(space, rng), [], seed)
    raise RuntimeError(f"no scenario satisfying {require} after {tries} tries (seed {seed})")


def random_corpus(count: int, seed: int = 0, **kw) -> list[Scenario]:
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [random_scenario(int(s), **kw) for s in seeds]


def has_live_after_region(space: FiniteFilteredSpace, tau) -> bool:
    """Some atom at k-1 that splits at k contains an outcome with τ < k."""
    F = space.filtration
    for k in range(1, space.horizon + 1):
        for a, atom in enumerate(F.atoms(k - 1)):
            if len(F.children(k - 1, a)) > 1 and any(tau[i] < k for i in atom):
                return True
    return False
