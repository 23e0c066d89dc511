"""Exact calculus on a finite filtered probability space.

Processes are numpy object arrays of exact rationals with shape
``(..., T + 1, n_outcomes)``: time on the second-to-last axis, outcomes on
the last one.  Leading axes carry batches of processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

try:
    from gmpy2 import mpq as Rational
except ImportError:  # pragma: no cover
    Rational = Fraction

ZERO = Rational(0)
ONE = Rational(1)


def rational(x) -> Rational:
    """Convert an int, Fraction, ``(num, den)`` pair or numeric string to a rational."""
    if isinstance(x, tuple):
        return Rational(int(x[0]), int(x[1]))
    if isinstance(x, float):
        raise TypeError("floats are not accepted where exact rationals are required")
    if isinstance(x, Fraction):
        return Rational(x.numerator, x.denominator)
    return Rational(x)


def rational_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    flat_in, flat_out = arr.reshape(-1), out.reshape(-1)
    for i, v in enumerate(flat_in):
        flat_out[i] = rational(v)
    return out


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


def ones(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ONE)
    return out


def indicator(mask) -> np.ndarray:
    """Boolean mask to a rational 0/1 array."""
    return np.where(np.asarray(mask, dtype=bool), ONE, ZERO).astype(object)


def safe_div(num, den) -> np.ndarray:
    """Elementwise ``num / den`` with 0 wherever ``den == 0``."""
    num, den = np.broadcast_arrays(np.asarray(num, dtype=object), np.asarray(den, dtype=object))
    nz = den != 0
    out = zeros(num.shape)
    out[nz] = num[nz] / den[nz]
    return out


class ValidationError(ValueError):
    """Raised when an input violates a structural contract."""


@dataclass(frozen=True)
class _Level:
    order: np.ndarray
    starts: np.ndarray
    atom_of: np.ndarray
    atoms: tuple


class Filtration:
    """A refining sequence of partitions of ``range(n_outcomes)``.

    Atoms at each time are stored sorted by their smallest outcome index, so
    atom ids are deterministic.
    """

    def __init__(self, partitions: Sequence[Sequence[Sequence[int]]], n_outcomes: int):
        self.n_outcomes = n_outcomes
        levels = []
        for n, part in enumerate(partitions):
            atoms = tuple(sorted((tuple(sorted(int(i) for i in a)) for a in part), key=lambda a: a[0] if a else -1))
            atom_of = np.full(n_outcomes, -1, dtype=np.intp)
            for j, a in enumerate(atoms):
                if not a:
                    raise ValidationError(f"time {n}: empty atom")
                for i in a:
                    if not 0 <= i < n_outcomes:
                        raise ValidationError(f"time {n}: outcome index {i} out of range")
                    if atom_of[i] != -1:
                        raise ValidationError(f"time {n}: outcome {i} appears in two atoms")
                    atom_of[i] = j
            missing = np.flatnonzero(atom_of == -1)
            if missing.size:
                raise ValidationError(f"time {n}: outcome {int(missing[0])} is in no atom")
            order = np.fromiter((i for a in atoms for i in a), dtype=np.intp, count=n_outcomes)
            sizes = [len(a) for a in atoms]
            starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.intp)
            levels.append(_Level(order, starts, atom_of, atoms))
        self._levels = levels
        for n in range(len(levels) - 1):
            coarse, fine = levels[n].atom_of, levels[n + 1].atom_of
            for a in levels[n + 1].atoms:
                if len({int(coarse[i]) for i in a}) != 1:
                    raise ValidationError(f"partition at time {n + 1} does not refine time {n}")
        self._mass_cache: dict[int, tuple] = {}

    @property
    def horizon(self) -> int:
        return len(self._levels) - 1

    def atoms(self, n: int) -> tuple:
        return self._levels[n].atoms

    def atom_of(self, n: int) -> np.ndarray:
        return self._levels[n].atom_of

    def atom_id(self, n: int, outcome: int) -> int:
        return int(self._levels[n].atom_of[outcome])

    def children(self, n: int, atom: int) -> list[int]:
        """Ids of the time-``n + 1`` atoms inside atom ``atom`` of time ``n``."""
        fine = self._levels[n + 1]
        return sorted({int(fine.atom_of[i]) for i in self._levels[n].atoms[atom]})

    def atom_sums(self, X: np.ndarray, n: int) -> np.ndarray:
        lvl = self._levels[n]
        return np.add.reduceat(X[..., lvl.order], lvl.starts, axis=-1)

    def atom_mass(self, n: int, weights: np.ndarray) -> np.ndarray:
        key = id(weights)
        hit = self._mass_cache.get(key)
        if hit is None or hit[0] is not weights:
            masses = [self.atom_sums(weights, k) for k in range(len(self._levels))]
            hit = (weights, masses)
            self._mass_cache[key] = hit
        return hit[1][n]

    def expect(self, X: np.ndarray, n: int, weights: np.ndarray) -> np.ndarray:
        """E[X | atoms of time n] under ``weights``; 0 on null atoms."""
        lvl = self._levels[n]
        mass = self.atom_mass(n, weights)
        sums = self.atom_sums(X * weights, n)
        if all(m != 0 for m in mass):
            avg = sums / mass
        else:
            avg = safe_div(sums, np.broadcast_to(mass, sums.shape))
        return avg[..., lvl.atom_of]

    def constant_on_atoms(self, row: np.ndarray, n: int):
        """First ``(atom, i, j)`` where ``row`` differs inside an atom of time n, else None."""
        row = np.asarray(row)
        lvl = self._levels[n]
        vals = row[..., lvl.order]
        rep = np.repeat(lvl.starts, np.diff(np.append(lvl.starts, len(lvl.order))))
        bad = vals != vals[..., rep]
        if not np.any(bad):
            return None
        pos = np.argwhere(bad)[0]
        k = int(pos[-1])
        atom = int(np.searchsorted(lvl.starts, k, side="right") - 1)
        return atom, int(lvl.order[lvl.starts[atom]]), int(lvl.order[k])

    def same_as(self, other: "Filtration") -> bool:
        return all(a.atoms == b.atoms for a, b in zip(self._levels, other._levels)) and len(
            self._levels
        ) == len(other._levels)

    def refines(self, other: "Filtration") -> bool:
        """True when every atom of ``self`` sits inside an atom of ``other`` at each time."""
        for mine, theirs in zip(self._levels, other._levels):
            for a in mine.atoms:
                if len({int(theirs.atom_of[i]) for i in a}) != 1:
                    return False
        return True


class FiniteFilteredSpace:
    """Outcomes, exact probabilities and the base filtration."""

    def __init__(self, outcomes: Sequence[str], probs, horizon: int, partitions):
        self.outcomes = tuple(str(o) for o in outcomes)
        self.probs = rational_array(probs)
        n = len(self.outcomes)
        if horizon < 1:
            raise ValidationError("horizon must be at least 1")
        if self.probs.shape != (n,):
            raise ValidationError("one probability per outcome is required")
        if any(p <= 0 for p in self.probs):
            raise ValidationError("probabilities must be strictly positive")
        if sum(self.probs, ZERO) != 1:
            raise ValidationError("probabilities must sum to exactly 1")
        if len(partitions) != horizon + 1:
            raise ValidationError(f"expected {horizon + 1} partitions, got {len(partitions)}")
        self.horizon = horizon
        self.filtration = Filtration(partitions, n)

    @property
    def n(self) -> int:
        return len(self.outcomes)

    def labels(self, indices) -> list[str]:
        return [self.outcomes[i] for i in indices]


# --- conditional expectations and projections -------------------------------


def _weights(space: FiniteFilteredSpace, weights):
    return space.probs if weights is None else weights


def cond_expect(space, X, n, filtration=None, weights=None) -> np.ndarray:
    """E[X | atoms at time n] as an outcome vector (batched over leading axes)."""
    filt = filtration or space.filtration
    if not 0 <= n <= filt.horizon:
        raise ValidationError(f"time {n} outside 0..{filt.horizon}")
    return filt.expect(np.asarray(X, dtype=object), n, _weights(space, weights))


def increments(X: np.ndarray) -> np.ndarray:
    """ΔX with row 0 set to 0."""
    d = zeros(X.shape)
    d[..., 1:, :] = X[..., 1:, :] - X[..., :-1, :]
    return d


def cumulate(dX: np.ndarray, start=None) -> np.ndarray:
    """Inverse of ``increments``: running sums of rows 1.. added to ``start`` (row 0)."""
    out = np.empty(dX.shape, dtype=object)
    out[..., 0, :] = ZERO if start is None else start
    for k in range(1, dX.shape[-2]):
        out[..., k, :] = out[..., k - 1, :] + dX[..., k, :]
    return out


def optional_projection(space, X, filtration=None, weights=None) -> np.ndarray:
    filt = filtration or space.filtration
    w = _weights(space, weights)
    out = np.empty(X.shape, dtype=object)
    for n in range(X.shape[-2]):
        out[..., n, :] = filt.expect(X[..., n, :], n, w)
    return out


def predictable_projection(space, X, filtration=None, weights=None) -> np.ndarray:
    filt = filtration or space.filtration
    w = _weights(space, weights)
    out = np.empty(X.shape, dtype=object)
    out[..., 0, :] = filt.expect(X[..., 0, :], 0, w)
    for n in range(1, X.shape[-2]):
        out[..., n, :] = filt.expect(X[..., n, :], n - 1, w)
    return out


def dual_optional_projection(space, V, filtration=None, weights=None) -> np.ndarray:
    """Running sum of E[ΔV_n | time n]; V must be nondecreasing."""
    dV = increments(V)
    if np.any(dV[..., 1:, :] < 0) or np.any(V[..., 0, :] < 0):
        raise ValidationError("dual optional projection needs a nonnegative nondecreasing process")
    filt = filtration or space.filtration
    w = _weights(space, weights)
    out = np.empty(V.shape, dtype=object)
    out[..., 0, :] = filt.expect(V[..., 0, :], 0, w)
    for n in range(1, V.shape[-2]):
        out[..., n, :] = out[..., n - 1, :] + filt.expect(dV[..., n, :], n, w)
    return out


def dual_predictable_projection(space, V, filtration=None, weights=None) -> np.ndarray:
    """Compensator: running sum of E[ΔV_n | time n-1]."""
    filt = filtration or space.filtration
    w = _weights(space, weights)
    dV = increments(V)
    out = np.empty(V.shape, dtype=object)
    out[..., 0, :] = filt.expect(V[..., 0, :], 0, w)
    for n in range(1, V.shape[-2]):
        out[..., n, :] = out[..., n - 1, :] + filt.expect(dV[..., n, :], n - 1, w)
    return out


# --- structural checks -------------------------------------------------------


@dataclass
class MartingaleReport:
    ok: bool
    kind: str = "martingale"  # or "not-adapted" / "not-martingale"
    n: int | None = None
    atom: tuple | None = None
    lhs: object = None
    rhs: object = None
    batch_index: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def first_nonadapted(filt: Filtration, X: np.ndarray, shift: int = 0):
    """First ``(n, atom, i, j)`` where row n is not constant on time-(n - shift) atoms."""
    for n in range(X.shape[-2]):
        m = max(n - shift, 0)
        hit = filt.constant_on_atoms(X[..., n, :], m)
        if hit is not None:
            return n, filt.atoms(m)[hit[0]], hit[1], hit[2]
    return None


def is_adapted(space, X, filtration=None) -> bool:
    return first_nonadapted(filtration or space.filtration, np.asarray(X)) is None


def is_predictable(space, X, filtration=None) -> bool:
    return first_nonadapted(filtration or space.filtration, np.asarray(X), shift=1) is None


def is_martingale(space, X, filtration=None, weights=None, *, direction: str = "eq") -> MartingaleReport:
    """Exact check E[X_n | time n-1] = X_{n-1} (``direction="le"`` for supermartingales).

    Null atoms under ``weights`` are skipped.
    """
    filt = filtration or space.filtration
    w = _weights(space, weights)
    X = np.asarray(X, dtype=object)
    bad = first_nonadapted(filt, X)
    if bad is not None:
        n, atom, i, j = bad
        return MartingaleReport(False, "not-adapted", n, atom, None, None)
    for n in range(1, X.shape[-2]):
        lhs = filt.expect(X[..., n, :], n - 1, w)
        rhs = X[..., n - 1, :]
        live = np.broadcast_to(filt.atom_mass(n - 1, w)[filt.atom_of(n - 1)] != 0, lhs.shape)
        fail = (lhs > rhs) if direction == "le" else (lhs != rhs)
        fail = fail & live
        if np.any(fail):
            pos = tuple(int(p) for p in np.argwhere(fail)[0])
            i = pos[-1]
            atom = filt.atoms(n - 1)[filt.atom_id(n - 1, i)]
            return MartingaleReport(False, "not-martingale", n, atom, lhs[pos], rhs[pos], pos[:-1])
    return MartingaleReport(True)


# --- integrals, brackets, exponentials ---------------------------------------


def stoch_integral(H, X, space=None, filtration=None) -> np.ndarray:
    """H ⊙ X: running sum of H_k ΔX_k with value 0 at time 0.

    When ``space`` is given, H is checked to be predictable for the filtration.
    """
    H = np.asarray(H, dtype=object)
    X = np.asarray(X, dtype=object)
    if space is not None:
        filt = filtration or space.filtration
        bad = first_nonadapted(filt, np.broadcast_to(H, X.shape[-2:]) if H.ndim < 2 else H, shift=1)
        if bad is not None:
            raise ValidationError(f"integrand not predictable at time {bad[0]} on atom {bad[1]}")
    dY = H * increments(X)
    dY[..., 0, :] = ZERO
    return cumulate(dY)


def quadratic_covariation(X, Y) -> np.ndarray:
    dX, dY = increments(np.asarray(X, dtype=object)), increments(np.asarray(Y, dtype=object))
    return cumulate(dX * dY)


def stoch_exponential(L) -> np.ndarray:
    """𝓔(L)_n = Π_{k ≤ n} (1 + ΔL_k), 𝓔(L)_0 = 1."""
    dL = increments(np.asarray(L, dtype=object))
    out = np.empty(dL.shape, dtype=object)
    out[..., 0, :] = ONE
    for k in range(1, dL.shape[-2]):
        out[..., k, :] = out[..., k - 1, :] * (1 + dL[..., k, :])
    return out


def stopped(X: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """X^τ: X_{n ∧ τ}."""
    T1 = X.shape[-2]
    idx = np.minimum(np.arange(T1)[:, None], np.asarray(tau)[None, :])
    return np.take_along_axis(X, np.broadcast_to(idx, X.shape), axis=-2)


@dataclass
class MultiplicativeDecomposition:
    N: np.ndarray
    V: np.ndarray
    Z0: object = ONE
    drift: np.ndarray = field(default=None, repr=False)


def multiplicative_decomposition(space, Z, filtration=None, weights=None) -> MultiplicativeDecomposition:
    """Write a positive supermartingale as Z_0 𝓔(N) 𝓔(-V).

    Doob-decompose Z = Z_0 + M - A, then ΔV = ΔA / Z_{n-1} and
    ΔN = ΔM / (Z_{n-1} (1 - ΔV)).
    """
    filt = filtration or space.filtration
    w = _weights(space, weights)
    Z = np.asarray(Z, dtype=object)
    if np.any(Z <= 0):
        raise ValidationError("multiplicative decomposition needs a strictly positive process")
    rep = is_martingale(space, Z, filt, w, direction="le")
    if not rep.ok:
        raise ValidationError(f"not a supermartingale: {rep.kind} at time {rep.n} on atom {rep.atom}")
    dN, dV = zeros(Z.shape), zeros(Z.shape)
    dA = zeros(Z.shape)
    for n in range(1, Z.shape[-2]):
        prev = Z[..., n - 1, :]
        cond = filt.expect(Z[..., n, :], n - 1, w)
        null = filt.atom_mass(n - 1, w)[filt.atom_of(n - 1)] == 0
        if np.any(null):
            cond = np.where(null, prev, cond)
        dA[..., n, :] = prev - cond
        dM = Z[..., n, :] - cond
        dV[..., n, :] = dA[..., n, :] / prev
        dN[..., n, :] = dM / (prev * (1 - dV[..., n, :]))
    return MultiplicativeDecomposition(cumulate(dN), cumulate(dV), Z[..., 0, :], cumulate(dA))
