"""Small exact linear algebra over the rationals.

Matrices are lists of rows.  Only what the block solves need: reduced row
echelon form, rank, a minimal-norm solution operator and kernel dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

from .space import ONE, ZERO, Rational


def rref(rows: list[list], ncols: int | None = None):
    """Reduced row echelon form of a copy of ``rows``; returns (matrix, pivot columns).

    Pivoting stops at column ``ncols`` so augmented columns are carried along.
    """
    A = [[Rational(v) for v in r] for r in rows]
    if not A:
        return A, []
    width = len(A[0]) if ncols is None else ncols
    pivots = []
    r = 0
    for c in range(width):
        p = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = ONE / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    return A, pivots


def rank(rows: list[list]) -> int:
    return len(rref(rows)[1])


def matmul(A, B):
    if not A or not B:
        return [[ZERO] * (len(B[0]) if B else 0) for _ in A]
    cols = list(zip(*B))
    return [[sum((a * b for a, b in zip(row, col)), ZERO) for col in cols] for row in A]


def transpose(A):
    return [list(c) for c in zip(*A)]


@dataclass
class LinearSolver:
    """Minimal-norm solution operator for A x = b.

    ``x = operator @ b`` solves the system whenever it is consistent;
    consistency is checked by ``residual``.
    """

    A: list
    operator: list
    nrows: int
    ncols: int
    rank: int

    @property
    def nullity(self) -> int:
        return self.ncols - self.rank

    def solve(self, b: list) -> list:
        return [sum((o * v for o, v in zip(row, b)), ZERO) for row in self.operator]

    def residual(self, x: list, b: list) -> list:
        return [sum((a * v for a, v in zip(row, x)), ZERO) - bi for row, bi in zip(self.A, b)]


def min_norm_solver(A: list[list], ncols: int) -> LinearSolver:
    """Build x = Aᵀ y with (A Aᵀ) y = b, the least-norm solution of A x = b."""
    m = len(A)
    if m == 0:
        return LinearSolver([], [[ZERO] * 0 for _ in range(ncols)], 0, ncols, 0)
    A = [[Rational(v) for v in r] for r in A]
    AAt = matmul(A, transpose(A))
    aug = [row + [ONE if i == j else ZERO for j in range(m)] for i, row in enumerate(AAt)]
    R, pivots = rref(aug, ncols=m)
    # y = Y b with free variables set to zero
    Y = [[ZERO] * m for _ in range(m)]
    for r, c in enumerate(pivots):
        Y[c] = R[r][m:]
    op = matmul(transpose(A), Y)
    return LinearSolver(A, op, m, ncols, len(pivots))
