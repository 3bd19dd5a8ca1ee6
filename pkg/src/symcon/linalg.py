"""Linear algebra helpers: exact rational routines and float counterparts.

The decision algorithm classifies quadratic forms by sign, which is brittle
in floating point, so whenever the data is rational the rank, kernel and
signature computations run over ``fractions.Fraction`` exactly.  Floating
point versions (SVD rank, least-squares span membership, eigenvalue
signature) back the tolerance-based contracts and non-polynomial systems.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------------------
# exact rational routines (matrices are lists of lists of Fraction)

def frac_matrix(rows) -> list:
    return [[Fraction(x) for x in row] for row in rows]


def mat_rank(rows: list) -> int:
    """Rank over the rationals by Gaussian elimination."""
    M = [row[:] for row in rows]
    n_rows = len(M)
    n_cols = len(M[0]) if n_rows else 0
    rank = 0
    for col in range(n_cols):
        piv = None
        for r in range(rank, n_rows):
            if M[r][col] != 0:
                piv = r
                break
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        pv = M[rank][col]
        for r in range(rank + 1, n_rows):
            if M[r][col] != 0:
                f = M[r][col] / pv
                for c in range(col, n_cols):
                    M[r][c] -= f * M[rank][c]
        rank += 1
        if rank == n_rows:
            break
    return rank


def mat_solve(A: list, b: list):
    """Solve the square system A x = b exactly; None when A is singular."""
    n = len(A)
    M = [A[r][:] + [Fraction(b[r])] for r in range(n)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if M[r][col] != 0:
                piv = r
                break
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        pv = M[col][col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / pv
                for c in range(col, n + 1):
                    M[r][c] -= f * M[col][c]
    return [M[r][n] / M[r][r] for r in range(n)]


def mat_nullspace(rows: list) -> list:
    """Basis of the exact kernel of a (possibly rectangular) matrix."""
    M = [row[:] for row in rows]
    n_rows = len(M)
    n_cols = len(M[0]) if n_rows else 0
    pivots = []
    r = 0
    for col in range(n_cols):
        piv = None
        for i in range(r, n_rows):
            if M[i][col] != 0:
                piv = i
                break
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        pv = M[r][col]
        M[r] = [x / pv for x in M[r]]
        for i in range(n_rows):
            if i != r and M[i][col] != 0:
                f = M[i][col]
                M[i] = [x - f * y for x, y in zip(M[i], M[r])]
        pivots.append(col)
        r += 1
        if r == n_rows:
            break
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n_cols
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -M[i][fc]
        basis.append(v)
    return basis


def mat_in_span(vectors: list, v: list) -> bool:
    """Exact span membership: rank unchanged after appending v."""
    if not vectors:
        return all(x == 0 for x in v)
    return mat_rank(vectors) == mat_rank(vectors + [v])


def mat_signature(A: list) -> tuple:
    """Signature (pos, neg, zero) of a symmetric rational matrix.

    Congruence diagonalization: symmetric row/column elimination, with the
    usual row+column addition trick when all remaining diagonals vanish.
    Exact, no square roots needed (Sylvester's law of inertia).
    """
    n = len(A)
    M = [row[:] for row in A]
    pos = neg = zero = 0

    def add_rowcol(k: int, l: int, f: Fraction):
        for c in range(n):
            M[k][c] += f * M[l][c]
        for r in range(n):
            M[r][k] += f * M[r][l]

    def swap_rowcol(k: int, l: int):
        M[k], M[l] = M[l], M[k]
        for r in range(n):
            M[r][k], M[r][l] = M[r][l], M[r][k]

    for k in range(n):
        if M[k][k] == 0:
            swapped = False
            for l in range(k + 1, n):
                if M[l][l] != 0:
                    swap_rowcol(k, l)
                    swapped = True
                    break
            if not swapped:
                off = None
                for l in range(k + 1, n):
                    if M[k][l] != 0:
                        off = l
                        break
                if off is None:
                    zero += 1
                    continue
                add_rowcol(k, off, Fraction(1))
        piv = M[k][k]
        if piv > 0:
            pos += 1
        else:
            neg += 1
        for i in range(k + 1, n):
            if M[i][k] != 0:
                add_rowcol(i, k, -M[i][k] / piv)
    return pos, neg, zero


# ---------------------------------------------------------------------------
# floating point routines

def float_matrix(rows) -> np.ndarray:
    return np.asarray([[float(x) for x in row] for row in rows], dtype=np.float64)


def float_rank(M: np.ndarray, tol: float = 1e-9) -> int:
    """Numeric rank: singular values above tol relative to the largest."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def span_residual(vectors: np.ndarray, v: np.ndarray) -> float:
    """Relative least-squares residual of v against the span of the rows.

    Normalized by the larger of ||v|| and the spanning set's largest
    singular value, so a v that is mere rounding noise at the scale of the
    spanning vectors counts as inside the span."""
    v = np.asarray(v, dtype=np.float64)
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return 0.0
    B = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if B.size == 0:
        return 1.0
    smax = float(np.linalg.svd(B, compute_uv=False)[0])
    x, *_ = np.linalg.lstsq(B.T, v, rcond=None)
    return float(np.linalg.norm(B.T @ x - v) / max(vnorm, smax))


def float_in_span(vectors, v, tol: float = 1e-8) -> bool:
    return span_residual(vectors, v) < tol


def float_signature(A: np.ndarray, tol: float = 1e-9) -> tuple:
    """Signature (pos, neg, zero) from eigenvalues, relative threshold."""
    A = np.asarray(A, dtype=np.float64)
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    scale = max(np.max(np.abs(w)), 1.0) if w.size else 1.0
    pos = int(np.sum(w > tol * scale))
    neg = int(np.sum(w < -tol * scale))
    return pos, neg, len(w) - pos - neg
