"""Decision procedure for systems with one input fewer than dimensions.

Given m = n-1 independent input fields and configuration accessibility at
the base point, small-time local configuration controllability holds if and
only if some invertible change of inputs makes every transformed diagonal
product <Y'_j : Y'_j>(q0) land in the input span D_q0.  Expanding all
degree-2 products in the frame {Y_1(q0), ..., Y_m(q0), P(q0)} -- where P is
a chosen product escaping D_q0 -- reduces that requirement to finding an
invertible B with diag(B A B^T) = 0 for the symmetric coefficient matrix A.

The trichotomy on each stage's A drives the procedure:

* A zero or indefinite: an isotropic basis exists; build B (two
  constructions: the pivot/back-substitution scheme and an eigenvector
  one), verify it, report success.
* A definite: no single direction can be zeroed; emit a definiteness
  certificate -- the system is not controllable.
* A semidefinite nonzero: kernel vectors of A give fields whose products
  all fall back into D_q0; move them out of play, pick a fresh escaping
  product among the remaining fields, and recurse (at most m times).

Classification runs in exact rational arithmetic whenever the system data
is polynomial with a rational base point; the constructed B may be
floating point and is always gated by `verify_basis`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from . import linalg
from .accessibility import sufficient_conditions_check
from .geometry import (
    MechanicalSystem,
    VectorField,
    evaluate_fields,
    linear_combination,
    symmetric_product,
)

ZERO_TOL = 1e-9
RESIDUAL_TOL = 1e-8
RANK_TOL = 1e-9
DET_TOL = 1e-10


class BasisSearchError(Exception):
    pass


# ---------------------------------------------------------------------------
# generic symmetric-matrix helpers (entries all Fraction => exact path)

def _is_exact(rows) -> bool:
    return all(isinstance(x, (Fraction, int)) for row in rows for x in row)


def _as_float_matrix(rows) -> np.ndarray:
    return np.asarray([[float(x) for x in row] for row in rows], dtype=np.float64)


def signature_of(rows, zero_tol: float = ZERO_TOL) -> tuple:
    """(pos, neg, zero) inertia; exact over the rationals when possible."""
    if _is_exact(rows):
        return linalg.mat_signature(linalg.frac_matrix(rows))
    return linalg.float_signature(_as_float_matrix(rows), zero_tol)


def classify_form(rows, zero_tol: float = ZERO_TOL) -> tuple:
    """Classify a symmetric matrix: 'zero' | 'definite' | 'semidefinite'
    (nonzero, singular, one-signed) | 'indefinite'.  Returns (kind, sig)."""
    p, q, z = signature_of(rows, zero_tol)
    if p == 0 and q == 0:
        kind = "zero"
    elif p > 0 and q > 0:
        kind = "indefinite"
    elif z == 0:
        kind = "definite"
    else:
        kind = "semidefinite"
    return kind, (p, q, z)


def kernel_rows(rows, zero_tol: float = ZERO_TOL) -> list:
    """Basis of the kernel; exact rational rows when the input is exact."""
    if _is_exact(rows):
        return linalg.mat_nullspace(linalg.frac_matrix(rows))
    A = _as_float_matrix(rows)
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    scale = max(np.max(np.abs(w)), 1.0)
    return [list(V[:, i]) for i in range(len(w)) if abs(w[i]) <= zero_tol * scale]


def complete_to_basis(rows: list, size: int) -> list:
    """Complete the given independent rows to a square invertible matrix by
    Gram-Schmidt over the standard basis (no normalization, stays exact)."""
    exact = _is_exact(rows) if rows else True
    ortho = [list(r) for r in rows]
    out = [list(r) for r in rows]

    def project_out(v, basis):
        for b in basis:
            bb = sum(x * x for x in b)
            if bb == 0:
                continue
            vb = sum(x * y for x, y in zip(v, b))
            f = vb / bb
            v = [x - f * y for x, y in zip(v, b)]
        return v

    # orthogonalize the seed rows among themselves for stable projections
    basis = []
    for r in ortho:
        r2 = project_out(r, basis)
        if any(x != 0 for x in r2) if exact else np.linalg.norm(r2) > 1e-12:
            basis.append(r2)
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0
    for i in range(size):
        if len(out) == size:
            break
        e = [zero] * size
        e[i] = one
        r2 = project_out(e, basis)
        nonzero = any(x != 0 for x in r2) if exact else np.linalg.norm(r2) > 1e-9
        if nonzero:
            basis.append(r2)
            out.append(e)
    if len(out) != size:
        raise BasisSearchError("could not complete rows to an invertible matrix")
    return out


# ---------------------------------------------------------------------------
# the pivot recursion on coefficient matrices

@dataclass(frozen=True)
class RadicandStage:
    index_set: tuple  # original row/column labels, ascending
    matrix: tuple     # entries over index_set, as nested tuple
    pivot: Optional[int]  # label chosen at this stage (None at terminals)

    def entry(self, k: int, l: int):
        i, j = self.index_set.index(k), self.index_set.index(l)
        return self.matrix[i][j]


@dataclass(frozen=True)
class RadicandSequence:
    stages: tuple           # of RadicandStage
    pivots: tuple           # labels s_1, s_2, ... in order
    terminal: str           # "pair" | "all_diagonals_zero" | "singleton"
    discriminant: Optional[object] = None   # for "pair": a_pq^2 - a_pp*a_qq
    offdiag_nonzero: Optional[bool] = None  # for "all_diagonals_zero"


def _stage_scale(matrix) -> float:
    vals = [abs(float(x)) for row in matrix for x in row]
    return max(max(vals), 1e-300) if vals else 1.0


def _is_zero(x, exact: bool, scale: float, zero_tol: float) -> bool:
    if exact:
        return x == 0
    return abs(float(x)) <= zero_tol * scale


def radicand_recursion(rows, zero_tol: float = ZERO_TOL) -> RadicandSequence:
    """Run the pivot recursion
        a'_{kl} = a_{k s} a_{l s} - a_{s s} a_{kl}
    eliminating one index with nonzero diagonal per stage (smallest such
    index), until two indices remain, all diagonals vanish, or a single
    index is left.  Entries stay exact when the input is exact."""
    exact = _is_exact(rows)
    if exact:
        rows = linalg.frac_matrix(rows)
    m = len(rows)
    labels = list(range(m))
    cur = {(k, l): rows[k][l] for k in labels for l in labels}
    stages = []
    pivots = []
    while True:
        matrix = tuple(tuple(cur[(k, l)] for l in labels) for k in labels)
        scale = _stage_scale(matrix)
        piv = None
        for s in labels:
            if not _is_zero(cur[(s, s)], exact, scale, zero_tol):
                piv = s
                break
        if piv is None:
            stages.append(RadicandStage(tuple(labels), matrix, None))
            off = any(
                not _is_zero(cur[(k, l)], exact, scale, zero_tol)
                for i, k in enumerate(labels)
                for l in labels[i + 1:]
            )
            return RadicandSequence(
                tuple(stages), tuple(pivots), "all_diagonals_zero",
                offdiag_nonzero=off,
            )
        if len(labels) == 1:
            stages.append(RadicandStage(tuple(labels), matrix, None))
            return RadicandSequence(tuple(stages), tuple(pivots), "singleton")
        if len(labels) == 2:
            stages.append(RadicandStage(tuple(labels), matrix, piv))
            k, l = labels
            disc = cur[(k, l)] ** 2 - cur[(k, k)] * cur[(l, l)]
            return RadicandSequence(
                tuple(stages), tuple(pivots) + (piv,), "pair", discriminant=disc,
            )
        stages.append(RadicandStage(tuple(labels), matrix, piv))
        pivots.append(piv)
        rest = [k for k in labels if k != piv]
        nxt = {}
        for a, k in enumerate(rest):
            for l in rest[a:]:
                v = cur[(k, piv)] * cur[(l, piv)] - cur[(piv, piv)] * cur[(k, l)]
                nxt[(k, l)] = v
                nxt[(l, k)] = v
        cur = nxt
        labels = rest


def descarte_vector(rows, seq: RadicandSequence, zero_tol: float = ZERO_TOL):
    """Back-substitute through the recursion with every radicand at its
    double root.  At a zero terminal discriminant this yields coefficients
    C with A C = 0 (checked by the caller); None when not applicable."""
    if seq.terminal != "pair":
        return None
    exact = _is_exact(rows)
    m = len(rows)
    last = seq.stages[-1]
    p = last.pivot
    (q_,) = [k for k in last.index_set if k != p]
    one = Fraction(1) if exact else 1.0
    C = {q_: one}
    C[p] = -last.entry(p, q_) / last.entry(p, p)
    for stage in reversed(seq.stages[:-1]):
        s = stage.pivot
        tail = [k for k in stage.index_set if k != s]
        beta = sum(C[k] * stage.entry(k, s) for k in tail)
        C[s] = -beta / stage.entry(s, s)
    return [C[k] for k in range(m)]


# ---------------------------------------------------------------------------
# constructions of B with zero transformed diagonal

def isotropic_basis_eigen(rows, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Isotropic basis for a zero or indefinite symmetric matrix, built
    from scaled sums of positive/negative eigenvectors plus the kernel."""
    A = _as_float_matrix(rows)
    m = A.shape[0]
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    scale = max(np.max(np.abs(w)), 1.0) if m else 1.0
    pos = [i for i in range(m) if w[i] > zero_tol * scale]
    neg = [i for i in range(m) if w[i] < -zero_tol * scale]
    ker = [i for i in range(m) if abs(w[i]) <= zero_tol * scale]
    if not pos and not neg:
        return np.eye(m)
    if not pos or not neg:
        raise BasisSearchError("matrix is definite or semidefinite: no isotropic basis")
    rowsB = []
    u0 = V[:, pos[0]] / math.sqrt(w[pos[0]])
    w0 = V[:, neg[0]] / math.sqrt(-w[neg[0]])
    for i in pos:
        rowsB.append(V[:, i] / math.sqrt(w[i]) + w0)
    for j in neg:
        rowsB.append(u0 - V[:, j] / math.sqrt(-w[j]))
    for k in ker:
        rowsB.append(V[:, k])
    return np.array(rowsB)


def _quad_eval(stage: RadicandStage, coords: dict) -> float:
    keys = [k for k in stage.index_set if k in coords]
    return float(
        sum(
            coords[k] * coords[l] * float(stage.entry(k, l))
            for k in keys for l in keys
        )
    )


def backsubstitution_basis(
    rows, seq: Optional[RadicandSequence] = None,
    zero_tol: float = ZERO_TOL, max_tries: int = 10,
) -> Optional[np.ndarray]:
    """The pivot-scheme construction: choose the deepest stage whose form
    can be made positive, then walk the quadratic formula back up, taking
    an exact root at the first stage.  Returns None when the scheme does
    not apply (definite matrices, or zero terminal discriminant)."""
    if seq is None:
        seq = radicand_recursion(rows, zero_tol)
    m = len(rows)
    A = _as_float_matrix(rows)
    scale = max(np.max(np.abs(A)), 1e-300)

    if seq.terminal == "singleton":
        return np.eye(m) if abs(A[0, 0]) <= zero_tol * scale else None

    # find the stage index from which free choices can start
    start = None  # (stage_idx, mode)
    last = seq.stages[-1]
    if seq.terminal == "pair":
        disc = float(seq.discriminant)
        a_pp = float(last.entry(last.pivot, last.pivot))
        dscale = max(_stage_scale(last.matrix) ** 2, 1e-300)
        if disc > zero_tol * dscale:
            start = (len(seq.stages) - 1, "pair_two_roots")
        elif disc < -zero_tol * dscale and a_pp > 0:
            start = (len(seq.stages) - 1, "positive_everywhere")
        elif disc < -zero_tol * dscale:
            # negative everywhere below; climb while pivots stay negative
            for idx in range(len(seq.stages) - 2, -1, -1):
                st = seq.stages[idx]
                if float(st.entry(st.pivot, st.pivot)) > 0:
                    start = (idx, "positive_everywhere")
                    break
            if start is None:
                return None  # definite: every radicand negative
        else:
            return None  # zero discriminant: kernel reduction territory
    else:  # all_diagonals_zero
        st = seq.stages[-1]
        if not seq.offdiag_nonzero:
            return None if len(st.index_set) < m else np.eye(m)
        if len(seq.stages) == 1:
            # every diagonal of A itself vanishes: the identity already
            # satisfies diag(B A B^T) = 0
            return np.eye(m)
        start = (len(seq.stages) - 1, "offdiag")

    start_idx, mode = start
    if mode == "positive_everywhere" and start_idx == 0:
        return None  # the form itself is one-signed: no isotropic basis
    rng = np.random.RandomState(987154)
    for attempt in range(max_tries):
        B = np.zeros((m, m))
        ok = True
        for j in range(m):
            coords: dict = {}
            st = seq.stages[start_idx]
            if mode == "pair_two_roots":
                p = st.pivot
                (q_,) = [k for k in st.index_set if k != p]
                a_pp = float(st.entry(p, p))
                a_pq = float(st.entry(p, q_))
                a_qq = float(st.entry(q_, q_))
                disc = a_pq * a_pq - a_pp * a_qq
                if start_idx == 0:
                    # the pair IS the first stage: each row sits exactly on
                    # one of the two isotropic lines (alternate for det != 0)
                    bq = 1.0 + j // 2
                    sgn = 1.0 if j % 2 == 0 else -1.0
                    coords[q_] = bq
                    coords[p] = bq * (-a_pq + sgn * math.sqrt(disc)) / a_pp
                else:
                    bq = 1.0 + j + attempt * 0.37 + rng.uniform(0, 0.25)
                    r1 = bq * (-a_pq - math.sqrt(disc)) / a_pp
                    r2 = bq * (-a_pq + math.sqrt(disc)) / a_pp
                    lo, hi = min(r1, r2), max(r1, r2)
                    span = max(hi - lo, 1.0)
                    if a_pp > 0:
                        bp = hi + span * (0.5 + 0.31 * j + rng.uniform(0, 0.2))
                    else:
                        t = 0.25 + 0.5 * ((j + attempt) % 3) / 3 + rng.uniform(0, 0.05)
                        bp = lo + t * (hi - lo)
                    coords[q_] = bq
                    coords[p] = bp
            elif mode == "positive_everywhere":
                for t, k in enumerate(st.index_set):
                    coords[k] = rng.uniform(-1, 1) + (1.0 if (j + t) % 2 == 0 else -1.0) * (1 + 0.5 * j)
                if _quad_eval(st, coords) <= 0:
                    # definite-positive stage form: any nonzero point works in
                    # exact arithmetic; retry this row with new randomness
                    for t, k in enumerate(st.index_set):
                        coords[k] = rng.uniform(0.5, 2.0) * (1 + j + t)
            else:  # offdiag: all diagonals vanish, some a_kl != 0
                kl = None
                for a, k in enumerate(st.index_set):
                    for l in st.index_set[a + 1:]:
                        if abs(float(st.entry(k, l))) > zero_tol * _stage_scale(st.matrix):
                            kl = (k, l)
                            break
                    if kl:
                        break
                k, l = kl
                akl = float(st.entry(k, l))
                for t, kk in enumerate(st.index_set):
                    coords[kk] = rng.uniform(-0.05, 0.05) * (1 + j + t)
                coords[l] = 1.0 + 0.5 * j + rng.uniform(0, 0.25)
                # make the dominant cross term positive and large
                coords[k] = (10.0 + 3 * j) * (1.0 if akl > 0 else -1.0)
            if (
                start_idx > 0
                and mode != "positive_everywhere"
                and _quad_eval(st, coords) <= 0
            ):
                ok = False
                break
            # ascend: stages start_idx-1 .. 0
            for idx in range(start_idx - 1, -1, -1):
                stg = seq.stages[idx]
                s = stg.pivot
                tail = [k for k in stg.index_set if k != s]
                alpha = float(stg.entry(s, s))
                beta = sum(coords[k] * float(stg.entry(k, s)) for k in tail)
                gamma = sum(
                    coords[k] * coords[l] * float(stg.entry(k, l))
                    for k in tail for l in tail
                )
                rad = beta * beta - alpha * gamma
                if rad < 0:
                    ok = False
                    break
                sqrt_rad = math.sqrt(rad)
                if idx > 0:
                    r1 = (-beta - sqrt_rad) / alpha
                    r2 = (-beta + sqrt_rad) / alpha
                    lo, hi = min(r1, r2), max(r1, r2)
                    span = max(hi - lo, 1.0)
                    if alpha > 0:
                        coords[s] = hi + span * (0.4 + 0.23 * j + rng.uniform(0, 0.2))
                    else:
                        t = 0.3 + 0.4 * ((j + idx) % 2) + rng.uniform(0, 0.05)
                        coords[s] = lo + t * (hi - lo)
                else:
                    sign = 1.0 if (j + attempt) % 2 == 0 else -1.0
                    coords[s] = (-beta + sign * sqrt_rad) / alpha
            if not ok:
                break
            for k, v in coords.items():
                B[j, k] = v
        if not ok:
            continue
        if abs(np.linalg.det(B)) <= 1e-9 * max(np.linalg.norm(B), 1.0) ** m:
            continue
        if np.max(np.abs(np.einsum("ij,jk,ik->i", B, A, B))) <= 1e-8 * max(scale, 1.0):
            return B
    return None


def _tidy_basis(B: np.ndarray, rows) -> np.ndarray:
    """Snap near-integer / near-zero entries, keeping the snap only when
    the zero-diagonal property and invertibility survive it."""
    A = _as_float_matrix(rows)
    scale = max(np.max(np.abs(A)), 1.0)
    snapped = B.copy()
    bmax = max(np.max(np.abs(B)), 1.0)
    near_int = np.abs(snapped - np.round(snapped)) < 1e-9 * bmax
    snapped[near_int] = np.round(snapped[near_int])
    if np.array_equal(snapped, B):
        return B
    diag = np.einsum("ij,jk,ik->i", snapped, A, snapped)
    if (
        np.max(np.abs(diag)) <= 1e-9 * scale * max(np.max(np.abs(snapped)), 1.0) ** 2
        and abs(np.linalg.det(snapped)) > 1e-10
    ):
        return snapped
    return B


def isotropic_basis(rows, zero_tol: float = ZERO_TOL) -> tuple:
    """Invertible B with diag(B A B^T) = 0 for zero/indefinite A.

    Tries the pivot back-substitution scheme first, falling back to the
    eigenvector construction.  Returns (B, construction_name)."""
    kind, _sig = classify_form(rows, zero_tol)
    if kind == "zero":
        return np.eye(len(rows)), "identity"
    if kind != "indefinite":
        raise BasisSearchError(f"no isotropic basis for a {kind} matrix")
    B = backsubstitution_basis(rows, zero_tol=zero_tol)
    if B is not None:
        return _tidy_basis(B, rows), "back-substitution"
    return _tidy_basis(isotropic_basis_eigen(rows, zero_tol), rows), "eigenvector"


@dataclass(frozen=True)
class FormBranch:
    """First-stage branch for a raw coefficient matrix."""

    branch: str          # "isotropic_basis" | "definite_certificate" | "kernel_reduction"
    signature: tuple
    B: Optional[tuple] = None
    construction: Optional[str] = None
    kernel: Optional[tuple] = None
    kernel_residual: Optional[float] = None
    eigenvalues: Optional[tuple] = None


def first_stage_branch(rows, zero_tol: float = ZERO_TOL) -> FormBranch:
    """Branch taken on a raw symmetric matrix, with its witness object."""
    kind, sig = classify_form(rows, zero_tol)
    A = _as_float_matrix(rows)
    eigs = tuple(float(x) for x in np.linalg.eigvalsh(0.5 * (A + A.T)))
    if kind in ("zero", "indefinite"):
        B, construction = isotropic_basis(rows, zero_tol)
        return FormBranch(
            branch="isotropic_basis", signature=sig,
            B=tuple(map(tuple, B)), construction=construction, eigenvalues=eigs,
        )
    if kind == "definite":
        return FormBranch(branch="definite_certificate", signature=sig, eigenvalues=eigs)
    ker = kernel_rows(rows, zero_tol)
    Kf = _as_float_matrix(ker)
    res = float(np.max(np.abs(Kf @ A))) if len(ker) else 0.0
    seq = radicand_recursion(rows, zero_tol)
    C = descarte_vector(rows, seq, zero_tol)
    ker_out = [list(map(float, r)) for r in ker]
    if C is not None:
        ker_out = [[float(x) for x in C]] + ker_out
        res = max(res, float(np.max(np.abs(np.asarray([float(x) for x in C]) @ A))))
    return FormBranch(
        branch="kernel_reduction", signature=sig,
        kernel=tuple(map(tuple, ker_out)), kernel_residual=res, eigenvalues=eigs,
    )


# ---------------------------------------------------------------------------
# symbolic side: base pairs, coefficient matrices, the staged decision

@dataclass(frozen=True)
class AllInsideDistribution:
    """Every degree-2 product of the working fields lies in the input span
    at the base point; the current basis already satisfies the conditions."""

    detail: str = "all degree-2 symmetric products lie in the input span at q0"


@dataclass(frozen=True)
class BasePair:
    """A pair (i, j), i != j, with <Y_i:Y_j>(q0) outside the input span.

    ``fields`` is the working basis (after the diagonal substitution
    Y_j <- Y_i + Y_j when only diagonal products escaped) and ``transform``
    maps the original inputs to it (rows of Fractions)."""

    i: int
    j: int
    fields: tuple
    transform: tuple
    product: VectorField
    substituted: bool = False
    note: str = ""


def _identity_rows(m: int) -> tuple:
    return tuple(
        tuple(Fraction(1) if r == c else Fraction(0) for c in range(m))
        for r in range(m)
    )


def _rows_matmul(A: tuple, B: tuple) -> tuple:
    """Exact (or mixed) matrix product of row-tuples."""
    n, k, c = len(A), len(B), len(B[0])
    return tuple(
        tuple(sum(A[r][t] * B[t][cc] for t in range(k)) for cc in range(c))
        for r in range(n)
    )


def _field_rows(fields: Sequence[VectorField], q0: ex.Point) -> tuple:
    rows, exact = evaluate_fields(list(fields), q0)
    return rows, exact


def _escapes_span(D_rows, v_row, exact: bool, rank_tol: float) -> bool:
    if exact:
        return linalg.mat_rank(list(D_rows)) < linalg.mat_rank(list(D_rows) + [v_row])
    M = _as_float_matrix(list(D_rows))
    M2 = _as_float_matrix(list(D_rows) + [v_row])
    return linalg.float_rank(M, rank_tol) < linalg.float_rank(M2, rank_tol)


def _select_pair_among(
    fields: Sequence[VectorField],
    active: Sequence[int],
    conn,
    q0: ex.Point,
    rank_tol: float = RANK_TOL,
):
    """Base-pair scan restricted to the active indices.

    Scans off-diagonal pairs in index order; when only diagonal products
    escape the span, substitutes Y_j <- Y_i + Y_j (first other active
    index) to create an off-diagonal witness.  Returns AllInsideDistribution
    when no active product escapes, and None when a diagonal escapes but no
    partner is available (single active field: terminal certificate case).
    """
    fields = list(fields)
    m = len(fields)
    D_rows, exact = _field_rows(fields, q0)
    products = {}
    for a, i in enumerate(active):
        for j in active[a:]:
            products[(i, j)] = symmetric_product(conn, fields[i], fields[j])
    escapes = {}
    for (i, j), P in products.items():
        rows, p_exact = _field_rows([P], q0)
        use_exact = exact and p_exact
        drows = D_rows if use_exact else [[float(x) for x in r] for r in D_rows]
        vrow = rows[0] if use_exact else [float(x) for x in rows[0]]
        escapes[(i, j)] = _escapes_span(drows, vrow, use_exact, rank_tol)
    for a, i in enumerate(active):
        for j in active[a + 1:]:
            if escapes[(i, j)]:
                return BasePair(
                    i=i, j=j, fields=tuple(fields),
                    transform=_identity_rows(m), product=products[(i, j)],
                )
    diag_escapers = [i for i in active if escapes[(i, i)]]
    if not diag_escapers:
        return AllInsideDistribution()
    i = diag_escapers[0]
    partners = [j for j in active if j != i]
    if not partners:
        return None
    j = partners[0]
    new_j = linear_combination([fields[i], fields[j]], [1, 1])
    new_fields = list(fields)
    new_fields[j] = new_j
    transform = [list(r) for r in _identity_rows(m)]
    transform[j][i] = Fraction(1)
    product = symmetric_product(conn, new_fields[i], new_fields[j])
    return BasePair(
        i=i, j=j, fields=tuple(new_fields),
        transform=tuple(tuple(r) for r in transform),
        product=product, substituted=True,
        note=f"substituted Y{j + 1} <- Y{i + 1} + Y{j + 1} "
             f"(only diagonal products escaped the span)",
    )


def select_base_pair(system: MechanicalSystem, q0: Optional[ex.Point] = None,
                     rank_tol: float = RANK_TOL):
    """Public base-pair selection over all inputs (first decision stage)."""
    q0 = q0 or system.q0
    sel = _select_pair_among(
        system.inputs, list(range(system.m)), system.connection, q0, rank_tol
    )
    if sel is None:
        raise BasisSearchError("no base pair available for a single input field")
    return sel


@dataclass(frozen=True)
class CoefficientMatrix:
    """Coefficients of each <Y_k:Y_l>(q0) along the base product in the
    frame {Y_1(q0), ..., Y_m(q0), P(q0)}; symmetric, with the base pair
    entry normalized to 1 by construction."""

    entries: tuple        # over the active index list
    active: tuple         # active labels (positions into the field list)
    base: tuple           # (i, j)
    exact: bool
    recombination_residual: float


def _coefficient_matrix_among(
    fields: Sequence[VectorField],
    active: Sequence[int],
    conn,
    q0: ex.Point,
    bp: BasePair,
    rank_tol: float = RANK_TOL,
) -> CoefficientMatrix:
    fields = list(fields)
    n = len(q0)
    rows, exact = _field_rows(list(fields) + [bp.product], q0)
    if not exact:
        rows = [[float(x) for x in r] for r in rows]
    frame_cols = rows  # frame matrix columns = field values + product value
    frame = [[frame_cols[c][r] for c in range(len(frame_cols))] for r in range(n)]
    k = len(active)
    entries = [[None] * k for _ in range(k)]
    max_res = 0.0
    frame_f = _as_float_matrix(frame)
    for a in range(k):
        for b in range(a, k):
            P = symmetric_product(conn, fields[active[a]], fields[active[b]])
            prow, p_exact = _field_rows([P], q0)
            if exact and p_exact:
                sol = linalg.mat_solve(
                    linalg.frac_matrix(frame), [Fraction(x) for x in prow[0]]
                )
                if sol is None:
                    raise BasisSearchError("frame is singular")
                coeff = sol[n - 1]
            else:
                try:
                    solf = np.linalg.solve(frame_f, np.asarray([float(x) for x in prow[0]]))
                except np.linalg.LinAlgError:
                    raise BasisSearchError("frame is numerically singular") from None
                coeff = float(solf[n - 1])
            # recombination residual (float, reported)
            vf = np.asarray([float(x) for x in prow[0]])
            if exact and p_exact:
                cf = np.asarray([float(x) for x in sol])
            else:
                cf = solf
            res = np.linalg.norm(frame_f @ cf - vf) / max(np.linalg.norm(vf), 1.0)
            max_res = max(max_res, float(res))
            entries[a][b] = coeff
            entries[b][a] = coeff
    return CoefficientMatrix(
        entries=tuple(tuple(r) for r in entries),
        active=tuple(active),
        base=(bp.i, bp.j),
        exact=exact and all(isinstance(x, Fraction) for r in entries for x in r),
        recombination_residual=max_res,
    )


def coefficient_matrix(
    system: MechanicalSystem, q0: Optional[ex.Point] = None,
    bp: Optional[BasePair] = None, rank_tol: float = RANK_TOL,
) -> CoefficientMatrix:
    """Public coefficient matrix for the first stage (all inputs active)."""
    q0 = q0 or system.q0
    if bp is None:
        sel = select_base_pair(system, q0, rank_tol)
        if isinstance(sel, AllInsideDistribution):
            raise BasisSearchError(
                "all products lie in the input span: no base pair, A is zero"
            )
        bp = sel
    return _coefficient_matrix_among(
        bp.fields, list(range(system.m)), system.connection, q0, bp, rank_tol
    )


# ---------------------------------------------------------------------------
# verdict objects

@dataclass(frozen=True)
class Certificate:
    """Witness of non-controllability: a one-signed quadratic form (or the
    single-input dimension criterion) blocking every change of basis."""

    kind: str
    stage: int
    matrix: Optional[tuple] = None
    eigenvalues: Optional[tuple] = None
    sign: Optional[int] = None
    detail: str = ""

    def is_definite(self, tol: float = ZERO_TOL) -> bool:
        if self.eigenvalues is None:
            return False
        scale = max(max(abs(e) for e in self.eigenvalues), 1.0)
        return all(e > tol * scale for e in self.eigenvalues) or all(
            e < -tol * scale for e in self.eigenvalues
        )


@dataclass(frozen=True)
class OpenCase:
    """Frame coefficients of the undecidable n - m = 2 configuration."""

    pair: tuple
    linear_coeffs: tuple
    a3: object
    a4: object

    @property
    def a3_sq_plus_4a4(self):
        return self.a3 * self.a3 + 4 * self.a4

    @property
    def blocking(self) -> bool:
        return float(self.a4) < 0 and float(self.a3_sq_plus_4a4) < 0


@dataclass(frozen=True)
class StageRecord:
    stage: int
    active: tuple
    base_pair: Optional[tuple]
    substitution: Optional[str]
    coefficient_matrix: Optional[CoefficientMatrix]
    signature: Optional[tuple]
    branch: str
    radicand: Optional[RadicandSequence] = None
    kernel: Optional[tuple] = None
    kernel_residual: Optional[float] = None
    construction: Optional[str] = None


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    det: float
    det_ok: bool
    diag_residuals: tuple
    diag_ok: bool
    independent_ok: bool
    sufficient_ok: bool
    sufficient_details: tuple


@dataclass(frozen=True)
class BasisFound:
    """An input basis satisfying the sufficient conditions at q0."""

    B: tuple
    verification: VerificationReport
    trace: tuple
    kind: str = "BasisFound"
    # the construction transfers verbatim to controllability at zero velocity
    zero_velocity_transfer: bool = True

    @property
    def verdict(self) -> str:
        return (
            "STLCC at q0: found an input basis satisfying the sufficient "
            "conditions (verified); the same basis certifies small-time "
            "local controllability at zero velocity"
        )


@dataclass(frozen=True)
class NotSTLCC:
    certificate: Certificate
    trace: tuple
    kind: str = "NotSTLCC"
    zero_velocity_transfer: bool = True

    @property
    def verdict(self) -> str:
        return (
            "not STLCC at q0: a one-signed quadratic form blocks every "
            "input basis (non-controllability certificate)"
        )


@dataclass(frozen=True)
class Inconclusive:
    reason: str
    open_case: Optional[OpenCase] = None
    trace: tuple = ()
    kind: str = "Inconclusive"

    @property
    def verdict(self) -> str:
        return f"inconclusive: {self.reason}"


def open_case_coefficients(
    system: MechanicalSystem, q0: Optional[ex.Point] = None,
    rank_tol: float = RANK_TOL,
) -> Optional[OpenCase]:
    """For n - m = 2: expand <Y_j:Y_j>(q0) in the frame
    {Y_1..Y_m, <Y_i:Y_j>, <Y_i:Y_i>} when that frame spans, reporting the
    two product coefficients (a3 along the mixed product, a4 along the
    diagonal one).  None when no ordered pair yields a spanning frame."""
    q0 = q0 or system.q0
    conn = system.connection
    fields = list(system.inputs)
    m, n = system.m, system.n
    if n - m != 2:
        return None
    base_rows, exact = _field_rows(fields, q0)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            P_ii = symmetric_product(conn, fields[i], fields[i])
            P_ij = symmetric_product(conn, fields[i], fields[j])
            P_jj = symmetric_product(conn, fields[j], fields[j])
            prows, p_exact = _field_rows([P_ii, P_ij, P_jj], q0)
            use_exact = exact and p_exact
            rows = list(base_rows) + [prows[1], prows[0]]  # mixed then diagonal
            if use_exact:
                if linalg.mat_rank(linalg.frac_matrix(rows)) < n:
                    continue
                frame = [[Fraction(rows[c][r]) for c in range(n)] for r in range(n)]
                sol = linalg.mat_solve(frame, [Fraction(x) for x in prows[2]])
                if sol is None:
                    continue
                lin = tuple(sol[:m])
                a3, a4 = sol[m], sol[m + 1]
            else:
                rows_f = _as_float_matrix(rows)
                if linalg.float_rank(rows_f, rank_tol) < n:
                    continue
                try:
                    solf = np.linalg.solve(rows_f.T, np.asarray([float(x) for x in prows[2]]))
                except np.linalg.LinAlgError:
                    continue
                lin = tuple(float(x) for x in solf[:m])
                a3, a4 = float(solf[m]), float(solf[m + 1])
            return OpenCase(pair=(i, j), linear_coeffs=lin, a3=a3, a4=a4)
    return None


# ---------------------------------------------------------------------------
# the decision procedure

def decide_stlcc(
    system: MechanicalSystem,
    q0: Optional[ex.Point] = None,
    rank_tol: float = RANK_TOL,
    residual_tol: float = RESIDUAL_TOL,
    zero_tol: float = ZERO_TOL,
):
    """Decide controllability for m = n-1 (the caller is responsible for
    having verified configuration accessibility at q0 first).

    Returns BasisFound (with a verified B), NotSTLCC (with a definiteness
    certificate), or Inconclusive (systems outside the m = n-1 scope; for
    n - m = 2 the undecidable frame coefficients are reported)."""
    q0 = q0 or system.q0
    n, m = system.n, system.m
    conn = system.connection

    if m != n - 1:
        oc = open_case_coefficients(system, q0, rank_tol) if n - m == 2 else None
        reason = (
            f"the decision procedure covers m = n-1 inputs only "
            f"(here n = {n}, m = {m})"
        )
        if oc is not None and oc.blocking:
            reason += (
                "; the reported frame coefficients block any basis change "
                "that would settle the question"
            )
        return Inconclusive(reason=reason, open_case=oc)

    system.check_inputs_independent(rank_tol)

    if m == 1:
        # n = 2 with one input: configuration controllability needs dim 1
        return NotSTLCC(
            certificate=Certificate(
                kind="single-input dimension criterion",
                stage=1,
                detail=(
                    "one input on a 2-dimensional configuration space is "
                    "never configuration controllable"
                ),
            ),
            trace=(),
        )

    fields = list(system.inputs)
    T = _identity_rows(m)
    active = list(range(m))
    trace = []
    stage_no = 0

    while True:
        stage_no += 1
        if stage_no > m + 1:
            raise BasisSearchError("reduction did not terminate")

        sel = _select_pair_among(fields, active, conn, q0, rank_tol)

        if isinstance(sel, AllInsideDistribution):
            trace.append(StageRecord(
                stage=stage_no, active=tuple(active), base_pair=None,
                substitution=None, coefficient_matrix=None, signature=None,
                branch="all_inside_distribution",
            ))
            verification = verify_basis(
                system, T, q0, residual_tol=residual_tol, rank_tol=rank_tol
            )
            return BasisFound(B=T, verification=verification, trace=tuple(trace))

        if sel is None:
            # a single active field whose own product escapes the span:
            # every rescaling keeps it outside -- terminal certificate
            i = active[0]
            P = symmetric_product(conn, fields[i], fields[i])
            cert = Certificate(
                kind="definite quadratic form",
                stage=stage_no,
                matrix=((1.0,),),
                eigenvalues=(1.0,),
                sign=1,
                detail=(
                    f"the remaining field Y{i + 1} has <Y{i + 1}:Y{i + 1}>(q0) "
                    f"outside the span; b^2 <Y:Y> stays outside for every "
                    f"nonzero scaling b"
                ),
            )
            trace.append(StageRecord(
                stage=stage_no, active=tuple(active), base_pair=(i, i),
                substitution=None, coefficient_matrix=None,
                signature=(1, 0, 0), branch="definite_certificate",
            ))
            return NotSTLCC(certificate=cert, trace=tuple(trace))

        bp: BasePair = sel
        if bp.substituted:
            fields = list(bp.fields)
            T = _rows_matmul(bp.transform, T)

        A = _coefficient_matrix_among(fields, active, conn, q0, bp, rank_tol)
        kind, sig = classify_form(A.entries, zero_tol)
        seq = radicand_recursion(A.entries, zero_tol)

        if kind in ("zero", "indefinite"):
            B_active, construction = isotropic_basis(A.entries, zero_tol)
            trace.append(StageRecord(
                stage=stage_no, active=tuple(active), base_pair=(bp.i, bp.j),
                substitution=bp.note if bp.substituted else None,
                coefficient_matrix=A, signature=sig, branch="isotropic_basis",
                radicand=seq, construction=construction,
            ))
            fields, T = _apply_active_transform(fields, T, active, B_active)
            verification = verify_basis(
                system, T, q0, residual_tol=residual_tol, rank_tol=rank_tol
            )
            return BasisFound(B=T, verification=verification, trace=tuple(trace))

        if kind == "definite":
            Af = _as_float_matrix(A.entries)
            eigs = tuple(float(x) for x in np.linalg.eigvalsh(0.5 * (Af + Af.T)))
            cert = Certificate(
                kind="definite quadratic form",
                stage=stage_no,
                matrix=tuple(tuple(float(x) for x in r) for r in A.entries),
                eigenvalues=eigs,
                sign=1 if eigs[0] > 0 else -1,
                detail=(
                    "every change of basis keeps a one-signed coefficient on "
                    "the escaping product: the reachable set stays on one "
                    "side of a separating function"
                ),
            )
            trace.append(StageRecord(
                stage=stage_no, active=tuple(active), base_pair=(bp.i, bp.j),
                substitution=bp.note if bp.substituted else None,
                coefficient_matrix=A, signature=sig,
                branch="definite_certificate", radicand=seq,
            ))
            return NotSTLCC(certificate=cert, trace=tuple(trace))

        # semidefinite nonzero: kernel reduction
        ker = kernel_rows(A.entries, zero_tol)
        if not ker:
            raise BasisSearchError("semidefinite stage with an empty kernel")
        C = descarte_vector(A.entries, seq, zero_tol)
        Af = _as_float_matrix(A.entries)
        ker_f = _as_float_matrix(ker)
        kres = float(np.max(np.abs(ker_f @ Af)))
        if C is not None:
            Cf = np.asarray([float(x) for x in C])
            kres = max(kres, float(np.max(np.abs(Cf @ Af))))
            # prefer the back-substituted vector as the leading kernel row
            # when it is exact and independent (it is in ker A by the
            # recursion identity)
            if _is_exact([C]) and _is_exact(ker):
                cand = [list(map(Fraction, C))] + [list(r) for r in ker]
                if linalg.mat_rank(cand) == len(ker):
                    reduced = [list(map(Fraction, C))]
                    for r in ker:
                        if linalg.mat_rank(reduced + [list(r)]) > len(reduced):
                            reduced.append(list(r))
                    ker = reduced[:len(ker)]
        B_active = complete_to_basis([list(r) for r in ker], len(active))
        trace.append(StageRecord(
            stage=stage_no, active=tuple(active), base_pair=(bp.i, bp.j),
            substitution=bp.note if bp.substituted else None,
            coefficient_matrix=A, signature=sig, branch="kernel_reduction",
            radicand=seq,
            kernel=tuple(tuple(float(x) for x in r) for r in ker),
            kernel_residual=kres,
        ))
        fields, T = _apply_active_transform(fields, T, active, B_active)
        # the kernel-row fields are finished: products with everything in span
        active = active[len(ker):]


def _apply_active_transform(fields, T, active, B_active):
    """Replace the active fields by B_active-combinations of themselves and
    update the cumulative transform; inactive rows are untouched."""
    fields = list(fields)
    m = len(fields)
    k = len(active)
    Brows = [list(r) for r in (B_active.tolist() if isinstance(B_active, np.ndarray) else B_active)]
    coeffs = [[Fraction(x) if not isinstance(x, Fraction) else x for x in row] for row in Brows]
    new_fields = list(fields)
    for r in range(k):
        new_fields[active[r]] = linear_combination(
            [fields[active[c]] for c in range(k)], coeffs[r]
        )
    big = [list(row) for row in _identity_rows(m)]
    for r in range(k):
        for c in range(k):
            big[active[r]][active[c]] = coeffs[r][c]
    T_new = _rows_matmul(tuple(tuple(r) for r in big), T)
    return new_fields, T_new


# ---------------------------------------------------------------------------
# verification

def verify_basis(
    system: MechanicalSystem,
    B,
    q0: Optional[ex.Point] = None,
    residual_tol: float = RESIDUAL_TOL,
    rank_tol: float = RANK_TOL,
    det_tol: float = DET_TOL,
    max_degree: int = 2,
) -> VerificationReport:
    """Gate a candidate basis: invertibility, zero transformed diagonal
    against the first-stage coefficient matrix, and the sufficient
    conditions re-run symbolically on the transformed fields."""
    q0 = q0 or system.q0
    m = system.m
    Brows = [list(r) for r in (B.tolist() if isinstance(B, np.ndarray) else B)]
    Bf = _as_float_matrix(Brows)
    det = float(np.linalg.det(Bf))
    det_ok = bool(abs(det) > det_tol * max(np.linalg.norm(Bf), 1.0) ** m)

    sel = select_base_pair(system, q0, rank_tol)
    if isinstance(sel, AllInsideDistribution):
        diag = tuple(0.0 for _ in range(m))
        diag_ok = True
    else:
        A = _coefficient_matrix_among(
            sel.fields, list(range(m)), system.connection, q0, sel, rank_tol
        )
        Af = _as_float_matrix(A.entries)
        # B maps original inputs; A is expressed in the (possibly
        # substituted) working basis: conjugate by the substitution
        Sf = _as_float_matrix([list(r) for r in sel.transform])
        Bt = Bf @ np.linalg.inv(Sf)
        scale = max(np.max(np.abs(Af)), 1.0) * max(np.max(np.abs(Bt)), 1.0) ** 2
        diag = tuple(float(x) / scale for x in np.einsum("ij,jk,ik->i", Bt, Af, Bt))
        diag_ok = all(abs(x) < residual_tol for x in diag)

    new_fields = [
        linear_combination(list(system.inputs), [Fraction(x) for x in row])
        for row in Brows
    ]
    rows, exact = _field_rows(new_fields, q0)
    if exact:
        independent_ok = linalg.mat_rank(list(rows)) == m
    else:
        independent_ok = linalg.float_rank(_as_float_matrix(rows), rank_tol) == m

    transformed = replace(system, inputs=tuple(new_fields))
    sufficient_ok, details = sufficient_conditions_check(
        transformed, max_degree=max_degree, residual_tol=residual_tol
    )
    return VerificationReport(
        passed=det_ok and diag_ok and independent_ok and sufficient_ok,
        det=det,
        det_ok=det_ok,
        diag_residuals=diag,
        diag_ok=diag_ok,
        independent_ok=independent_ok,
        sufficient_ok=sufficient_ok,
        sufficient_details=tuple(details),
    )


# ---------------------------------------------------------------------------
# randomized search oracle (used by the test suite's completeness checks)

def randomized_basis_search(
    system: MechanicalSystem,
    q0: Optional[ex.Point] = None,
    samples: int = 100_000,
    entry_range: int = 3,
    seed: int = 0,
    verify_limit: int = 20,
    rank_tol: float = RANK_TOL,
    residual_tol: float = RESIDUAL_TOL,
):
    """Search random integer matrices for one passing `verify_basis`.

    Returns (found, B_or_None, n_candidates): candidates pass the cheap
    screen (nonzero determinant, zero transformed diagonal); up to
    ``verify_limit`` of them get the full symbolic verification."""
    q0 = q0 or system.q0
    m = system.m
    sel = select_base_pair(system, q0, rank_tol)
    rng = np.random.RandomState(seed)
    Bs = rng.randint(-entry_range, entry_range + 1, size=(samples, m, m)).astype(np.float64)
    dets = np.linalg.det(Bs)
    mask = np.abs(dets) > 0.5  # integer determinants: nonzero means >= 1
    if isinstance(sel, AllInsideDistribution):
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            return False, None, 0
        B = Bs[idx[0]]
        report = verify_basis(system, B, q0, residual_tol, rank_tol)
        return report.passed, (B if report.passed else None), int(idx.size)
    A = _coefficient_matrix_among(
        sel.fields, list(range(m)), system.connection, q0, sel, rank_tol
    )
    Af = _as_float_matrix(A.entries)
    Sf = _as_float_matrix([list(r) for r in sel.transform])
    Bt = Bs @ np.linalg.inv(Sf)[None, :, :]
    diags = np.einsum("nij,jk,nik->ni", Bt, Af, Bt)
    scale = max(np.max(np.abs(Af)), 1.0) * (3 * entry_range) ** 2
    mask &= np.max(np.abs(diags), axis=1) < 1e-7 * scale
    candidates = np.nonzero(mask)[0]
    checked = 0
    for idx in candidates:
        if checked >= verify_limit:
            break
        checked += 1
        report = verify_basis(system, Bs[idx], q0, residual_tol, rank_tol)
        if report.passed:
            return True, Bs[idx], int(candidates.size)
    return False, None, int(candidates.size)
