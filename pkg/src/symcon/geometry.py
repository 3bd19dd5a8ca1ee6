"""Differential-geometric operators on symbolic fields.

Implements the metric machinery (Levi-Civita connection, musical
isomorphisms) and the two derivative operators everything else is built
from: the Lie bracket and the symmetric product

    <X:Y> = nabla_X Y + nabla_Y X ,

where (nabla_X Y)^a = X^b d_b Y^a + Gamma^a_bc X^b Y^c in coordinates.

All values are immutable; operations return new simplified objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from . import linalg


class GeometryError(Exception):
    pass


def _check_components(components, coords, kind: str):
    if len(components) != len(coords):
        raise GeometryError(
            f"{kind} has {len(components)} components for {len(coords)} coordinates"
        )


@dataclass(frozen=True)
class VectorField:
    coords: tuple
    components: tuple

    def __post_init__(self):
        _check_components(self.components, self.coords, "vector field")

    def evaluate(self, point: ex.Point) -> list:
        env = point.as_dict()
        return [ex.evaluate(c, env) for c in self.components]

    def evaluate_exact(self, point: ex.Point) -> list:
        env = point.as_dict()
        return [ex.evaluate_exact(c, env) for c in self.components]

    def is_polynomial(self) -> bool:
        return all(ex.is_polynomial(c) for c in self.components)

    def simplified(self) -> "VectorField":
        return VectorField(self.coords, tuple(ex.simplify(c) for c in self.components))

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.components) + ")"


@dataclass(frozen=True)
class OneForm:
    coords: tuple
    components: tuple

    def __post_init__(self):
        _check_components(self.components, self.coords, "one-form")

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.components) + ")"


@dataclass(frozen=True)
class Metric:
    """Symmetric matrix of expressions; positive definiteness is pointwise."""

    coords: tuple
    entries: tuple  # n x n of Expr

    def __post_init__(self):
        n = len(self.coords)
        if len(self.entries) != n or any(len(row) != n for row in self.entries):
            raise GeometryError("metric must be an n x n matrix of expressions")

    def is_symmetric(self) -> bool:
        n = len(self.coords)
        for a in range(n):
            for b in range(a + 1, n):
                if not expressions_equal(
                    self.entries[a][b], self.entries[b][a], self.coords
                ):
                    return False
        return True

    def evaluate(self, point: ex.Point) -> np.ndarray:
        env = point.as_dict()
        return np.array(
            [[ex.evaluate(e, env) for e in row] for row in self.entries]
        )

    def check_positive_definite(self, point: ex.Point, tol: float = 1e-9):
        w = np.linalg.eigvalsh(self.evaluate(point))
        if w.min() <= tol:
            raise GeometryError(
                f"metric is not positive definite at {point} "
                f"(smallest eigenvalue {w.min():.3e}, threshold {tol:g})"
            )


@dataclass(frozen=True)
class Connection:
    """Christoffel symbols Gamma[a][b][c] for nabla_{d/dx^b} d/dx^c."""

    coords: tuple
    gamma: tuple  # n x n x n of Expr
    metric_derived: bool = False

    def __post_init__(self):
        n = len(self.coords)
        ok = len(self.gamma) == n and all(
            len(plane) == n and all(len(row) == n for row in plane)
            for plane in self.gamma
        )
        if not ok:
            raise GeometryError("connection must be an n x n x n array of expressions")

    def is_flat_zero(self) -> bool:
        return all(
            ex.simplify(g) == ex.ZERO
            for plane in self.gamma
            for row in plane
            for g in row
        )

    def is_symmetric_lower(self) -> bool:
        n = len(self.coords)
        for a in range(n):
            for b in range(n):
                for c in range(b + 1, n):
                    if not expressions_equal(
                        self.gamma[a][b][c], self.gamma[a][c][b], self.coords
                    ):
                        return False
        return True


def zero_connection(coords: Sequence[str]) -> Connection:
    n = len(coords)
    z = tuple(tuple((ex.ZERO,) * n for _ in range(n)) for _ in range(n))
    return Connection(tuple(coords), z, metric_derived=False)


# ---------------------------------------------------------------------------
# expression equality with numeric fallback

_EQ_SEED = 20260809


def expressions_equal(
    e1: ex.Expr,
    e2: ex.Expr,
    coords: Sequence[str],
    samples: int = 20,
    tol: float = 1e-10,
) -> bool:
    """Structural equality after simplify, else agreement at random points.

    The numeric fallback samples uniformly from [-1, 1]^n and compares with
    relative tolerance; points where either side is undefined are skipped.
    """
    s1, s2 = ex.simplify(e1), ex.simplify(e2)
    if s1 == s2:
        return True
    rng = np.random.RandomState(_EQ_SEED)
    names = sorted(set(coords) | ex.free_variables(s1) | ex.free_variables(s2))
    checked = 0
    for _ in range(samples * 3):
        if checked >= samples:
            break
        env = {c: rng.uniform(-1.0, 1.0) for c in names}
        try:
            v1, v2 = ex.evaluate(s1, env), ex.evaluate(s2, env)
        except ex.DomainError:
            continue
        checked += 1
        if abs(v1 - v2) > tol * max(1.0, abs(v1), abs(v2)):
            return False
    return checked > 0


# ---------------------------------------------------------------------------
# metric algebra

def _det(entries: list) -> ex.Expr:
    n = len(entries)
    if n == 1:
        return entries[0][0]
    out = []
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in entries[1:]]
        term = ex.mul(entries[0][j], _det(minor))
        out.append(term if j % 2 == 0 else ex.neg(term))
    return ex.add(*out)


def metric_inverse(g: Metric) -> tuple:
    """Symbolic inverse by adjugate over determinant (exact at desk scale)."""
    n = len(g.coords)
    entries = [list(row) for row in g.entries]
    det = ex.simplify(_det(entries))
    if det == ex.ZERO:
        raise GeometryError("metric is singular (symbolic determinant is 0)")
    inv = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            minor = [
                [entries[r][c] for c in range(n) if c != b]
                for r in range(n) if r != a
            ]
            cof = _det(minor) if n > 1 else ex.ONE
            if (a + b) % 2 == 1:
                cof = ex.neg(cof)
            # adjugate is the transposed cofactor matrix
            inv[b][a] = ex.simplify(ex.div(cof, det))
    return tuple(tuple(row) for row in inv)


def christoffel(g: Metric) -> Connection:
    """Levi-Civita symbols: Gamma^a_bc = g^ad (d_b g_dc + d_c g_db - d_d g_bc)/2."""
    n = len(g.coords)
    coords = g.coords
    ginv = metric_inverse(g)
    dg = [
        [[ex.diff(g.entries[a][b], coords[c]) for b in range(n)] for a in range(n)]
        for c in range(n)
    ]
    gamma = [[[None] * n for _ in range(n)] for _ in range(n)]
    half = ex.const(Fraction(1, 2))
    for a in range(n):
        for b in range(n):
            for c in range(b, n):
                terms = []
                for d in range(n):
                    inner = ex.add(
                        dg[b][d][c], dg[c][d][b], ex.neg(dg[d][b][c])
                    )
                    terms.append(ex.mul(half, ginv[a][d], inner))
                val = ex.simplify(ex.add(*terms))
                gamma[a][b][c] = val
                gamma[a][c][b] = val
    return Connection(
        coords, tuple(tuple(tuple(row) for row in plane) for plane in gamma),
        metric_derived=True,
    )


def sharp(g: Metric, form: OneForm) -> VectorField:
    """Raise indices: Y^a = g^ab F_b."""
    n = len(g.coords)
    ginv = metric_inverse(g)
    comps = tuple(
        ex.simplify(ex.add(*[ex.mul(ginv[a][b], form.components[b]) for b in range(n)]))
        for a in range(n)
    )
    return VectorField(g.coords, comps)


def flat(g: Metric, field: VectorField) -> OneForm:
    """Lower indices: F_a = g_ab X^b."""
    n = len(g.coords)
    comps = tuple(
        ex.simplify(
            ex.add(*[ex.mul(g.entries[a][b], field.components[b]) for b in range(n)])
        )
        for a in range(n)
    )
    return OneForm(g.coords, comps)


# ---------------------------------------------------------------------------
# derivative operators

def covariant_derivative(conn: Connection, X: VectorField, Y: VectorField) -> VectorField:
    n = len(conn.coords)
    coords = conn.coords
    comps = []
    for a in range(n):
        terms = []
        for b in range(n):
            dYa = ex.diff(Y.components[a], coords[b])
            if dYa != ex.ZERO:
                terms.append(ex.mul(X.components[b], dYa))
            for c in range(n):
                gam = conn.gamma[a][b][c]
                if gam != ex.ZERO:
                    terms.append(ex.mul(gam, X.components[b], Y.components[c]))
        comps.append(ex.simplify(ex.add(*terms)))
    return VectorField(coords, tuple(comps))


def symmetric_product(conn: Connection, X: VectorField, Y: VectorField) -> VectorField:
    a = covariant_derivative(conn, X, Y)
    b = covariant_derivative(conn, Y, X)
    comps = tuple(
        ex.simplify(ex.add(ca, cb)) for ca, cb in zip(a.components, b.components)
    )
    return VectorField(conn.coords, comps)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    n = len(X.coords)
    coords = X.coords
    comps = []
    for a in range(n):
        terms = []
        for b in range(n):
            dYa = ex.diff(Y.components[a], coords[b])
            if dYa != ex.ZERO:
                terms.append(ex.mul(X.components[b], dYa))
            dXa = ex.diff(X.components[a], coords[b])
            if dXa != ex.ZERO:
                terms.append(ex.neg(ex.mul(Y.components[b], dXa)))
        comps.append(ex.simplify(ex.add(*terms)))
    return VectorField(coords, tuple(comps))


def linear_combination(fields: Sequence[VectorField], coeffs: Sequence) -> VectorField:
    """Constant-coefficient combination  sum_k c_k Y_k  (coefficients exact)."""
    coords = fields[0].coords
    n = len(coords)
    comps = []
    for a in range(n):
        terms = [
            ex.mul(ex.const(Fraction(c)), f.components[a])
            for c, f in zip(coeffs, fields)
        ]
        comps.append(ex.simplify(ex.add(*terms)))
    return VectorField(coords, tuple(comps))


def evaluate_fields(fields: Sequence[VectorField], point: ex.Point):
    """Stack field values at a point into a matrix (one row per field).

    Returns (rows, exact): rows of Fractions with exact=True when every
    component and coordinate is rational, float rows otherwise.
    """
    rows = []
    exact = point.is_rational() and all(
        ex.is_polynomial_or_rational(c) for f in fields for c in f.components
    )
    for f in fields:
        if exact:
            try:
                rows.append(f.evaluate_exact(point))
                continue
            except (ex.NotExactError, ex.DomainError):
                exact = False
        rows.append(f.evaluate(point))
    if not exact:
        rows = [[float(x) for x in row] for row in rows]
    return rows, exact


@dataclass(frozen=True)
class MechanicalSystem:
    """A control system: configuration space, connection, inputs, base point."""

    coords: tuple
    connection: Connection
    inputs: tuple  # of VectorField
    q0: ex.Point
    metric: Optional[Metric] = None
    input_forms: Optional[tuple] = None  # one-forms as given, if any

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def m(self) -> int:
        return len(self.inputs)

    def __post_init__(self):
        if len(self.q0) != self.n:
            raise GeometryError("base point dimension does not match coordinates")
        for f in self.inputs:
            if f.coords != self.coords:
                raise GeometryError("input field uses different coordinates")

    def inputs_matrix(self, point: Optional[ex.Point] = None):
        return evaluate_fields(self.inputs, point or self.q0)

    def check_inputs_independent(self, rank_tol: float = 1e-9):
        rows, exact = self.inputs_matrix()
        if exact:
            rank = linalg.mat_rank(rows)
        else:
            rank = linalg.float_rank(linalg.float_matrix(rows), rank_tol)
        if rank < self.m:
            raise GeometryError(
                f"input fields are linearly dependent at the base point "
                f"(rank {rank} < {self.m})"
            )

    def is_polynomial(self) -> bool:
        poly_inputs = all(f.is_polynomial() for f in self.inputs)
        poly_gamma = all(
            ex.is_polynomial(g)
            for plane in self.connection.gamma
            for row in plane
            for g in row
        )
        return poly_inputs and poly_gamma and self.q0.is_rational()
