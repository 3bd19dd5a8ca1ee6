import random
from fractions import Fraction

import numpy as np
import pytest

from symcon import expr as E
from symcon import geometry as G


def fields_4d():
    coords = ("x", "y", "z", "w")
    P = lambda t: E.parse_expr(t, coords)
    Y1 = G.VectorField(coords, (P("1+z"), P("1"), P("1"), P("1+y")))
    Y2 = G.VectorField(coords, (P("0"), P("1"), P("-2"), P("-(1+y)")))
    return coords, P, Y1, Y2


def euclidean(coords):
    n = len(coords)
    one, zero = E.ONE, E.ZERO
    return G.Metric(coords, tuple(
        tuple(one if i == j else zero for j in range(n)) for i in range(n)
    ))


def rand_env(coords, rng, lo=-1.0, hi=1.0):
    return {c: rng.uniform(lo, hi) for c in coords}


def field_at(X, env):
    return np.array([E.evaluate(c, env) for c in X.components])


def numeric_jacobian(X, env, h=1e-6):
    coords = X.coords
    n = len(coords)
    J = np.zeros((n, n))
    for b, name in enumerate(coords):
        ep = dict(env); ep[name] += h
        em = dict(env); em[name] -= h
        J[:, b] = (field_at(X, ep) - field_at(X, em)) / (2 * h)
    return J


class TestChristoffel:
    def test_euclidean_is_flat(self):
        coords, *_ = fields_4d()
        conn = G.christoffel(euclidean(coords))
        assert conn.is_flat_zero()
        assert conn.metric_derived

    def test_diag_x_squared_metric(self):
        # g = diag(1, x^2) for x > 0: nonzero symbols -x and 1/x
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("x^2"))))
        conn = G.christoffel(g)
        assert conn.gamma[0][1][1] == P("-x")
        assert conn.gamma[1][0][1] == E.simplify(P("1/x"))
        assert conn.gamma[1][1][0] == E.simplify(P("1/x"))

    def test_against_finite_differences_of_metric(self):
        # Levi-Civita formula evaluated with numeric derivatives of g
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1+y^2"), P("x*y/2")), (P("x*y/2"), P("(1+x)^2"))))
        conn = G.christoffel(g)
        rng = random.Random(5)
        h = 1e-6
        for _ in range(5):
            env = rand_env(coords, rng, -0.3, 0.3)
            n = 2
            gmat = lambda e: np.array(
                [[E.evaluate(g.entries[a][b], e) for b in range(n)] for a in range(n)]
            )
            dg = np.zeros((n, n, n))  # dg[c][a][b] = d_c g_ab
            for c, name in enumerate(coords):
                ep = dict(env); ep[name] += h
                em = dict(env); em[name] -= h
                dg[c] = (gmat(ep) - gmat(em)) / (2 * h)
            ginv = np.linalg.inv(gmat(env))
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        want = 0.5 * sum(
                            ginv[a, d] * (dg[b][d, c] + dg[c][b, d] - dg[d][b, c])
                            for d in range(n)
                        )
                        got = E.evaluate(conn.gamma[a][b][c], env)
                        assert got == pytest.approx(want, abs=1e-6)

    def test_constant_metric_flat(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("2"), P("1/2")), (P("1/2"), P("3"))))
        assert G.christoffel(g).is_flat_zero()

    def test_singular_metric_rejected(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1"), P("1")), (P("1"), P("1"))))
        with pytest.raises(G.GeometryError):
            G.metric_inverse(g)

    def test_metric_compatibility_identity(self):
        # d_c g_ab = g_db Gamma^d_ca + g_ad Gamma^d_cb at sample points
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("(1+x)^2"))))
        conn = G.christoffel(g)
        rng = random.Random(9)
        for _ in range(20):
            env = rand_env(coords, rng, -0.4, 0.4)
            n = 2
            gv = [[E.evaluate(g.entries[a][b], env) for b in range(n)] for a in range(n)]
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        dg = E.evaluate(E.diff(g.entries[a][b], coords[c]), env)
                        rhs = sum(
                            gv[d][b] * E.evaluate(conn.gamma[d][c][a], env)
                            + gv[a][d] * E.evaluate(conn.gamma[d][c][b], env)
                            for d in range(n)
                        )
                        assert abs(dg - rhs) < 1e-8


class TestSharpFlat:
    def test_euclidean_sharp_is_identity(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = euclidean(coords)
        F = G.OneForm(coords, (P("x*y"), P("1+x")))
        Y = G.sharp(g, F)
        assert Y.components == tuple(E.simplify(c) for c in F.components)

    def test_diagonal_inversion(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("4"))))
        Y = G.sharp(g, G.OneForm(coords, (P("0"), P("1"))))
        assert Y.components == (E.ZERO, E.const(Fraction(1, 4)))

    def test_flat_sharp_round_trip_constant_spd(self):
        coords = ("x", "y", "z")
        rng = random.Random(13)
        M = np.array([[rng.uniform(-1, 1) for _ in range(3)] for _ in range(3)])
        spd = M @ M.T + 3 * np.eye(3)
        g = G.Metric(coords, tuple(
            tuple(E.const(Fraction(spd[i][j]).limit_denominator(10**6)) for j in range(3))
            for i in range(3)
        ))
        P = lambda t: E.parse_expr(t, coords)
        F = G.OneForm(coords, (P("x"), P("y*z"), P("1")))
        back = G.flat(g, G.sharp(g, F))
        for _ in range(10):
            env = rand_env(coords, rng)
            for a, b in zip(back.components, F.components):
                va, vb = E.evaluate(a, env), E.evaluate(b, env)
                assert abs(va - vb) <= 1e-12 * max(1.0, abs(vb))


class TestDerivativeOperators:
    def test_flat_constant_fields_covariant_zero(self):
        coords = ("x", "y")
        conn = G.zero_connection(coords)
        X = G.VectorField(coords, (E.ONE, E.const(2)))
        assert all(c == E.ZERO for c in G.covariant_derivative(conn, X, X).components)

    def test_nabla_y1_y1_paper_value(self):
        coords, P, Y1, Y2 = fields_4d()
        conn = G.zero_connection(coords)
        cd = G.covariant_derivative(conn, Y1, Y1)
        assert cd.components == (E.ONE, E.ZERO, E.ZERO, E.ONE)

    def test_leibniz_property(self):
        # nabla_X(fY) - f nabla_X Y - X(f) Y = 0 for f = x*y
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("(1+x)^2"))))
        conn = G.christoffel(g)
        X = G.VectorField(coords, (P("1+y"), P("x")))
        Y = G.VectorField(coords, (P("x*y"), P("1")))
        f = P("x*y")
        fY = G.VectorField(coords, tuple(E.simplify(E.mul(f, c)) for c in Y.components))
        lhs = G.covariant_derivative(conn, X, fY)
        nxy = G.covariant_derivative(conn, X, Y)
        Xf = E.simplify(E.add(*[
            E.mul(X.components[b], E.diff(f, coords[b])) for b in range(2)
        ]))
        rng = random.Random(21)
        for _ in range(10):
            env = rand_env(coords, rng, -0.4, 0.4)
            for a in range(2):
                want = (
                    E.evaluate(f, env) * E.evaluate(nxy.components[a], env)
                    + E.evaluate(Xf, env) * E.evaluate(Y.components[a], env)
                )
                got = E.evaluate(lhs.components[a], env)
                assert abs(got - want) < 1e-9

    def test_symmetric_products_of_the_4d_fixture(self):
        coords, P, Y1, Y2 = fields_4d()
        conn = G.zero_connection(coords)
        assert G.symmetric_product(conn, Y1, Y2).components == \
            tuple(P(t) for t in ("-2", "0", "0", "0"))
        assert G.symmetric_product(conn, Y2, Y2).components == \
            tuple(P(t) for t in ("0", "0", "0", "-2"))
        assert G.symmetric_product(conn, Y1, Y1).components == \
            tuple(P(t) for t in ("2", "0", "0", "2"))

    def test_self_product_is_twice_covariant(self):
        coords, P, Y1, _ = fields_4d()
        conn = G.zero_connection(coords)
        twice = G.covariant_derivative(conn, Y1, Y1)
        prod = G.symmetric_product(conn, Y1, Y1)
        assert prod.components == tuple(
            E.simplify(E.mul(E.const(2), c)) for c in twice.components
        )

    def test_symmetry_structural(self):
        coords, P, Y1, Y2 = fields_4d()
        conn = G.zero_connection(coords)
        assert G.symmetric_product(conn, Y1, Y2).components == \
            G.symmetric_product(conn, Y2, Y1).components

    def test_bilinearity_numeric(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("(1+x)^2"))))
        conn = G.christoffel(g)
        X = G.VectorField(coords, (P("1"), P("x")))
        Y = G.VectorField(coords, (P("y"), P("1+x")))
        Z = G.VectorField(coords, (P("x*y"), P("1")))
        comb = G.linear_combination([X, Y], [3, -2])
        lhs = G.symmetric_product(conn, comb, Z)
        pXZ = G.symmetric_product(conn, X, Z)
        pYZ = G.symmetric_product(conn, Y, Z)
        rng = random.Random(2)
        for _ in range(10):
            env = rand_env(coords, rng, -0.4, 0.4)
            for a in range(2):
                want = 3 * E.evaluate(pXZ.components[a], env) \
                    - 2 * E.evaluate(pYZ.components[a], env)
                got = E.evaluate(lhs.components[a], env)
                assert abs(got - want) <= 1e-10 * max(1.0, abs(want))

    def test_euclidean_jacobian_form(self):
        # flat space: <X:Y> = J(Y) X + J(X) Y pointwise
        coords = ("x", "y", "z")
        P = lambda t: E.parse_expr(t, coords)
        conn = G.zero_connection(coords)
        X = G.VectorField(coords, (P("x*y"), P("1+z"), P("x^2")))
        Y = G.VectorField(coords, (P("z"), P("x"), P("y*y")))
        prod = G.symmetric_product(conn, X, Y)
        rng = random.Random(17)
        for _ in range(10):
            env = rand_env(coords, rng)
            want = numeric_jacobian(Y, env) @ field_at(X, env) \
                + numeric_jacobian(X, env) @ field_at(Y, env)
            got = field_at(prod, env)
            assert np.allclose(got, want, atol=1e-6)


class TestLieBracket:
    def test_self_bracket_zero(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        X = G.VectorField(coords, (P("x*y"), P("1+x")))
        assert all(c == E.ZERO for c in G.lie_bracket(X, X).components)

    def test_constant_fields_commute(self):
        coords = ("x", "y")
        X = G.VectorField(coords, (E.ONE, E.const(2)))
        Y = G.VectorField(coords, (E.const(-1), E.const(3)))
        assert all(c == E.ZERO for c in G.lie_bracket(X, Y).components)

    def test_antisymmetry_and_jacobi(self):
        coords = ("x", "y", "z")
        P = lambda t: E.parse_expr(t, coords)
        X = G.VectorField(coords, (P("x*y"), P("z"), P("1")))
        Y = G.VectorField(coords, (P("y^2"), P("x"), P("z*x")))
        Z = G.VectorField(coords, (P("1+z"), P("x*y"), P("y")))
        ab = G.lie_bracket(X, Y)
        ba = G.lie_bracket(Y, X)
        jac1 = G.lie_bracket(X, G.lie_bracket(Y, Z))
        jac2 = G.lie_bracket(Y, G.lie_bracket(Z, X))
        jac3 = G.lie_bracket(Z, G.lie_bracket(X, Y))
        rng = random.Random(23)
        for _ in range(10):
            env = rand_env(coords, rng)
            assert np.allclose(field_at(ab, env), -field_at(ba, env), atol=1e-9)
            total = field_at(jac1, env) + field_at(jac2, env) + field_at(jac3, env)
            assert np.allclose(total, 0.0, atol=1e-9)


def test_torsion_free_for_metric_connections():
    coords = ("x", "y")
    P = lambda t: E.parse_expr(t, coords)
    g = G.Metric(coords, ((P("1+y^2"), P("x*y/2")), (P("x*y/2"), P("(1+x)^2"))))
    conn = G.christoffel(g)
    X = G.VectorField(coords, (P("1+y"), P("x")))
    Y = G.VectorField(coords, (P("x*y"), P("1")))
    lhs = G.covariant_derivative(conn, X, Y)
    rhs = G.covariant_derivative(conn, Y, X)
    br = G.lie_bracket(X, Y)
    rng = random.Random(31)
    for _ in range(20):
        env = rand_env(coords, rng, -0.3, 0.3)
        v = field_at(lhs, env) - field_at(rhs, env) - field_at(br, env)
        assert np.allclose(v, 0.0, atol=1e-9)


def test_metric_requires_symmetry_check():
    coords = ("x", "y")
    P = lambda t: E.parse_expr(t, coords)
    g = G.Metric(coords, ((P("1"), P("x")), (P("0"), P("1"))))
    assert not g.is_symmetric()


def test_positive_definite_check():
    coords = ("x", "y")
    P = lambda t: E.parse_expr(t, coords)
    g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("-1"))))
    with pytest.raises(G.GeometryError):
        g.check_positive_definite(E.Point(coords, (0, 0)))


def test_mechanical_system_validation():
    coords = ("x", "y")
    P = lambda t: E.parse_expr(t, coords)
    Y1 = G.VectorField(coords, (P("1"), P("0")))
    Y2 = G.VectorField(coords, (P("2"), P("0")))
    sys_dep = G.MechanicalSystem(
        coords=coords, connection=G.zero_connection(coords),
        inputs=(Y1, Y2), q0=E.Point(coords, (0, 0)),
    )
    with pytest.raises(G.GeometryError):
        sys_dep.check_inputs_independent()
