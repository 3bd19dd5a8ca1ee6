import io
from fractions import Fraction

import numpy as np
import pytest

from symcon import expr as E
from symcon import geometry as G
from symcon import simulator as sim


def flat_4d():
    coords = ("x", "y", "z", "w")
    P = lambda t: E.parse_expr(t, coords)
    Y1 = G.VectorField(coords, (P("1+z"), P("1"), P("1"), P("1+y")))
    Y2 = G.VectorField(coords, (P("0"), P("1"), P("-2"), P("-(1+y)")))
    return G.MechanicalSystem(
        coords=coords, connection=G.zero_connection(coords), inputs=(Y1, Y2),
        q0=E.Point(coords, (0, 0, 0, 0)),
    )


def curved_2d():
    coords = ("x", "y")
    P = lambda t: E.parse_expr(t, coords)
    g = G.Metric(coords, ((P("1"), P("0")), (P("0"), P("(1+x)^2"))))
    Y = G.VectorField(coords, (P("1"), P("1")))
    return G.MechanicalSystem(
        coords=coords, connection=G.christoffel(g), inputs=(Y,),
        q0=E.Point(coords, (0, 0)), metric=g,
    )


class TestControlSignal:
    def test_constant(self):
        u = sim.ControlSignal.constant([1, 0])
        assert np.allclose(u.value_at(0.3), [1, 0])

    def test_piecewise_lookup(self):
        u = sim.ControlSignal((0.0, 0.25), ((1.0, 0.0), (0.0, 1.0)), clamp=False)
        assert np.allclose(u.value_at(0.1), [1, 0])
        assert np.allclose(u.value_at(0.3), [0, 1])

    def test_clamp(self):
        u = sim.ControlSignal.constant([3.0, -2.0])
        assert np.allclose(u.value_at(0.0), [1.0, -1.0])

    def test_bad_breakpoints(self):
        with pytest.raises(sim.SimulatorError):
            sim.ControlSignal((0.0, 0.0), ((1.0,), (1.0,)))
        with pytest.raises(sim.SimulatorError):
            sim.ControlSignal((0.5,), ((1.0,),))

    def test_segments_split_at_breakpoints(self):
        u = sim.ControlSignal((0.0, 0.25), ((1.0,), (0.0,)), clamp=False)
        segs = list(u.segments(0.5))
        assert segs[0][:2] == (0.0, 0.25)
        assert segs[1][:2] == (0.25, 0.5)


class TestIntegrate:
    def test_rest_is_equilibrium(self):
        system = flat_4d()
        traj = sim.integrate(system, sim.ControlSignal.constant([0, 0]), T=1.0, h=0.01)
        assert np.allclose(traj.q, 0.0) and np.allclose(traj.v, 0.0)

    def test_polynomial_exactness(self):
        # flat, u = (1, 0): ydd = 1, so y(t) = t^2/2 up to roundoff
        system = flat_4d()
        traj = sim.integrate(system, sim.ControlSignal.constant([1, 0]), T=1.0, h=0.01)
        assert traj.q[-1][1] == pytest.approx(0.5, abs=1e-12)

    def test_constant_field_quadratic_law(self):
        # q(t) = q0 + t^2/2 * sum u_i Y_i for constant fields in flat space
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        system = G.MechanicalSystem(
            coords=coords, connection=G.zero_connection(coords),
            inputs=(G.VectorField(coords, (P("1"), P("0"))),
                    G.VectorField(coords, (P("0"), P("1")))),
            q0=E.Point(coords, (0, 0)),
        )
        traj = sim.integrate(system, sim.ControlSignal.constant([0.5, -0.25]), T=0.8, h=0.01)
        assert np.allclose(traj.q[-1], [0.5 * 0.32, -0.25 * 0.32], atol=1e-12)

    def test_fourth_order_convergence(self):
        system = curved_2d()
        u = sim.ControlSignal.constant([1.0])
        ref = sim.integrate(system, u, T=0.5, h=1.25e-4)
        e = []
        for h in (2e-3, 1e-3):
            traj = sim.integrate(system, u, T=0.5, h=h)
            e.append(np.linalg.norm(traj.q[-1] - ref.q[-1]))
        ratio = e[0] / e[1]
        assert 12.0 < ratio < 20.0  # about 16 for a 4th-order method

    def test_velocity_flip_retraces_geodesic(self):
        # no input: flowing (q,v) for T then (q,-v) for T returns to start
        system = curved_2d()
        u = sim.ControlSignal.constant([0.0])
        fwd = sim.integrate(system, u, T=0.3, h=1e-3, v0=[0.2, 0.1])
        qT, vT = fwd.q[-1], fwd.v[-1]
        back = sim.integrate(
            system, u, T=0.3, h=1e-3,
            q0=E.Point(system.coords, list(qT)), v0=list(-vT),
        )
        assert np.linalg.norm(back.q[-1] - np.array([0.0, 0.0])) < 1e-8

    def test_breakpoint_subdivision_is_exact(self):
        # bang-bang on ydd: closed-form double integration
        system = flat_4d()
        u = sim.ControlSignal((0.0, 0.25), ((1.0, 0.0), (-1.0, 0.0)), clamp=False)
        traj = sim.integrate(system, u, T=0.5, h=0.01)
        # y: ydd = 1 on [0, .25], -1 on [.25, .5]
        y_quarter = 0.25 ** 2 / 2
        v_quarter = 0.25
        y_half = y_quarter + v_quarter * 0.25 - 0.25 ** 2 / 2
        assert traj.q[-1][1] == pytest.approx(y_half, abs=1e-12)

    def test_blowup_aborts(self):
        coords = ("x",)
        P = lambda t: E.parse_expr(t, coords)
        system = G.MechanicalSystem(
            coords=coords, connection=G.zero_connection(coords),
            inputs=(G.VectorField(coords, (P("x^2+1"),)),),
            q0=E.Point(coords, (0,)),
        )
        traj = sim.integrate(
            system, sim.ControlSignal.constant([1.0]), T=50.0, h=0.05,
        )
        assert traj.blown_up
        assert traj.t[-1] < 50.0


class TestSeries:
    def test_w2_is_minus_sixth_of_zz(self):
        system = flat_4d()
        coeffs = sim.series_coefficients(system, [1, 0], 2)
        zz = G.symmetric_product(system.connection, coeffs.fields[0], coeffs.fields[0])
        want = tuple(
            E.simplify(E.mul(E.const(Fraction(-1, 6)), c)) for c in zz.components
        )
        assert coeffs.fields[1].components == want

    def test_4d_terms_vanish_beyond_two(self):
        system = flat_4d()
        coeffs = sim.series_coefficients(system, [1, 0], 5)
        assert coeffs.fields[1].components == tuple(
            E.parse_expr(t, system.coords) for t in ("-1/3", "0", "0", "-1/3")
        )
        for k in (2, 3, 4):
            assert all(c == E.ZERO for c in coeffs.fields[k].components)

    def test_zero_self_product_means_first_order_only(self):
        coords = ("x", "y")
        P = lambda t: E.parse_expr(t, coords)
        system = G.MechanicalSystem(
            coords=coords, connection=G.zero_connection(coords),
            inputs=(G.VectorField(coords, (P("1"), P("0"))),),
            q0=E.Point(coords, (0, 0)),
        )
        coeffs = sim.series_coefficients(system, [1.0], 4)
        for k in range(1, 4):
            assert all(c == E.ZERO for c in coeffs.fields[k].components)

    def test_order_cap(self):
        with pytest.raises(sim.SimulatorError):
            sim.series_coefficients(flat_4d(), [1, 0], 7)

    def test_velocity_values(self):
        system = flat_4d()
        coeffs = sim.series_coefficients(system, [1, 0], 2)
        t = 0.1
        v = sim.series_velocity(coeffs, system.q0, t)
        want = np.array([t - t ** 3 / 3, t, t, t - t ** 3 / 3])
        assert np.allclose(v, want, atol=1e-15)
        assert np.allclose(sim.series_velocity(coeffs, system.q0, 0.0), 0.0)

    def test_k1_is_t_times_input(self):
        system = flat_4d()
        coeffs = sim.series_coefficients(system, [1, 0], 1)
        v = sim.series_velocity(coeffs, system.q0, 0.25)
        assert np.allclose(v, 0.25 * np.array([1, 1, 1, 1]))


class TestCompare:
    def test_exact_truncation_matches_integration(self):
        comp = sim.compare_series_ode(flat_4d(), [1, 0], order=2, T=0.5, h=1e-3)
        assert comp.max_error < 1e-9
        assert not comp.diverging

    def test_zero_input_zero_error(self):
        comp = sim.compare_series_ode(flat_4d(), [0, 0], order=2, T=0.5, h=1e-2)
        assert comp.max_error == 0.0

    def test_truncation_order_on_curved_example(self):
        comp = sim.compare_series_ode(curved_2d(), [1.0], order=1, T=0.4, h=5e-4)
        assert all(p >= 3.0 for p in comp.order_estimates)

    def test_order_improves_with_k(self):
        c1 = sim.compare_series_ode(curved_2d(), [1.0], order=1, T=0.3, h=5e-4)
        c2 = sim.compare_series_ode(curved_2d(), [1.0], order=2, T=0.3, h=5e-4)
        assert c2.max_error < c1.max_error


class TestExport:
    def test_row_format(self):
        traj = sim.integrate(
            flat_4d(), sim.ControlSignal.constant([1, 0]), T=0.02, h=0.01,
        )
        buf = io.StringIO()
        sim.export_trajectory(traj, buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0].startswith("#")
        assert len(lines) == 1 + len(traj.t)
        cells = lines[3].split(" ")
        assert len(cells) == 1 + 2 * 4
        assert float(cells[0]) == pytest.approx(0.02)
        # 17 significant digits survive a round trip
        assert float(cells[5]) == traj.v[2][0]
