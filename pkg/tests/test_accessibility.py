import random

import numpy as np
import pytest

from symcon import accessibility as acc
from symcon import expr as E
from symcon import geometry as G


def flat_system(coords, comps, q0=None):
    P = lambda t: E.parse_expr(t, coords)
    fields = tuple(
        G.VectorField(coords, tuple(P(c) for c in row)) for row in comps
    )
    return G.MechanicalSystem(
        coords=coords, connection=G.zero_connection(coords), inputs=fields,
        q0=E.Point(coords, q0 or [0] * len(coords)),
    )


@pytest.fixture(scope="module")
def fixture_4d():
    return flat_system(
        ("x", "y", "z", "w"),
        [("1+z", "1", "1", "1+y"), ("0", "1", "-2", "-(1+y)")],
    )


def brute_force_trees(m, degree):
    """Independent enumerator: all splits, canonicalized afterwards."""
    if degree == 1:
        return {(0, i, ()) for i in range(m)}
    out = set()
    for d1 in range(1, degree):
        for a in brute_force_trees(m, d1):
            for b in brute_force_trees(m, degree - d1):
                out.add((1, a, b) if a <= b else (1, b, a))
    return out


class TestEnumerate:
    def test_degree_two_terms(self, fixture_4d):
        terms = acc.enumerate_products(fixture_4d.inputs, fixture_4d.connection, 2)
        names = {str(t) for t in terms}
        assert names == {"Y1", "Y2", "<Y1:Y1>", "<Y1:Y2>", "<Y2:Y2>"}
        bad = {str(t) for t in terms if t.is_bad}
        assert bad == {"<Y1:Y1>", "<Y2:Y2>"}

    def test_gamma_and_degree(self, fixture_4d):
        terms = acc.enumerate_products(fixture_4d.inputs, fixture_4d.connection, 3)
        t = next(t for t in terms if t.degree == 3 and t.gamma == (2, 1))
        assert not t.is_bad

    @pytest.mark.parametrize("m,degree", [(2, 3), (2, 4), (3, 3)])
    def test_counts_match_brute_force(self, m, degree):
        coords = tuple(f"q{i+1}" for i in range(m))
        comps = [["1" if j == i else "0" for j in range(m)] for i in range(m)]
        system = flat_system(coords, comps)
        terms = acc.enumerate_products(system.inputs, system.connection, degree)
        want = sum(len(brute_force_trees(m, d)) for d in range(1, degree + 1))
        assert len(terms) == want
        assert len({t.tree for t in terms}) == len(terms)

    def test_parity_by_occurrence_counts(self):
        for m, degree in [(2, 4), (3, 4)]:
            for tree in brute_force_trees(m, degree):
                pass  # parity definition is checked through gamma below
        coords = ("a", "b")
        system = flat_system(coords, [["1", "0"], ["0", "1"]])
        for t in acc.enumerate_products(system.inputs, system.connection, 4):
            assert t.is_bad == all(g % 2 == 0 for g in t.gamma)
            assert sum(t.gamma) == t.degree

    def test_cap_refused(self, fixture_4d):
        with pytest.raises(acc.AccessibilityError, match="cap"):
            acc.enumerate_products(fixture_4d.inputs, fixture_4d.connection, 6)


class TestClosureRanks:
    def test_4d_fixture_accessible(self, fixture_4d):
        rep = acc.symmetric_closure_rank(fixture_4d)
        assert rep.rank == 4 and rep.spans
        assert rep.stabilized_degree == 2
        lie = acc.lie_symmetric_closure_rank(fixture_4d)
        assert lie.spans

    def test_rank_at_random_points(self, fixture_4d):
        rng = random.Random(7)
        for _ in range(10):
            q = E.Point(fixture_4d.coords, [rng.uniform(-0.1, 0.1) for _ in range(4)])
            rep = acc.symmetric_closure_rank(fixture_4d, q0=q)
            assert rep.rank == 4

    def test_single_constant_field_rank_one(self):
        system = flat_system(("x", "y"), [["1", "0"]])
        rep = acc.symmetric_closure_rank(system)
        assert rep.rank == 1 and not rep.spans
        lie = acc.lie_symmetric_closure_rank(system)
        assert lie.rank == 1 and not lie.spans

    def test_monotone_filtration(self, fixture_4d):
        rep = acc.lie_symmetric_closure_rank(fixture_4d)
        ranks = [r for _, r in rep.ranks_by_degree]
        assert ranks == sorted(ranks)
        assert all(r <= fixture_4d.n for r in ranks)

    def test_lie_rank_geq_sym_rank(self):
        # bracket direction only reachable through the Lie closure
        system = flat_system(("x", "y", "z"), [["1", "0", "0"], ["0", "1", "x"]])
        sym = acc.symmetric_closure_rank(system)
        lie = acc.lie_symmetric_closure_rank(system)
        assert lie.rank >= sym.rank

    def test_matches_finite_difference_products(self):
        # degree-2 closure rank against numerically computed products
        coords = ("x", "y", "z")
        system = flat_system(
            coords, [["1", "x*y", "z"], ["0", "1+x", "y"]],
        )
        rep = acc.symmetric_closure_rank(system, max_degree=2)

        def fd_sym(Xc, Yc, q, h=1e-6):
            def at(comps, qq):
                env = dict(zip(coords, qq))
                return np.array([E.evaluate(E.parse_expr(c, coords), env) for c in comps])
            def jac(comps, qq):
                J = np.zeros((3, 3))
                for b in range(3):
                    qp = list(qq); qp[b] += h
                    qm = list(qq); qm[b] -= h
                    J[:, b] = (at(comps, qp) - at(comps, qm)) / (2 * h)
                return J
            return jac(Yc, q) @ at(Xc, q) + jac(Xc, q) @ at(Yc, q)

        q = [0.0, 0.0, 0.0]
        Y1c, Y2c = ["1", "x*y", "z"], ["0", "1+x", "y"]
        rows = [
            [1, 0, 0], [0, 1, 0],
        ]
        rows[0] = [E.evaluate(E.parse_expr(c, coords), dict(zip(coords, q))) for c in Y1c]
        rows[1] = [E.evaluate(E.parse_expr(c, coords), dict(zip(coords, q))) for c in Y2c]
        rows.append(fd_sym(Y1c, Y1c, q))
        rows.append(fd_sym(Y1c, Y2c, q))
        rows.append(fd_sym(Y2c, Y2c, q))
        want = np.linalg.matrix_rank(np.array(rows, dtype=float), tol=1e-8)
        assert rep.rank == want


class TestSufficientConditions:
    def test_4d_fixture_fails_for_original_basis(self, fixture_4d):
        ok, details = acc.sufficient_conditions_check(fixture_4d)
        assert not ok
        failures = {d.term for d in details if not d.passed}
        assert failures == {"<Y1:Y1>", "<Y2:Y2>"}

    def test_vanishing_diagonals_pass(self):
        # constant fields in flat space: every product vanishes
        system = flat_system(("x", "y"), [["1", "0"], ["0", "1"]])
        ok, details = acc.sufficient_conditions_check(system, max_degree=2)
        assert ok
        assert all(d.residual == 0.0 for d in details)

    def test_projected_basis_passes(self):
        # the basis produced by the decision procedure for the x,y,z projection
        coords = ("x", "y", "z")
        xyz = flat_system(coords, [("1+z", "1", "1"), ("0", "1", "-2")])
        B = [[0, 1], [2, 1]]
        new = [
            G.linear_combination(list(xyz.inputs), row) for row in B
        ]
        ok, _ = acc.sufficient_conditions_check(xyz, basis=new, max_degree=2)
        assert ok

    def test_scale_invariance(self, fixture_4d):
        scaled = [
            G.linear_combination([f], [c])
            for f, c in zip(fixture_4d.inputs, (5, -3))
        ]
        ok_scaled, det_scaled = acc.sufficient_conditions_check(
            fixture_4d, basis=scaled
        )
        ok_orig, det_orig = acc.sufficient_conditions_check(fixture_4d)
        assert ok_scaled == ok_orig
        passed_scaled = {d.term: d.passed for d in det_scaled}
        passed_orig = {d.term: d.passed for d in det_orig}
        assert passed_scaled == passed_orig


class TestSingleInput:
    def test_dim_one_controllable(self):
        system = flat_system(("x",), [["1"]])
        rep = acc.single_input_verdict(system)
        assert rep.stlcc

    def test_dim_two_not(self):
        system = flat_system(("x", "y"), [["1", "x"]])
        rep = acc.single_input_verdict(system)
        assert not rep.stlcc

    def test_dim_three_diag_in_span_still_not(self):
        system = flat_system(("x", "y", "z"), [["1", "0", "0"]])
        rep = acc.single_input_verdict(system)
        assert not rep.stlcc
        assert rep.diag_in_span  # <Y:Y> = 0 here

    def test_requires_single_input(self):
        system = flat_system(("x", "y"), [["1", "0"], ["0", "1"]])
        with pytest.raises(acc.AccessibilityError):
            acc.single_input_verdict(system)


def test_flat_constant_fields_lca_iff_full_actuation():
    full = flat_system(("x", "y"), [["1", "0"], ["0", "1"]])
    assert acc.lie_symmetric_closure_rank(full).spans
    under = flat_system(("x", "y"), [["1", "0"]])
    assert not acc.lie_symmetric_closure_rank(under).spans


def test_analyze_bundles_everything(fixture_4d):
    rep = acc.analyze(fixture_4d)
    assert rep.sym.spans and rep.lie.spans
    assert not rep.sufficient_ok
    assert rep.single_input is None
    assert len(rep.products) == len(rep.product_values)
