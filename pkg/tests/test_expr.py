import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from symcon import expr as E

COORDS = ("x", "y", "z", "w")


def P(text, coords=COORDS):
    return E.parse_expr(text, coords)


class TestParse:
    def test_paper_field_component(self):
        e = P("1+z")
        assert isinstance(e, E.Add)
        assert e.terms == (E.Const(1), E.Var("z"))

    def test_zero(self):
        assert P("0") == E.Const(0)

    def test_trig_wellformed(self):
        e = P("sin(x)^2 + cos(x)^2")
        assert isinstance(e, E.Add)

    def test_decimal_is_exact(self):
        assert P("2.5") == E.Const(Fraction(5, 2))
        assert P("0.1") == E.Const(Fraction(1, 10))

    def test_unknown_identifier(self):
        with pytest.raises(E.ParseError):
            P("q + 1")

    def test_syntax_error_position(self):
        with pytest.raises(E.ParseError) as ei:
            P("x + * y")
        assert ei.value.position == 4

    def test_unary_minus_binds_before_power(self):
        # grammar: factor := base ('^' int)?, base := '-' base | ...
        e = P("-x^2")
        assert E.evaluate(e, {"x": 3.0}) == 9.0

    def test_integer_exponent_signed(self):
        assert E.evaluate(P("x^-2"), {"x": 2.0}) == 0.25

    def test_function_requires_parens(self):
        with pytest.raises(E.ParseError):
            P("sin x")


class TestPrintParseRoundTrip:
    CASES = [
        "1+z", "0", "sin(x)^2+cos(x)^2", "-x^2+1", "x*y/2", "1/(1+x)",
        "-(1+x)", "x^-2", "2.5*x", "x/y/z", "-2*x^3-1/2", "exp(log(x))",
        "x-y-z", "(x*y)^2", "-x", "3/2", "x*-2", "sin(x+y*z)",
    ]

    @pytest.mark.parametrize("text", CASES)
    def test_round_trip(self, text):
        e = P(text)
        assert E.parse_expr(E.to_string(e), COORDS) == e

    def test_round_trip_of_simplified(self):
        for text in self.CASES:
            s = E.simplify(P(text))
            assert E.parse_expr(E.to_string(s), COORDS) == s


def exprs(max_depth=4):
    """Random constructor-built trees over (x, y)."""
    leaves = st.one_of(
        st.integers(-3, 3).map(E.const),
        st.fractions(min_value=-2, max_value=2, max_denominator=6).map(E.const),
        st.sampled_from(["x", "y"]).map(E.var),
    )

    def safe_pow(bk):
        try:
            return E.pow_(bk[0], bk[1])
        except E.DomainError:  # 0 ** negative during construction
            return bk[0]

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda ab: E.add(*ab)),
            st.tuples(children, children).map(lambda ab: E.mul(*ab)),
            st.tuples(children, children).map(lambda ab: E.sub(*ab)),
            children.map(E.neg),
            st.tuples(children, st.integers(-2, 3)).map(safe_pow),
            st.tuples(st.sampled_from(list(E.FUNCTIONS)), children).map(
                lambda fa: E.call(fa[0], fa[1])
            ),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@given(exprs())
@settings(max_examples=150, deadline=None)
def test_print_parse_identity(e):
    try:
        s = E.to_string(e)
    except E.DomainError:
        return
    assert E.parse_expr(s, ("x", "y")) == e


@given(exprs())
@settings(max_examples=100, deadline=None)
def test_simplify_idempotent_and_value_preserving(e):
    try:
        s1 = E.simplify(e)
    except E.DomainError:
        return
    assert E.simplify(s1) == s1
    rng = random.Random(7)
    for _ in range(5):
        env = {"x": rng.uniform(-1, 1), "y": rng.uniform(-1, 1)}
        try:
            v1 = E.evaluate(e, env)
            v2 = E.evaluate(s1, env)
        except E.DomainError:
            continue
        if math.isinf(v1) or math.isnan(v1):
            continue
        assert abs(v1 - v2) <= 1e-9 * max(1.0, abs(v1), abs(v2))


class TestSimplify:
    def test_additive_identity(self):
        assert E.simplify(P("x + 0")) == E.Var("x")

    def test_expand_and_cancel(self):
        assert E.simplify(P("2*(1+z) - 2 - 2*z")) == E.Const(0)

    def test_collect_monomials(self):
        assert E.simplify(P("x*y + y*x")) == E.simplify(P("2*x*y"))

    def test_constant_fold(self):
        assert E.simplify(P("2*3 + 1/2")) == E.Const(Fraction(13, 2))

    def test_rational_cancellation(self):
        e = P("(1+3*x+3*x^2+x^3)/(1+2*x+x^2)")
        assert E.simplify(e) == E.simplify(P("1+x"))

    def test_eval_agreement_20_points(self):
        rng = random.Random(3)
        for text in ["(1+y)*(1+z)-y*z", "x^3/(1+x^2)", "sin(x)*cos(y)+x^2"]:
            e = P(text)
            s = E.simplify(e)
            for _ in range(20):
                env = {c: rng.uniform(-1, 1) for c in COORDS}
                v1, v2 = E.evaluate(e, env), E.evaluate(s, env)
                assert abs(v1 - v2) <= 1e-12 * max(1.0, abs(v1))


class TestDiff:
    def test_constant_slope(self):
        assert E.diff(P("1+z"), "z") == E.Const(1)

    def test_product_rule(self):
        assert E.diff(P("(1+y)*(1+z)"), "y") == P("1+z")

    def test_against_central_difference(self):
        e = P("sin(x)*x")
        d = E.diff(e, "x")
        h, x0 = 1e-5, 0.7
        fd = (E.evaluate(e, {"x": x0 + h}) - E.evaluate(e, {"x": x0 - h})) / (2 * h)
        assert abs(E.evaluate(d, {"x": x0}) - fd) < 1e-8

    def test_invalid_variable_is_zero_direction(self):
        # non-coordinate names never appear; diff by an unused name is 0
        assert E.diff(P("x*y"), "w") == E.Const(0)

    def test_linearity(self):
        e1, e2 = P("sin(x)*y"), P("x^2+y")
        lhs = E.diff(E.add(E.mul(E.const(3), e1), e2), "x")
        rhs = E.simplify(E.add(E.mul(E.const(3), E.diff(e1, "x")), E.diff(e2, "x")))
        assert lhs == rhs

    def test_clairaut(self):
        rng = random.Random(11)
        for text in ["sin(x*y)", "x^2*y^3 + exp(x+y)", "log(1+x^2+y^2)"]:
            e = P(text)
            mixed1 = E.diff(E.diff(e, "x"), "y")
            mixed2 = E.diff(E.diff(e, "y"), "x")
            for _ in range(10):
                env = {c: rng.uniform(-0.8, 0.8) for c in COORDS}
                v1, v2 = E.evaluate(mixed1, env), E.evaluate(mixed2, env)
                assert abs(v1 - v2) <= 1e-10 * max(1.0, abs(v1))

    def test_quotient(self):
        d = E.diff(P("x/(1+y)"), "y")
        for yv in (0.3, -0.4, 2.0):
            got = E.evaluate(d, {"x": 1.5, "y": yv})
            assert abs(got - (-1.5 / (1 + yv) ** 2)) < 1e-12


class TestEval:
    def test_paper_point(self):
        assert E.evaluate(P("1+z"), E.Point(COORDS, (0, 0, 0, 0))) == 1.0

    def test_product(self):
        assert E.evaluate(P("x*y", ("x", "y")), {"x": 3, "y": 4}) == 12.0

    def test_division_by_zero(self):
        with pytest.raises(E.DomainError):
            E.evaluate(P("1/x", ("x",)), {"x": 0})

    def test_log_domain(self):
        with pytest.raises(E.DomainError):
            E.evaluate(P("log(x)", ("x",)), {"x": -1.0})

    def test_exact_rational(self):
        v = E.evaluate_exact(P("x*y/3", ("x", "y")), {"x": Fraction(1, 2), "y": Fraction(3)})
        assert v == Fraction(1, 2)

    def test_exact_refuses_transcendental(self):
        with pytest.raises(E.NotExactError):
            E.evaluate_exact(P("sin(x)", ("x",)), {"x": Fraction(0)})


class TestPoint:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            E.Point(("x", "y"), (1,))

    def test_rationals_preserved(self):
        p = E.Point(("x",), (Fraction(1, 3),))
        assert p.is_rational()
        assert p.as_floats() == (pytest.approx(1 / 3),)
