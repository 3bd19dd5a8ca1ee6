"""Minimal computer-algebra kernel for multivariate analytic expressions.

Expression trees are built from exact rational constants, coordinate
variables, the arithmetic operators ``+ - * /``, integer powers and the
elementary functions ``sin cos exp log``.  Nodes are immutable; every
operation returns a new tree, so expressions are safe to share between
threads without synchronization.

``simplify`` is normalization-based: it folds constants, flattens nested
sums and products, expands products over sums and collects like monomials.
It is not a full canonical form (no trig identities), but it is idempotent
and exact on polynomial data, which is what the downstream coefficient
extraction relies on.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

Number = Union[int, float, Fraction]

FUNCTIONS = ("sin", "cos", "exp", "log")


class ExprError(Exception):
    """Base class for expression-kernel errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DomainError(ExprError):
    """Evaluation outside the domain of a partial function."""


class NotExactError(ExprError):
    """Exact evaluation requested but the expression is not rational."""


def _to_fraction(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)  # exact binary expansion
    raise TypeError(f"cannot use {type(x).__name__} as a constant")


class Expr:
    """Immutable expression node.  Use the module constructors to build."""

    __slots__ = ("_key",)

    def key(self) -> str:
        """Canonical serialization; defines structural equality and ordering."""
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({to_string(self)!r})"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Number):
        self.value = _to_fraction(value)
        self._key = f"C{self.value.numerator}/{self.value.denominator}"


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._key = f"V{name}"


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: tuple):
        self.terms = terms
        self._key = "A(" + ",".join(t._key for t in terms) + ")"


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: tuple):
        self.factors = factors
        self._key = "M(" + ",".join(f._key for f in factors) + ")"


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        self.base = base
        self.exponent = exponent
        self._key = f"P({base._key})^{exponent}"


class Call(Expr):
    __slots__ = ("func", "arg")

    def __init__(self, func: str, arg: Expr):
        self.func = func
        self.arg = arg
        self._key = f"F{func}({arg._key})"


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)


# ---------------------------------------------------------------------------
# constructors (light canonicalization: flattening and constant folding;
# the heavy lifting -- expansion, collection -- happens in simplify)

def const(x: Number) -> Const:
    return Const(x)


def var(name: str) -> Var:
    return Var(name)


def add(*args: Expr) -> Expr:
    terms = []
    for a in args:
        if isinstance(a, Add):
            terms.extend(a.terms)
        else:
            terms.append(a)
    csum = Fraction(0)
    cpos = None
    rest = []
    for t in terms:
        if isinstance(t, Const):
            csum += t.value
            if cpos is None:
                cpos = len(rest)
        else:
            rest.append(t)
    if cpos is not None and (csum != 0 or not rest):
        rest.insert(cpos, Const(csum))
    if not rest:
        return ZERO
    if len(rest) == 1:
        return rest[0]
    return Add(tuple(rest))


def mul(*args: Expr) -> Expr:
    factors = []
    for a in args:
        if isinstance(a, Mul):
            factors.extend(a.factors)
        else:
            factors.append(a)
    cprod = Fraction(1)
    cpos = None
    rest = []
    for f in factors:
        if isinstance(f, Const):
            cprod *= f.value
            if cpos is None:
                cpos = len(rest)
        else:
            rest.append(f)
    if cprod == 0:
        return ZERO
    if cpos is not None and (cprod != 1 or not rest):
        rest.insert(cpos, Const(cprod))
    if not rest:
        return ONE
    if len(rest) == 1:
        return rest[0]
    return Mul(tuple(rest))


def pow_(base: Expr, exponent: int) -> Expr:
    if not isinstance(exponent, int):
        raise TypeError("exponent must be an integer")
    if exponent == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0 and exponent < 0:
            raise DomainError("division by zero in constant power")
        if exponent == 0:
            return ONE
        return Const(base.value ** exponent)
    if isinstance(base, Pow):
        return pow_(base.base, base.exponent * exponent)
    if exponent == 0:
        return ONE
    return Pow(base, exponent)


def call(func: str, arg: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise ValueError(f"unknown function {func!r}")
    return Call(func, arg)


def neg(e: Expr) -> Expr:
    """Negate, folding the sign into the term's rational coefficient."""
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Mul):
        factors = list(e.factors)
        for i, f in enumerate(factors):
            if isinstance(f, Const):
                factors[i] = Const(-f.value)
                return mul(*factors)
        return mul(MINUS_ONE, *factors)
    return mul(MINUS_ONE, e)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0:
            raise DomainError("division by constant zero")
        return mul(a, Const(1 / b.value))
    return mul(a, pow_(b, -1))


# ---------------------------------------------------------------------------
# normal form: mapping  monomial -> coefficient
#
# A monomial is a sorted tuple of (atom, exponent) pairs with nonzero integer
# exponents.  Atoms are Var or Call nodes, or Add nodes in normal form (the
# latter only with negative exponents: positive powers of sums are expanded).

_NF_CACHE: dict[str, Expr] = {}


def _nf_combine(acc: dict, mono: tuple, c: Fraction) -> None:
    c2 = acc.get(mono, Fraction(0)) + c
    if c2 == 0:
        acc.pop(mono, None)
    else:
        acc[mono] = c2


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    powers: dict[str, list] = {}
    for atom, k in m1 + m2:
        ak = atom.key()
        if ak in powers:
            powers[ak][1] += k
        else:
            powers[ak] = [atom, k]
    items = [
        (atom, k)
        for atom, k in (powers[a] for a in sorted(powers))
        if k != 0
    ]
    return tuple(items)


def _nf_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            _nf_combine(out, _mono_mul(m1, m2), c1 * c2)
    return out


def _nf_pow(base: dict, k: int) -> dict:
    if k == 0:
        return {(): Fraction(1)}
    if len(base) == 1:
        (mono, c), = base.items()
        if c == 0:
            raise DomainError("division by zero")
        return {tuple((a, e * k) for a, e in mono): c ** k}
    if k > 0:
        out = base
        for _ in range(k - 1):
            out = _nf_mul(out, base)
        return out
    if not base:
        raise DomainError("division by zero")
    atom = _nf_to_expr(base)
    return {((atom, k),): Fraction(1)}


def _nf(e: Expr) -> dict:
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0 else {}
    if isinstance(e, Var):
        return {((e, 1),): Fraction(1)}
    if isinstance(e, Call):
        atom = Call(e.func, simplify(e.arg))
        return {((atom, 1),): Fraction(1)}
    if isinstance(e, Add):
        acc: dict = {}
        for t in e.terms:
            for mono, c in _nf(t).items():
                _nf_combine(acc, mono, c)
        return acc
    if isinstance(e, Mul):
        out: dict = {(): Fraction(1)}
        for f in e.factors:
            out = _nf_mul(out, _nf(f))
            if not out:
                return out
        return out
    if isinstance(e, Pow):
        return _nf_pow(_nf(e.base), e.exponent)
    raise TypeError(f"unknown node {type(e).__name__}")


def _mono_key(mono: tuple) -> str:
    return "|".join(f"{a.key()}^{k}" for a, k in mono)


def _nf_to_expr(nf: dict) -> Expr:
    if not nf:
        return ZERO
    terms = []
    for mono in sorted(nf, key=_mono_key):
        c = nf[mono]
        factors = []
        for atom, k in mono:
            factors.append(atom if k == 1 else Pow(atom, k))
        if not factors:
            terms.append(Const(c))
        elif c == 1 and len(factors) == 1:
            terms.append(factors[0])
        elif c == 1:
            terms.append(Mul(tuple(factors)))
        else:
            terms.append(Mul((Const(c),) + tuple(factors)))
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def _poly_divide(num: dict, den: dict):
    """Exact multivariate polynomial division of NF dicts (atoms act as
    variables; all exponents must be nonnegative).  None when not exact."""
    atoms: dict = {}
    for mono in list(num) + list(den):
        for a, k in mono:
            if k < 0:
                return None
            atoms.setdefault(a.key(), a)
    order = sorted(atoms)
    pos = {ak: i for i, ak in enumerate(order)}

    def expvec(mono):
        v = [0] * len(order)
        for a, k in mono:
            v[pos[a.key()]] = k
        return tuple(v)

    def grlex(v):
        return (sum(v), v)

    N = {expvec(mo): c for mo, c in num.items()}
    D = {expvec(mo): c for mo, c in den.items()}
    if not D:
        return None
    dlead = max(D, key=grlex)
    dcoef = D[dlead]
    Q: dict = {}
    guard = 0
    while N:
        guard += 1
        if guard > 5000:
            return None
        nlead = max(N, key=grlex)
        qv = tuple(a - b for a, b in zip(nlead, dlead))
        if any(x < 0 for x in qv):
            return None
        qc = N[nlead] / dcoef
        Q[qv] = Q.get(qv, Fraction(0)) + qc
        for dv, dc in D.items():
            tv = tuple(a + b for a, b in zip(qv, dv))
            c = N.get(tv, Fraction(0)) - qc * dc
            if c == 0:
                N.pop(tv, None)
            else:
                N[tv] = c
    out: dict = {}
    for v, c in Q.items():
        mono = tuple(
            (atoms[ak], k) for ak, k in zip(order, v) if k != 0
        )
        out[mono] = c
    return out


def _cancel_common_denominators(nf: dict) -> dict:
    """Cancel sum-atoms that divide out of every term exactly:
    (1+3x+3x^2+x^3)/(1+x)^2 -> 1+x, and (1+x)/(1+x)^2 -> 1/(1+x)."""
    for _round in range(8):
        if not nf:
            return nf
        common = None
        for mono in nf:
            negs = {a.key(): (a, -k) for a, k in mono if k < 0 and isinstance(a, Add)}
            if common is None:
                common = negs
            else:
                common = {
                    ak: (a, min(t, negs[ak][1]))
                    for ak, (a, t) in common.items() if ak in negs
                }
            if not common:
                return nf
        progressed = False
        for ak, (S, t) in sorted(common.items()):
            stripped: dict = {}
            for mono, c in nf.items():
                newmono = []
                for a, k in mono:
                    if a.key() == ak:
                        if k + t != 0:
                            newmono.append((a, k + t))
                    else:
                        newmono.append((a, k))
                stripped[tuple(newmono)] = c
            if any(k < 0 for mono in stripped for _, k in mono):
                continue  # other denominators remain: not a plain polynomial
            S_nf = _nf(S)
            q = _poly_divide(stripped, S_nf)
            if q is not None:
                if t > 1:
                    q = _nf_mul(q, {((S, -(t - 1)),): Fraction(1)})
                nf = q
                progressed = True
                break
            if all(sum(k for _, k in mono) == 0 for mono in stripped):
                continue  # constant numerator: nothing further to try
            r = _poly_divide(S_nf, stripped)
            if r is not None:
                num_part = _nf_pow(stripped, 1 - t) if t != 1 else {(): Fraction(1)}
                den_part = _nf_pow(r, -t)
                nf = _nf_mul(num_part, den_part)
                progressed = True
                break
        if not progressed:
            return nf
    return nf


def simplify(e: Expr) -> Expr:
    """Normalize: fold constants, expand products over sums, collect like
    monomials, and cancel sum-factors common to every denominator."""
    cached = _NF_CACHE.get(e.key())
    if cached is not None:
        return cached
    out = _nf_to_expr(_cancel_common_denominators(_nf(e)))
    if len(_NF_CACHE) > 100_000:
        _NF_CACHE.clear()
    _NF_CACHE[e.key()] = out
    _NF_CACHE[out.key()] = out
    return out


# ---------------------------------------------------------------------------
# differentiation

def _diff(e: Expr, name: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == name else ZERO
    if isinstance(e, Add):
        return add(*[_diff(t, name) for t in e.terms])
    if isinstance(e, Mul):
        parts = []
        for i, f in enumerate(e.factors):
            df = _diff(f, name)
            if isinstance(df, Const) and df.value == 0:
                continue
            parts.append(mul(*e.factors[:i], df, *e.factors[i + 1:]))
        return add(*parts)
    if isinstance(e, Pow):
        return mul(Const(e.exponent), pow_(e.base, e.exponent - 1), _diff(e.base, name))
    if isinstance(e, Call):
        da = _diff(e.arg, name)
        if e.func == "sin":
            outer = call("cos", e.arg)
        elif e.func == "cos":
            outer = neg(call("sin", e.arg))
        elif e.func == "exp":
            outer = call("exp", e.arg)
        else:  # log
            outer = pow_(e.arg, -1)
        return mul(outer, da)
    raise TypeError(f"unknown node {type(e).__name__}")


def diff(e: Expr, name: str) -> Expr:
    """Exact partial derivative with respect to the coordinate ``name``."""
    return simplify(_diff(e, name))


# ---------------------------------------------------------------------------
# evaluation

def _eval(e: Expr, env: Mapping[str, Number]):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExprError(f"no value for variable {e.name!r}") from None
    if isinstance(e, Add):
        return sum(_eval(t, env) for t in e.terms)
    if isinstance(e, Mul):
        out = 1
        for f in e.factors:
            out *= _eval(f, env)
        return out
    if isinstance(e, Pow):
        v = _eval(e.base, env)
        if e.exponent < 0 and v == 0:
            raise DomainError("division by zero")
        return v ** e.exponent
    if isinstance(e, Call):
        x = float(_eval(e.arg, env))
        if e.func == "sin":
            return math.sin(x)
        if e.func == "cos":
            return math.cos(x)
        if e.func == "exp":
            try:
                return math.exp(x)
            except OverflowError:
                raise DomainError("exp overflow") from None
        if x <= 0:
            raise DomainError("log of non-positive value")
        return math.log(x)
    raise TypeError(f"unknown node {type(e).__name__}")


def evaluate(e: Expr, env) -> float:
    """IEEE-double evaluation at a point (Point or name->value mapping)."""
    if isinstance(env, Point):
        env = env.as_dict()
    return float(_eval(e, env))


def evaluate_exact(e: Expr, env) -> Fraction:
    """Exact rational evaluation; raises NotExactError on sin/cos/exp/log."""
    if isinstance(env, Point):
        env = env.as_dict()
    if not is_polynomial_or_rational(e):
        raise NotExactError("expression contains a transcendental function")
    for v in env.values():
        if not isinstance(v, (int, Fraction)):
            raise NotExactError("point has non-rational coordinates")
    return Fraction(_eval(e, env))


def free_variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Add):
        out = set()
        for t in e.terms:
            out |= free_variables(t)
        return out
    if isinstance(e, Mul):
        out = set()
        for f in e.factors:
            out |= free_variables(f)
        return out
    if isinstance(e, Pow):
        return free_variables(e.base)
    return free_variables(e.arg)


def is_polynomial(e: Expr) -> bool:
    """True when the tree is a polynomial (no functions, no negative powers)."""
    if isinstance(e, (Const, Var)):
        return True
    if isinstance(e, Add):
        return all(is_polynomial(t) for t in e.terms)
    if isinstance(e, Mul):
        return all(is_polynomial(f) for f in e.factors)
    if isinstance(e, Pow):
        return e.exponent >= 0 and is_polynomial(e.base)
    return False


def is_polynomial_or_rational(e: Expr) -> bool:
    if isinstance(e, (Const, Var)):
        return True
    if isinstance(e, Add):
        return all(is_polynomial_or_rational(t) for t in e.terms)
    if isinstance(e, Mul):
        return all(is_polynomial_or_rational(f) for f in e.factors)
    if isinstance(e, Pow):
        return is_polynomial_or_rational(e.base)
    return False


# ---------------------------------------------------------------------------
# points

class Point:
    """Coordinate-indexed vector of numbers (rationals preserved exactly)."""

    __slots__ = ("coords", "values")

    def __init__(self, coords: Sequence[str], values: Iterable[Number]):
        self.coords = tuple(coords)
        vals = []
        for v in values:
            vals.append(v if isinstance(v, (int, Fraction)) else float(v))
        self.values = tuple(vals)
        if len(self.coords) != len(self.values):
            raise ValueError(
                f"point has {len(self.values)} values for {len(self.coords)} coordinates"
            )

    def as_dict(self) -> dict:
        return dict(zip(self.coords, self.values))

    def as_floats(self) -> tuple:
        return tuple(float(v) for v in self.values)

    def is_rational(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Point)
            and self.coords == other.coords
            and self.values == other.values
        )

    def __hash__(self) -> int:
        return hash((self.coords, self.values))

    def __repr__(self) -> str:
        pairs = ", ".join(f"{c}={v}" for c, v in zip(self.coords, self.values))
        return f"Point({pairs})"


# ---------------------------------------------------------------------------
# parsing
#
# expr   := term (('+'|'-') term)*
# term   := factor (('*'|'/') factor)*
# factor := base ('^' integer)?
# base   := number | ident | func '(' expr ')' | '(' expr ')' | '-' base
#
# The grammar binds unary minus tighter than '^' ("-x^2" is (-x)^2); the
# printer never relies on that corner (it emits "-1*x^2" instead).

class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_char(self) -> str:
        c = self.peek()
        self.pos += 1
        return c

    def take_number(self) -> Fraction:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        tok = self.text[start:self.pos]
        if not tok or tok == ".":
            raise ParseError("expected a number", start)
        return Fraction(tok if not tok.startswith(".") else "0" + tok)

    def take_ident(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        return self.text[start:self.pos]

    def take_integer(self) -> int:
        self.skip_ws()
        start = self.pos
        sign = 1
        if self.peek() == "-":
            self.pos += 1
            sign = -1
        digits_start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == digits_start:
            raise ParseError("expected an integer exponent", start)
        return sign * int(self.text[digits_start:self.pos])


class _Parser:
    def __init__(self, text: str, coords: Sequence[str]):
        self.tk = _Tokenizer(text)
        self.coords = set(coords)

    def parse(self) -> Expr:
        e = self.expr()
        self.tk.skip_ws()
        if self.tk.pos != len(self.tk.text):
            raise ParseError(
                f"unexpected {self.tk.text[self.tk.pos]!r}", self.tk.pos
            )
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tk.peek() in ("+", "-"):
            op = self.tk.take_char()
            t = self.term()
            e = add(e, t if op == "+" else neg(t))
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.tk.peek() in ("*", "/"):
            op = self.tk.take_char()
            f = self.factor()
            e = mul(e, f) if op == "*" else div(e, f)
        return e

    def factor(self) -> Expr:
        b = self.base()
        if self.tk.peek() == "^":
            self.tk.take_char()
            k = self.tk.take_integer()
            return pow_(b, k)
        return b

    def base(self) -> Expr:
        c = self.tk.peek()
        if c == "-":
            self.tk.take_char()
            return neg(self.base())
        if c == "(":
            self.tk.take_char()
            e = self.expr()
            if self.tk.peek() != ")":
                raise ParseError("expected ')'", self.tk.pos)
            self.tk.take_char()
            return e
        if c.isdigit() or c == ".":
            return Const(self.tk.take_number())
        if c.isalpha() or c == "_":
            pos = self.tk.pos
            name = self.tk.take_ident()
            if name in FUNCTIONS:
                if self.tk.peek() != "(":
                    raise ParseError(f"expected '(' after {name}", self.tk.pos)
                self.tk.take_char()
                a = self.expr()
                if self.tk.peek() != ")":
                    raise ParseError("expected ')'", self.tk.pos)
                self.tk.take_char()
                return Call(name, a)
            if name not in self.coords:
                raise ParseError(f"unknown identifier {name!r}", pos)
            return Var(name)
        raise ParseError(
            f"unexpected {c!r}" if c else "unexpected end of input", self.tk.pos
        )


def parse_expr(text: str, coords: Sequence[str]) -> Expr:
    """Parse ``text`` over the declared coordinate names."""
    return _Parser(text, coords).parse()


# ---------------------------------------------------------------------------
# printing (round-trips through parse_expr for constructor-built trees)
#
# Terms are printed verbatim, keeping signed rational coefficients at their
# stored factor positions, so that re-parsing reproduces the same tree.

def _s_atom(e: Expr) -> str:
    """A grammar `base`: parenthesize anything that is not atomic."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_s_expr(e.arg)})"
    if isinstance(e, Const) and e.value.denominator == 1 and e.value >= 0:
        return str(e.value.numerator)
    return f"({_s_expr(e)})"


def _s_const(v: Fraction) -> list:
    """A rational as (op, text) chunks: 3 -> *3 ; -2/5 -> *-2 /5 ; 1/2 -> /2."""
    parts = []
    if v.numerator != 1:
        parts.append(("*", str(v.numerator)))
    elif v.denominator == 1:
        parts.append(("*", "1"))
    if v.denominator != 1:
        parts.append(("/", str(v.denominator)))
    return parts


def _s_term(t: Expr, leading: bool) -> str:
    """Print one additive term verbatim (may start with a unary minus)."""
    if isinstance(t, Const):
        v = t.value
        s = str(v.numerator)
        if v.denominator != 1:
            s += "/" + str(v.denominator)
        return s
    factors = t.factors if isinstance(t, Mul) else (t,)
    parts: list = []  # (op, text) with op in "*/"
    for i, f in enumerate(factors):
        if isinstance(f, Const):
            chunk = _s_const(f.value)
            if (
                i == 0
                and f.value == -1
                and len(factors) > 1
                and not (isinstance(factors[1], Pow) and factors[1].exponent < 0)
                and not (leading and isinstance(factors[1], Pow))
            ):
                # cosmetic: -1*x  ->  -x, except where '-' would grab a power
                parts.append(("*", "-\x00"))  # marker: bare minus prefix
            else:
                parts.extend(chunk)
        elif isinstance(f, Pow) and f.exponent < 0:
            s = _s_atom(f.base)
            k = -f.exponent
            parts.append(("/", s if k == 1 else f"{s}^{k}"))
        elif isinstance(f, Pow):
            parts.append(("*", f"{_s_atom(f.base)}^{f.exponent}"))
        else:
            parts.append(("*", _s_atom(f)))
    if parts and parts[0][0] == "/":
        parts.insert(0, ("*", "1"))
    out = ""
    for op, s in parts:
        if s == "-\x00":
            # bare minus merges with the next chunk
            out += ("-" if not out else op + "-")
            continue
        if not out or out.endswith("-"):
            out += s
        else:
            out += op + s
    return out


def _s_expr(e: Expr) -> str:
    terms = e.terms if isinstance(e, Add) else (e,)
    out = []
    for i, t in enumerate(terms):
        s = _s_term(t, leading=(i == 0))
        if i > 0 and not s.startswith("-"):
            s = "+" + s
        out.append(s)
    return "".join(out)


def to_string(e: Expr) -> str:
    """Render in the input grammar; parse_expr(to_string(e)) == e structurally."""
    return _s_expr(e)
