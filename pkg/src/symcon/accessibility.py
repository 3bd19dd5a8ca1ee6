"""Product closures and controllability rank tests.

Builds the symmetric-product closure of the input fields (as bracketing
trees up to commutativity), classifies each term as good or bad by the
parity of its occurrence counts, and evaluates pointwise rank conditions:

* symmetric closure spans the tangent space  ->  accessibility from rest,
* Lie closure of the symmetric closure spans ->  configuration accessibility,
* every bad product in the span of lower-degree good products ->
  sufficient conditions for small-time local configuration controllability.

Closures are truncated at a degree cap; verdicts are always reported
relative to the truncation degree, never as unconditional statements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import expr as ex
from . import linalg
from .geometry import (
    Connection,
    MechanicalSystem,
    VectorField,
    evaluate_fields,
    lie_bracket,
    symmetric_product,
)

DEGREE_CAP = 5


class AccessibilityError(Exception):
    pass


@dataclass(frozen=True)
class SymProductTerm:
    """One bracketing tree of input indices with its evaluated field.

    ``tree`` is a nested tuple: leaves are (0, i, ()) for input index i,
    nodes are (1, left, right) with left <= right (commutativity).
    """

    tree: tuple
    gamma: tuple
    value: VectorField

    @property
    def degree(self) -> int:
        return sum(self.gamma)

    @property
    def is_bad(self) -> bool:
        return all(g % 2 == 0 for g in self.gamma)

    @property
    def parity(self) -> str:
        return "bad" if self.is_bad else "good"

    def __str__(self) -> str:
        return _tree_str(self.tree)


def _leaf(i: int) -> tuple:
    return (0, i, ())


def _node(a: tuple, b: tuple) -> tuple:
    return (1, a, b) if a <= b else (1, b, a)


def _tree_str(tree: tuple) -> str:
    if tree[0] == 0:
        return f"Y{tree[1] + 1}"
    return f"<{_tree_str(tree[1])}:{_tree_str(tree[2])}>"


def _terms_by_degree(
    inputs: Sequence[VectorField], conn: Connection, max_degree: int
) -> list:
    """by_degree[d] = list of SymProductTerm of degree d+1 (deduplicated)."""
    m = len(inputs)
    by_degree: list = [[] for _ in range(max_degree)]
    by_degree[0] = [
        SymProductTerm(_leaf(i), tuple(1 if j == i else 0 for j in range(m)), f)
        for i, f in enumerate(inputs)
    ]
    seen = {t.tree for t in by_degree[0]}
    for d in range(2, max_degree + 1):
        out = []
        for d1 in range(1, d // 2 + 1):
            d2 = d - d1
            lhs = by_degree[d1 - 1]
            rhs = by_degree[d2 - 1]
            for i, t1 in enumerate(lhs):
                start = i if d1 == d2 else 0
                for t2 in rhs[start:]:
                    tree = _node(t1.tree, t2.tree)
                    if tree in seen:
                        continue
                    seen.add(tree)
                    gamma = tuple(a + b for a, b in zip(t1.gamma, t2.gamma))
                    value = symmetric_product(conn, t1.value, t2.value)
                    out.append(SymProductTerm(tree, gamma, value))
        by_degree[d - 1] = out
    return by_degree


def enumerate_products(
    inputs: Sequence[VectorField],
    conn: Connection,
    max_degree: int,
    cap: int = DEGREE_CAP,
) -> list:
    """All distinct symmetric products up to commutativity, degree-ordered."""
    if max_degree < 1:
        raise AccessibilityError("max_degree must be at least 1")
    if max_degree > cap:
        raise AccessibilityError(
            f"max_degree {max_degree} exceeds the cap {cap}: the number of "
            f"bracketing trees grows combinatorially; raise cap= explicitly "
            f"if you really want this"
        )
    by_degree = _terms_by_degree(inputs, conn, max_degree)
    return [t for terms in by_degree for t in terms]


@dataclass(frozen=True)
class ClosureReport:
    """Pointwise rank of a closure truncation, degree by degree."""

    kind: str  # "symmetric" or "lie-symmetric"
    ranks_by_degree: tuple  # ((degree, rank), ...)
    rank: int
    dimension: int
    spans: bool
    stabilized_degree: int
    truncation_degree: int

    @property
    def verdict(self) -> str:
        what = (
            "accessible at zero velocity"
            if self.kind == "symmetric"
            else "configuration accessible"
        )
        if self.spans:
            return (
                f"locally {what}: rank {self.rank} = dim at degree "
                f"{self.stabilized_degree} (sufficient rank condition satisfied)"
            )
        return (
            f"rank condition not satisfied up to degree {self.truncation_degree} "
            f"(rank {self.rank} < dim {self.dimension}); higher-degree terms "
            f"could still change this"
        )


def _rank_of(rows: list, exact: bool, rank_tol: float) -> int:
    if not rows:
        return 0
    if exact:
        return linalg.mat_rank(rows)
    return linalg.float_rank(linalg.float_matrix(rows), rank_tol)


def symmetric_closure_rank(
    system: MechanicalSystem,
    q0: Optional[ex.Point] = None,
    max_degree: int = 4,
    rank_tol: float = 1e-9,
    cap: int = DEGREE_CAP,
) -> ClosureReport:
    """Rank of the evaluated symmetric closure, stopping when a whole
    degree adds no rank or the truncation degree is reached."""
    q0 = q0 or system.q0
    n = system.n
    by_degree = _terms_by_degree(system.inputs, system.connection, min(max_degree, cap))
    ranks = []
    rows: list = []
    exact = True
    rank = 0
    stabilized = 1
    for d, terms in enumerate(by_degree, start=1):
        fields = [t.value for t in terms]
        if fields:
            new_rows, ex_ok = evaluate_fields(fields, q0)
            if exact and not ex_ok:
                rows = [[float(x) for x in row] for row in rows]
                exact = False
            if not exact:
                new_rows = [[float(x) for x in row] for row in new_rows]
            rows.extend(new_rows)
        new_rank = _rank_of(rows, exact, rank_tol)
        ranks.append((d, new_rank))
        if new_rank > rank:
            stabilized = d
        if d > 1 and new_rank == rank:
            break  # one full degree added no rank
        rank = new_rank
        if rank == n:
            break
    return ClosureReport(
        kind="symmetric",
        ranks_by_degree=tuple(ranks),
        rank=ranks[-1][1],
        dimension=n,
        spans=ranks[-1][1] == n,
        stabilized_degree=stabilized,
        truncation_degree=ranks[-1][0],
    )


def lie_symmetric_closure_rank(
    system: MechanicalSystem,
    q0: Optional[ex.Point] = None,
    max_degree: int = 4,
    rank_tol: float = 1e-9,
    cap: int = DEGREE_CAP,
) -> ClosureReport:
    """Rank of the Lie closure of the symmetric closure (word length
    counts total input occurrences across brackets and products)."""
    q0 = q0 or system.q0
    n = system.n
    max_degree = min(max_degree, cap)
    by_degree = _terms_by_degree(system.inputs, system.connection, max_degree)
    elements = {}  # key -> (length, VectorField)
    for d, terms in enumerate(by_degree, start=1):
        for t in terms:
            elements[("S", t.tree)] = (d, t.value)
    # close under brackets up to total word length
    work = list(elements.items())
    while True:
        added = []
        items = list(elements.items())
        for i, (k1, (l1, f1)) in enumerate(items):
            for k2, (l2, f2) in items[i + 1:]:
                if l1 + l2 > max_degree:
                    continue
                key = ("B", k1, k2) if repr(k1) <= repr(k2) else ("B", k2, k1)
                if key in elements or any(a[0] == key for a in added):
                    continue
                br = lie_bracket(f1, f2)
                if all(c == ex.ZERO for c in br.components):
                    continue
                added.append((key, (l1 + l2, br)))
        if not added:
            break
        elements.update(added)
    # ranks per cumulative word length
    ranks = []
    final_rank = 0
    stabilized = 1
    for d in range(1, max_degree + 1):
        fields = [f for (length, f) in elements.values() if length <= d]
        rows, exact = evaluate_fields(fields, q0)
        r = _rank_of(rows, exact, rank_tol)
        ranks.append((d, r))
        if r > final_rank:
            stabilized = d
        final_rank = r
    return ClosureReport(
        kind="lie-symmetric",
        ranks_by_degree=tuple(ranks),
        rank=final_rank,
        dimension=n,
        spans=final_rank == n,
        stabilized_degree=stabilized,
        truncation_degree=max_degree,
    )


@dataclass(frozen=True)
class BadProductCheck:
    term: str
    gamma: tuple
    degree: int
    value: tuple
    residual: float
    passed: bool


def sufficient_conditions_check(
    system: MechanicalSystem,
    basis: Optional[Sequence[VectorField]] = None,
    q0: Optional[ex.Point] = None,
    max_degree: int = 4,
    residual_tol: float = 1e-8,
    cap: int = DEGREE_CAP,
) -> tuple:
    """Test every bad product of degree <= max_degree for membership in the
    span of strictly lower-degree good products at q0.

    Returns (all_passed, [BadProductCheck, ...]).  Membership is decided by
    the relative least-squares residual against ``residual_tol``.
    """
    q0 = q0 or system.q0
    basis = tuple(basis) if basis is not None else system.inputs
    terms = enumerate_products(basis, system.connection, min(max_degree, cap), cap)
    good_by_degree: dict = {}
    for t in terms:
        if not t.is_bad:
            good_by_degree.setdefault(t.degree, []).append(t)
    details = []
    all_ok = True
    for t in terms:
        if not t.is_bad:
            continue
        goods = [
            g.value for d in range(1, t.degree) for g in good_by_degree.get(d, [])
        ]
        rows, _ = evaluate_fields(goods + [t.value], q0)
        value_row = [float(x) for x in rows[-1]]
        good_rows = [[float(x) for x in r] for r in rows[:-1]]
        residual = linalg.span_residual(good_rows, value_row)
        passed = residual < residual_tol
        all_ok = all_ok and passed
        details.append(
            BadProductCheck(
                term=str(t),
                gamma=t.gamma,
                degree=t.degree,
                value=tuple(value_row),
                residual=residual,
                passed=passed,
            )
        )
    return all_ok, details


@dataclass(frozen=True)
class SingleInputReport:
    """Dimension criterion for one input: controllable iff dim Q = 1."""

    stlcc: bool
    dimension: int
    diag_in_span: bool
    diag_residual: float

    @property
    def verdict(self) -> str:
        if self.stlcc:
            return "STLCC: single input on a 1-dimensional configuration space"
        return (
            f"not STLCC: single-input systems are configuration controllable "
            f"only in dimension 1 (here dim = {self.dimension})"
        )


def single_input_verdict(
    system: MechanicalSystem,
    q0: Optional[ex.Point] = None,
    residual_tol: float = 1e-8,
) -> SingleInputReport:
    if system.m != 1:
        raise AccessibilityError(
            f"single-input verdict called with m = {system.m}"
        )
    q0 = q0 or system.q0
    Y = system.inputs[0]
    diag = symmetric_product(system.connection, Y, Y)
    rows, _ = evaluate_fields([Y, diag], q0)
    rows = [[float(x) for x in r] for r in rows]
    residual = linalg.span_residual([rows[0]], rows[1])
    return SingleInputReport(
        stlcc=system.n == 1,
        dimension=system.n,
        diag_in_span=residual < residual_tol,
        diag_residual=residual,
    )


@dataclass(frozen=True)
class AccessibilityReport:
    products: tuple
    product_values: tuple
    sym: ClosureReport
    lie: ClosureReport
    sufficient_ok: bool
    sufficient_details: tuple
    single_input: Optional[SingleInputReport] = None


def analyze(
    system: MechanicalSystem,
    max_degree: int = 4,
    rank_tol: float = 1e-9,
    residual_tol: float = 1e-8,
    cap: int = DEGREE_CAP,
) -> AccessibilityReport:
    """Full accessibility study of a system at its base point."""
    terms = enumerate_products(system.inputs, system.connection, min(max_degree, cap), cap)
    values = []
    for t in terms:
        rows, _ = evaluate_fields([t.value], system.q0)
        values.append(tuple(float(x) for x in rows[0]))
    sym = symmetric_closure_rank(system, max_degree=max_degree, rank_tol=rank_tol, cap=cap)
    lie = lie_symmetric_closure_rank(system, max_degree=max_degree, rank_tol=rank_tol, cap=cap)
    ok, details = sufficient_conditions_check(
        system, max_degree=max_degree, residual_tol=residual_tol, cap=cap
    )
    single = single_input_verdict(system, residual_tol=residual_tol) if system.m == 1 else None
    return AccessibilityReport(
        products=tuple(terms),
        product_values=tuple(values),
        sym=sym,
        lie=lie,
        sufficient_ok=ok,
        sufficient_details=tuple(details),
        single_input=single,
    )
