"""Command-line interface: load a system file, run an analysis, emit a report.

Commands: ``analyze``, ``basis-search``, ``simulate``, ``series-compare``,
``christoffel``.  Reports are deterministic (identical inputs and flags give
byte-identical output); every numeric claim carries the tolerance it was
tested at.  Exit codes: 0 a verdict was produced, 2 inconclusive, 3 input
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import accessibility as acc
from . import basis_search as bs
from . import expr as ex
from . import simulator as sim
from .geometry import GeometryError
from .sysfile import AnalysisDefaults, SysFileError, load_system

EXIT_OK = 0
EXIT_INCONCLUSIVE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _num(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, int):
        return str(x)
    return f"{float(x):.12g}"


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    return x


def _matrix_lines(rows, indent="    ") -> list:
    cells = [[_num(x) for x in row] for row in rows]
    width = max((len(c) for row in cells for c in row), default=1)
    return [
        indent + "[ " + "  ".join(c.rjust(width) for c in row) + " ]"
        for row in cells
    ]


def _echo_system(out, system, path):
    out.append(f"system file: {path}")
    out.append(
        f"coordinates: {' '.join(system.coords)}   (n = {system.n}, m = {system.m})"
    )
    out.append(
        "base point q0: (" + ", ".join(_num(v) for v in system.q0.values) + ")"
    )
    out.append("input fields:")
    for i, f in enumerate(system.inputs, start=1):
        out.append(f"  Y{i} = {f}")
    gam = system.connection.gamma
    nz = [
        (a, b, c, gam[a][b][c])
        for a in range(system.n)
        for b in range(system.n)
        for c in range(system.n)
        if gam[a][b][c] != ex.ZERO
    ]
    origin = "Levi-Civita symbols of the metric" if system.connection.metric_derived \
        else "user-supplied connection symbols"
    if not nz:
        out.append(f"connection: {origin}; all vanish (flat)")
    else:
        out.append(f"connection: {origin}; nonzero entries:")
        for a, b, c, e in nz:
            out.append(f"  Gamma[{a+1}][{b+1}][{c+1}] = {e}")
    out.append("")


def _closure_lines(out, rep, rank_tol):
    name = "symmetric closure" if rep.kind == "symmetric" else "lie(symmetric) closure"
    seq = ", ".join(f"degree {d}: rank {r}" for d, r in rep.ranks_by_degree)
    out.append(f"{name} at q0 (rank tolerance {rank_tol:g}): {seq}")
    out.append(f"  {rep.verdict}")


def cmd_christoffel(args) -> int:
    system, _ = load_system(args.path)
    out = []
    _echo_system(out, system, args.path)
    print("\n".join(out).rstrip())
    return EXIT_OK


def cmd_analyze(args) -> int:
    system, defaults = load_system(args.path)
    d = _merge_flags(args, defaults)
    report = acc.analyze(
        system,
        max_degree=d.max_degree,
        rank_tol=d.rank_tol,
        residual_tol=d.residual_tol,
    )
    out = []
    _echo_system(out, system, args.path)
    out.append(f"symmetric products up to degree {d.max_degree}:")
    out.append("  term                       degree  parity  gamma        value at q0")
    for t, v in zip(report.products, report.product_values):
        gam = "(" + ",".join(str(g) for g in t.gamma) + ")"
        val = "(" + ", ".join(_num(x) for x in v) + ")"
        out.append(f"  {str(t):26} {t.degree:>6}  {t.parity:6}  {gam:12} {val}")
    out.append("")
    _closure_lines(out, report.sym, d.rank_tol)
    _closure_lines(out, report.lie, d.rank_tol)
    out.append("")
    out.append(
        f"sufficient conditions for configuration controllability "
        f"(each bad product vs the span of lower-degree good products, "
        f"residual tolerance {d.residual_tol:g}):"
    )
    for c in report.sufficient_details:
        status = "pass" if c.passed else "FAIL"
        out.append(
            f"  {c.term:26} degree {c.degree}  residual {c.residual:.3e}  {status}"
        )
    if report.sufficient_ok:
        out.append(
            "  overall: satisfied for the given input basis up to degree "
            f"{d.max_degree} -> STLCC criterion met (good/bad product test)"
        )
    else:
        out.append(
            "  overall: violated for the given input basis (the test is "
            "basis-dependent; a different basis may still satisfy it)"
        )
    if report.single_input is not None:
        out.append("")
        out.append(f"single-input criterion: {report.single_input.verdict}")
        out.append(
            f"  <Y:Y>(q0) in span{{Y(q0)}}: "
            f"{'yes' if report.single_input.diag_in_span else 'no'} "
            f"(residual {report.single_input.diag_residual:.3e}, "
            f"tolerance {d.residual_tol:g})"
        )
    text = "\n".join(out).rstrip()
    print(text)
    _maybe_json(args, {
        "command": "analyze",
        "system": args.path,
        "products": [
            {"term": str(t), "gamma": list(t.gamma), "degree": t.degree,
             "parity": t.parity, "value": _jsonable(v)}
            for t, v in zip(report.products, report.product_values)
        ],
        "symmetric_closure": {
            "ranks": _jsonable(report.sym.ranks_by_degree),
            "spans": report.sym.spans,
        },
        "lie_symmetric_closure": {
            "ranks": _jsonable(report.lie.ranks_by_degree),
            "spans": report.lie.spans,
        },
        "sufficient_conditions": {
            "ok": report.sufficient_ok,
            "details": [
                {"term": c.term, "degree": c.degree, "residual": c.residual,
                 "passed": c.passed}
                for c in report.sufficient_details
            ],
        },
        "single_input": None if report.single_input is None else {
            "stlcc": report.single_input.stlcc,
            "diag_in_span": report.single_input.diag_in_span,
        },
        "tolerances": _tol_dict(d),
    })
    return EXIT_OK


def _radicand_lines(out, seq):
    if seq is None:
        return
    pivots = ", ".join(f"s{k+1} = {p+1}" for k, p in enumerate(seq.pivots))
    out.append(f"  pivot sequence: {pivots if pivots else '(none)'}")
    for st in seq.stages:
        labels = "{" + ", ".join(str(i + 1) for i in st.index_set) + "}"
        out.append(f"  recursion stage on indices {labels}:")
        out.extend(_matrix_lines(st.matrix, indent="    "))
    if seq.terminal == "pair":
        out.append(
            f"  terminal: two indices left, discriminant "
            f"a_pq^2 - a_pp*a_qq = {_num(seq.discriminant)}"
        )
    elif seq.terminal == "all_diagonals_zero":
        what = "some off-diagonal entries remain" if seq.offdiag_nonzero \
            else "the stage matrix vanishes entirely"
        out.append(f"  terminal: all stage diagonals vanish; {what}")
    else:
        out.append("  terminal: single index left")


def cmd_basis_search(args) -> int:
    system, defaults = load_system(args.path)
    d = _merge_flags(args, defaults)
    out = []
    _echo_system(out, system, args.path)

    lie = acc.lie_symmetric_closure_rank(
        system, max_degree=d.max_degree, rank_tol=d.rank_tol
    )
    _closure_lines(out, lie, d.rank_tol)
    out.append("")
    if not lie.spans:
        out.append(
            "verdict: inconclusive -- configuration accessibility (the "
            "procedure's hypothesis) was not established up to degree "
            f"{d.max_degree}"
        )
        print("\n".join(out).rstrip())
        _maybe_json(args, {
            "command": "basis-search", "system": args.path,
            "verdict": "Inconclusive",
            "reason": "configuration accessibility not established",
            "tolerances": _tol_dict(d),
        })
        return EXIT_INCONCLUSIVE

    verdict = bs.decide_stlcc(
        system,
        rank_tol=d.rank_tol,
        residual_tol=d.residual_tol,
        zero_tol=d.zero_tol,
    )

    payload = {
        "command": "basis-search",
        "system": args.path,
        "verdict": verdict.kind,
        "tolerances": _tol_dict(d),
        "stages": [
            {
                "stage": rec.stage,
                "active": [i + 1 for i in rec.active],
                "base_pair": None if rec.base_pair is None
                else [rec.base_pair[0] + 1, rec.base_pair[1] + 1],
                "substitution": rec.substitution,
                "A": None if rec.coefficient_matrix is None
                else _jsonable(rec.coefficient_matrix.entries),
                "signature": _jsonable(rec.signature),
                "branch": rec.branch,
                "pivots": None if rec.radicand is None
                else [p + 1 for p in rec.radicand.pivots],
                "recursion_matrices": None if rec.radicand is None else [
                    {"indices": [i + 1 for i in st.index_set],
                     "matrix": _jsonable(st.matrix)}
                    for st in rec.radicand.stages
                ],
                "kernel": _jsonable(rec.kernel),
                "kernel_residual": rec.kernel_residual,
                "construction": rec.construction,
            }
            for rec in getattr(verdict, "trace", ())
        ],
    }

    for rec in getattr(verdict, "trace", ()):
        active = "{" + ", ".join(str(i + 1) for i in rec.active) + "}"
        out.append(f"stage {rec.stage}: active inputs {active}")
        if rec.substitution:
            out.append(f"  {rec.substitution}")
        if rec.base_pair is not None:
            out.append(
                f"  base product: <Y{rec.base_pair[0]+1}:Y{rec.base_pair[1]+1}>(q0) "
                f"outside the input span"
            )
        if rec.coefficient_matrix is not None:
            A = rec.coefficient_matrix
            kind = "exact rational" if A.exact else "floating point"
            out.append(
                f"  coefficient matrix A ({kind}; recombination residual "
                f"{A.recombination_residual:.3e}, tolerance {d.residual_tol:g}):"
            )
            out.extend(_matrix_lines(A.entries))
        if rec.signature is not None:
            p, q, z = rec.signature
            out.append(f"  signature (pos, neg, zero) = ({p}, {q}, {z})")
        _radicand_lines(out, rec.radicand)
        out.append(f"  branch: {rec.branch}" + (
            f" ({rec.construction})" if rec.construction else ""
        ))
        if rec.kernel is not None:
            out.append(
                f"  reduction coefficients C (rows of ker A; "
                f"max |A C| = {rec.kernel_residual:.3e}, tolerance 1e-08):"
            )
            out.extend(_matrix_lines(rec.kernel))
        out.append("")

    if verdict.kind == "BasisFound":
        out.append("verdict: " + verdict.verdict)
        out.append("  (criterion: every transformed bad degree-2 product "
                   "falls in the input span; good/bad product test)")
        out.append("B (rows = new inputs in terms of the originals):")
        out.extend(_matrix_lines(verdict.B))
        ver = verdict.verification
        out.append(
            f"verification: |det B| = {abs(ver.det):.6g} "
            f"(threshold {1e-10:g}): {'ok' if ver.det_ok else 'FAIL'}; "
            f"max |diag(B A B^T)| = {max((abs(x) for x in ver.diag_residuals), default=0.0):.3e} "
            f"(tolerance {d.residual_tol:g}): {'ok' if ver.diag_ok else 'FAIL'}; "
            f"sufficient conditions at degree 2: "
            f"{'pass' if ver.sufficient_ok else 'FAIL'}"
        )
        payload["B"] = _jsonable(verdict.B)
        payload["verification"] = {
            "det": ver.det, "det_ok": ver.det_ok,
            "diag_residuals": _jsonable(ver.diag_residuals),
            "diag_ok": ver.diag_ok, "sufficient_ok": ver.sufficient_ok,
            "passed": ver.passed,
        }
        code = EXIT_OK
    elif verdict.kind == "NotSTLCC":
        cert = verdict.certificate
        out.append("verdict: " + verdict.verdict)
        out.append(f"  certificate kind: {cert.kind} (stage {cert.stage})")
        if cert.matrix is not None:
            out.append("  certificate matrix:")
            out.extend(_matrix_lines(cert.matrix))
        if cert.eigenvalues is not None:
            eigs = ", ".join(_num(e) for e in cert.eigenvalues)
            out.append(
                f"  eigenvalues: {eigs} (all one-signed beyond threshold "
                f"{d.zero_tol:g})"
            )
        if cert.detail:
            out.append(f"  {cert.detail}")
        payload["certificate"] = {
            "kind": cert.kind, "stage": cert.stage,
            "matrix": _jsonable(cert.matrix),
            "eigenvalues": _jsonable(cert.eigenvalues),
        }
        code = EXIT_OK
    else:
        out.append("verdict: " + verdict.verdict)
        oc = verdict.open_case
        if oc is not None:
            i, j = oc.pair
            out.append(
                f"open-case coefficients (frame Y1..Ym, <Y{i+1}:Y{j+1}>, "
                f"<Y{i+1}:Y{i+1}>):"
            )
            out.append(
                f"  <Y{j+1}:Y{j+1}>(q0) = lc(inputs) + a3 <Y{i+1}:Y{j+1}>(q0) "
                f"+ a4 <Y{i+1}:Y{i+1}>(q0)"
            )
            out.append(f"  a3 = {_num(oc.a3)}")
            out.append(f"  a4 = {_num(oc.a4)}")
            out.append(f"  a3^2 + 4*a4 = {_num(oc.a3_sq_plus_4a4)}")
            if oc.blocking:
                out.append(
                    "  a4 < 0 and a3^2 + 4*a4 < 0: no input basis can satisfy "
                    "the sufficient conditions, yet no non-controllability "
                    "certificate applies -- undecided case, no verdict"
                )
            payload["open_case"] = {
                "pair": [i + 1, j + 1],
                "a3": _jsonable(oc.a3), "a4": _jsonable(oc.a4),
                "a3_sq_plus_4a4": _jsonable(oc.a3_sq_plus_4a4),
                "blocking": oc.blocking,
            }
        payload["reason"] = verdict.reason
        code = EXIT_INCONCLUSIVE

    zero_vel = getattr(verdict, "zero_velocity_transfer", False)
    if zero_vel and verdict.kind in ("BasisFound", "NotSTLCC"):
        out.append(
            "corollary: the same conclusion holds for small-time local "
            "controllability at zero velocity"
        )
    print("\n".join(out).rstrip())
    _maybe_json(args, payload)
    return code


def _parse_control(spec: str, m: int, clamp: bool) -> sim.ControlSignal:
    """Parse --u: "1,0" (constant) or "0:1,0;0.25:0,1" (piecewise)."""
    try:
        if ":" not in spec:
            values = [float(x) for x in spec.split(",")]
            signal = sim.ControlSignal.constant(values, clamp=clamp)
        else:
            bps = []
            vals = []
            for seg in spec.split(";"):
                tpart, vpart = seg.split(":")
                bps.append(float(tpart))
                vals.append(tuple(float(x) for x in vpart.split(",")))
            signal = sim.ControlSignal(tuple(bps), tuple(vals), clamp=clamp)
    except (ValueError, sim.SimulatorError) as e:
        raise _CliError(f"bad --u value {spec!r}: {e}") from None
    if signal.m != m:
        raise _CliError(
            f"--u provides {signal.m} channels but the system has {m} inputs"
        )
    return signal


def cmd_simulate(args) -> int:
    system, defaults = load_system(args.path)
    signal = _parse_control(args.u, system.m, clamp=not args.no_clamp)
    v0 = None
    if args.v0:
        v0 = [float(x) for x in args.v0.split(",")]
        if len(v0) != system.n:
            raise _CliError(f"--v0 needs {system.n} components")
    traj = sim.integrate(system, signal, T=args.T, h=args.h, v0=v0)
    out = []
    _echo_system(out, system, args.path)
    out.append(
        f"integration: fixed-step RK4, h = {args.h:g}, horizon T = {args.T:g}, "
        f"{len(traj.t) - 1} steps"
    )
    if signal.clamp:
        out.append("input clamp: components restricted to [-1, 1]")
    tN, qN, vN = traj.final
    out.append(f"final time: {_num(tN)}")
    out.append("final configuration: (" + ", ".join(f"{x:.12g}" for x in qN) + ")")
    out.append("final velocity: (" + ", ".join(f"{x:.12g}" for x in vN) + ")")
    if traj.blown_up:
        out.append("STATE BLOW-UP: norm exceeded 1e12; trajectory truncated")
    if args.out:
        with open(args.out, "w") as fh:
            sim.export_trajectory(traj, fh)
        out.append(f"trajectory written to {args.out} (t q1..qn v1..vn per row)")
    else:
        print("\n".join(out).rstrip())
        out = []
        sim.export_trajectory(traj, sys.stdout)
    comparison = None
    if args.K is not None:
        if len(signal.values) != 1:
            raise _CliError("series comparison (--K) needs a constant input")
        comparison = sim.compare_series_ode(
            system, signal.values[0], order=args.K, T=args.T, h=args.h,
            clamp=signal.clamp,
        )
        out.extend(_series_lines(comparison, args))
    if out:
        print("\n".join(out).rstrip())
    _maybe_json(args, {
        "command": "simulate", "system": args.path,
        "T": args.T, "h": args.h, "steps": len(traj.t) - 1,
        "blown_up": traj.blown_up,
        "final": {"t": float(tN), "q": _jsonable(qN), "v": _jsonable(vN)},
        "series_max_error": None if comparison is None else comparison.max_error,
    })
    return EXIT_NUMERIC if traj.blown_up else EXIT_OK


def _series_lines(comp: sim.SeriesComparison, args) -> list:
    out = []
    out.append(
        f"series comparison (truncation order K = {args.K}, step {args.h:g}):"
    )
    ts = comp.times
    idx = sorted({0, len(ts) - 1} | {
        int(round(k * (len(ts) - 1) / 10)) for k in range(11)
    })
    out.append("  t            |q_series - q_ode|")
    for k in idx:
        out.append(f"  {ts[k]:<12.6g} {comp.errors[k]:.6e}")
    out.append(f"  max error over the grid: {comp.max_error:.6e}")
    if comp.order_estimates:
        orders = ", ".join(f"{p:.2f}" for p in comp.order_estimates)
        out.append(
            f"  empirical order under horizon halving: {orders} "
            f"(position error ratio, log2)"
        )
    if comp.diverging:
        out.append(
            "  warning: successive series terms grow at this horizon; the "
            "expansion may be outside its convergence window"
        )
    return out


def cmd_series_compare(args) -> int:
    system, defaults = load_system(args.path)
    signal = _parse_control(args.u, system.m, clamp=not args.no_clamp)
    if len(signal.values) != 1:
        raise _CliError("series comparison needs a constant input")
    comparison = sim.compare_series_ode(
        system, signal.values[0], order=args.K, T=args.T, h=args.h,
        clamp=signal.clamp,
    )
    out = []
    _echo_system(out, system, args.path)
    out.extend(_series_lines(comparison, args))
    print("\n".join(out).rstrip())
    _maybe_json(args, {
        "command": "series-compare", "system": args.path,
        "K": args.K, "T": args.T, "h": args.h,
        "max_error": comparison.max_error,
        "order_estimates": _jsonable(comparison.order_estimates),
        "diverging": comparison.diverging,
    })
    return EXIT_OK


def _merge_flags(args, defaults: AnalysisDefaults) -> AnalysisDefaults:
    return AnalysisDefaults(
        max_degree=args.max_degree if args.max_degree is not None else defaults.max_degree,
        rank_tol=args.rank_tol if args.rank_tol is not None else defaults.rank_tol,
        residual_tol=args.residual_tol if args.residual_tol is not None else defaults.residual_tol,
        zero_tol=args.zero_tol if args.zero_tol is not None else defaults.zero_tol,
    )


def _tol_dict(d: AnalysisDefaults) -> dict:
    return {
        "max_degree": d.max_degree, "rank_tol": d.rank_tol,
        "residual_tol": d.residual_tol, "zero_tol": d.zero_tol,
    }


def _maybe_json(args, payload: dict) -> None:
    if getattr(args, "json", None):
        with open(args.json, "w") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _add_common(p):
    p.add_argument("path", help="system file")
    p.add_argument("--max-degree", type=int, default=None, dest="max_degree",
                   help="closure truncation degree (default 4)")
    p.add_argument("--rank-tol", type=float, default=None, dest="rank_tol",
                   help="relative rank tolerance (default 1e-9)")
    p.add_argument("--residual-tol", type=float, default=None, dest="residual_tol",
                   help="span-membership residual tolerance (default 1e-8)")
    p.add_argument("--zero-tol", type=float, default=None, dest="zero_tol",
                   help="coefficient zero threshold (default 1e-9)")
    p.add_argument("--json", default=None, help="also write a JSON report here")


def build_parser() -> _Parser:
    p = _Parser(
        prog="symcon",
        description="Controllability analysis of mechanical control systems "
                    "in the affine-connection framework.",
    )
    subs = p.add_subparsers(dest="command", required=True)

    pa = subs.add_parser("analyze", help="products, closures, rank verdicts")
    _add_common(pa)
    pa.set_defaults(func=cmd_analyze)

    pb = subs.add_parser("basis-search",
                         help="decide controllability for m = n-1 inputs")
    _add_common(pb)
    pb.set_defaults(func=cmd_basis_search)

    ps = subs.add_parser("simulate", help="integrate the forced equations")
    _add_common(ps)
    ps.add_argument("--u", required=True,
                    help='input: "1,0" or piecewise "0:1,0;0.25:0,1"')
    ps.add_argument("--T", type=float, required=True, help="horizon")
    ps.add_argument("--h", type=float, required=True, help="RK4 step")
    ps.add_argument("--K", type=int, default=None,
                    help="append a series comparison of this order")
    ps.add_argument("--v0", default=None, help="initial velocity (default rest)")
    ps.add_argument("--no-clamp", action="store_true",
                    help="do not clip inputs to [-1, 1]")
    ps.add_argument("--out", default=None, help="trajectory output file")
    ps.set_defaults(func=cmd_simulate)

    pc = subs.add_parser("series-compare",
                         help="truncated series flow vs direct integration")
    _add_common(pc)
    pc.add_argument("--u", required=True, help='constant input, e.g. "1,0"')
    pc.add_argument("--T", type=float, required=True, help="horizon")
    pc.add_argument("--h", type=float, required=True, help="RK4 step")
    pc.add_argument("--K", type=int, required=True, help="truncation order")
    pc.add_argument("--no-clamp", action="store_true",
                    help="do not clip inputs to [-1, 1]")
    pc.set_defaults(func=cmd_series_compare)

    pch = subs.add_parser("christoffel", help="print the connection symbols")
    pch.add_argument("path", help="system file")
    pch.add_argument("--json", default=None, help=argparse.SUPPRESS)
    pch.set_defaults(func=cmd_christoffel)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SysFileError, GeometryError, ex.ParseError, acc.AccessibilityError,
            sim.SimulatorError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (bs.BasisSearchError, np.linalg.LinAlgError, ex.DomainError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
