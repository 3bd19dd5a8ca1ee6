"""System-file loading and serialization.

A sectioned key-value format (INI sections, JSON-encoded values) keeps the
fixtures reviewable as plain text:

    [system]
    dim = 4
    coords = ["x", "y", "z", "w"]

    [metric]                      # exactly one of [metric]/[connection],
    g = [["1","0","0","0"], ...]  # unless override_metric is set

    [connection]
    Gamma[1][2][2] = "-x"         # 1-based indices; omitted entries are 0
    override_metric = false

    [inputs]
    Y1 = ["1+z", "1", "1", "1+y"] # vector field, or F<i> for a one-form
    Y2 = ["0", "1", "-2", "-(1+y)"]

    [point]
    q0 = [0, 0, 0, 0]             # numbers or exact strings like "1/3"

    [analysis]                    # optional defaults, flag-overridable
    max_degree = 4

Decimal literals are converted to exact rationals; expression strings use
the kernel grammar.  Loading validates dimensions, metric symmetry and
positive definiteness at q0, and input independence at q0.
"""

from __future__ import annotations

import configparser
import json
import re
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import expr as ex
from .geometry import (
    Connection,
    GeometryError,
    Metric,
    MechanicalSystem,
    OneForm,
    VectorField,
    christoffel,
    sharp,
)


class SysFileError(Exception):
    pass


@dataclass(frozen=True)
class AnalysisDefaults:
    max_degree: int = 4
    rank_tol: float = 1e-9
    residual_tol: float = 1e-8
    zero_tol: float = 1e-9


_GAMMA_KEY = re.compile(r"^Gamma\[(\d+)\]\[(\d+)\]\[(\d+)\]$")


def _json_value(section: str, key: str, raw: str):
    try:
        return json.loads(raw, parse_float=Fraction, parse_int=int)
    except json.JSONDecodeError as e:
        raise SysFileError(f"[{section}] {key}: invalid value ({e})") from None


def _as_number(x, where: str) -> Fraction:
    if isinstance(x, bool):
        raise SysFileError(f"{where}: expected a number")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise SysFileError(f"{where}: cannot parse {x!r} as a rational") from None
    raise SysFileError(f"{where}: expected a number, got {type(x).__name__}")


def _parse_component_list(raw, coords, where: str) -> tuple:
    if not isinstance(raw, list) or len(raw) != len(coords):
        raise SysFileError(f"{where}: expected a list of {len(coords)} expression strings")
    out = []
    for k, item in enumerate(raw):
        if not isinstance(item, str):
            raise SysFileError(f"{where}[{k}]: expressions must be quoted strings")
        try:
            out.append(ex.parse_expr(item, coords))
        except ex.ParseError as e:
            raise SysFileError(f"{where}[{k}]: {e}") from None
    return tuple(out)


def load_system(path: str, warn=None) -> tuple:
    """Load and validate a system file.

    Returns (MechanicalSystem, AnalysisDefaults).  ``warn`` is called with a
    message for non-fatal issues (asymmetric user-supplied connection)."""
    warn = warn or (lambda msg: print(f"warning: {msg}", file=sys.stderr))
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except OSError as e:
        raise SysFileError(f"cannot read {path}: {e}") from None
    except configparser.Error as e:
        raise SysFileError(f"{path}: {e}") from None

    if "system" not in cp:
        raise SysFileError("missing [system] section")
    sysec = cp["system"]
    if "dim" not in sysec or "coords" not in sysec:
        raise SysFileError("[system] needs 'dim' and 'coords'")
    n = int(sysec["dim"])
    coords_raw = _json_value("system", "coords", sysec["coords"])
    if (
        not isinstance(coords_raw, list)
        or len(coords_raw) != n
        or not all(isinstance(c, str) for c in coords_raw)
    ):
        raise SysFileError(f"[system] coords must list {n} names")
    coords = tuple(coords_raw)
    if len(set(coords)) != n:
        raise SysFileError("[system] coordinate names must be distinct")

    has_metric = "metric" in cp
    has_conn = "connection" in cp
    override = has_conn and cp["connection"].getboolean("override_metric", fallback=False)
    if has_metric and has_conn and not override:
        raise SysFileError(
            "both [metric] and [connection] present; set override_metric = true "
            "in [connection] to use the explicit symbols with the metric kept "
            "for raising one-forms"
        )
    if not has_metric and not has_conn:
        raise SysFileError("need a [metric] or a [connection] section")

    metric = None
    if has_metric:
        if "g" not in cp["metric"]:
            raise SysFileError("[metric] needs 'g'")
        g_raw = _json_value("metric", "g", cp["metric"]["g"])
        if not isinstance(g_raw, list) or len(g_raw) != n:
            raise SysFileError(f"[metric] g must be an {n}x{n} array")
        rows = []
        for i, row in enumerate(g_raw):
            rows.append(_parse_component_list(row, coords, f"[metric] g[{i}]"))
        metric = Metric(coords, tuple(rows))
        if not metric.is_symmetric():
            raise SysFileError("[metric] g is not symmetric")

    if has_conn:
        entries = [[[ex.ZERO] * n for _ in range(n)] for _ in range(n)]
        for key, raw in cp["connection"].items():
            if key == "override_metric":
                continue
            mt = _GAMMA_KEY.match(key)
            if not mt:
                raise SysFileError(f"[connection] unrecognized key {key!r}")
            a, b, c = (int(mt.group(k)) for k in (1, 2, 3))
            if not all(1 <= idx <= n for idx in (a, b, c)):
                raise SysFileError(f"[connection] {key}: indices must be in 1..{n}")
            val = _json_value("connection", key, raw)
            if not isinstance(val, str):
                raise SysFileError(f"[connection] {key}: expression must be a quoted string")
            try:
                entries[a - 1][b - 1][c - 1] = ex.parse_expr(val, coords)
            except ex.ParseError as e:
                raise SysFileError(f"[connection] {key}: {e}") from None
        connection = Connection(
            coords,
            tuple(tuple(tuple(row) for row in plane) for plane in entries),
            metric_derived=False,
        )
        if not connection.is_symmetric_lower():
            warn(
                "user-supplied connection symbols are not symmetric in the "
                "lower indices (general affine connection assumed)"
            )
    else:
        connection = christoffel(metric)

    if "inputs" not in cp:
        raise SysFileError("missing [inputs] section")
    raw_inputs = {}
    for key, raw in cp["inputs"].items():
        mt = re.match(r"^([YF])(\d+)$", key)
        if not mt:
            raise SysFileError(f"[inputs] unrecognized key {key!r} (use Y<i> or F<i>)")
        idx = int(mt.group(2))
        if idx in raw_inputs:
            raise SysFileError(f"[inputs] duplicate index {idx}")
        raw_inputs[idx] = (mt.group(1), raw)
    m = len(raw_inputs)
    if m == 0:
        raise SysFileError("[inputs] declares no input fields")
    if sorted(raw_inputs) != list(range(1, m + 1)):
        raise SysFileError("[inputs] indices must be consecutive starting at 1")
    inputs = []
    forms = []
    for i in range(1, m + 1):
        kind, raw = raw_inputs[i]
        comps = _parse_component_list(
            _json_value("inputs", f"{kind}{i}", raw), coords, f"[inputs] {kind}{i}"
        )
        if kind == "Y":
            inputs.append(VectorField(coords, comps))
            forms.append(None)
        else:
            if metric is None:
                raise SysFileError(
                    f"[inputs] F{i}: one-form inputs require a [metric] section"
                )
            form = OneForm(coords, comps)
            inputs.append(sharp(metric, form))
            forms.append(form)

    if "point" not in cp or "q0" not in cp["point"]:
        raise SysFileError("missing [point] section with q0")
    q0_raw = _json_value("point", "q0", cp["point"]["q0"])
    if not isinstance(q0_raw, list) or len(q0_raw) != n:
        raise SysFileError(f"[point] q0 must list {n} values")
    q0 = ex.Point(coords, [_as_number(x, f"[point] q0[{k}]") for k, x in enumerate(q0_raw)])

    defaults = AnalysisDefaults()
    if "analysis" in cp:
        an = cp["analysis"]
        defaults = AnalysisDefaults(
            max_degree=an.getint("max_degree", fallback=defaults.max_degree),
            rank_tol=an.getfloat("rank_tol", fallback=defaults.rank_tol),
            residual_tol=an.getfloat("residual_tol", fallback=defaults.residual_tol),
            zero_tol=an.getfloat("zero_tol", fallback=defaults.zero_tol),
        )

    system = MechanicalSystem(
        coords=coords,
        connection=connection,
        inputs=tuple(inputs),
        q0=q0,
        metric=metric,
        input_forms=tuple(forms) if any(f is not None for f in forms) else None,
    )
    try:
        if metric is not None:
            metric.check_positive_definite(q0, tol=1e-9)
        system.check_inputs_independent(defaults.rank_tol)
    except GeometryError as e:
        raise SysFileError(str(e)) from None
    return system, defaults


def _q0_entry(v) -> str:
    if isinstance(v, (int,)) or (isinstance(v, Fraction) and v.denominator == 1):
        return str(int(v))
    if isinstance(v, Fraction):
        return json.dumps(f"{v.numerator}/{v.denominator}")
    return repr(float(v))


def serialize_system(
    system: MechanicalSystem, defaults: Optional[AnalysisDefaults] = None
) -> str:
    """Render a loadable file reproducing the in-memory system exactly."""
    n = system.n
    lines = ["[system]", f"dim = {n}",
             "coords = " + json.dumps(list(system.coords)), ""]
    if system.metric is not None:
        g = [[str(e) for e in row] for row in system.metric.entries]
        lines += ["[metric]", "g = " + json.dumps(g), ""]
    if system.metric is None or not system.connection.metric_derived:
        lines.append("[connection]")
        if system.metric is not None:
            lines.append("override_metric = true")
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    e = system.connection.gamma[a][b][c]
                    if e != ex.ZERO:
                        lines.append(
                            f"Gamma[{a+1}][{b+1}][{c+1}] = " + json.dumps(str(e))
                        )
        lines.append("")
    lines.append("[inputs]")
    forms = system.input_forms or (None,) * system.m
    for i, (f, form) in enumerate(zip(system.inputs, forms), start=1):
        if form is not None:
            lines.append(f"F{i} = " + json.dumps([str(c) for c in form.components]))
        else:
            lines.append(f"Y{i} = " + json.dumps([str(c) for c in f.components]))
    lines += ["", "[point]",
              "q0 = [" + ", ".join(_q0_entry(v) for v in system.q0.values) + "]", ""]
    if defaults is not None:
        lines += [
            "[analysis]",
            f"max_degree = {defaults.max_degree}",
            f"rank_tol = {defaults.rank_tol:g}",
            f"residual_tol = {defaults.residual_tol:g}",
            f"zero_tol = {defaults.zero_tol:g}",
            "",
        ]
    return "\n".join(lines)
