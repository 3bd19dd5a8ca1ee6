"""Numeric integration of the forced geodesic equations and the
rest-to-motion series expansion.

The second-order control equations in coordinates,

    qdd^a + Gamma^a_bc qd^b qd^c = sum_i u_i(t) Y_i^a(q) ,

are integrated as a first-order system with classical fixed-step RK4,
splitting steps exactly at control breakpoints.  For a constant input the
velocity of the trajectory from rest expands as

    qd(t) = sum_k t^(2k-1) W_k(q) ,
    W_1 = Z = sum_i u_i Y_i ,
    W_k = -1/(2(2k-1)) * sum_{j=1}^{k-1} <W_j : W_{k-j}> ,

obtained by collapsing the iterated time integrals of the recursion
V_k(q,t) = -1/2 sum_j int_0^t <V_j : V_{k-j}> ds: by induction each
V_k(q,t) = t^(2k-1) W_k(q), since the integrand carries t^(2j-1)*t^(2(k-j)-1)
= t^(2k-2) and one more integration gives t^(2k-1)/(2k-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from . import tape
from .geometry import MechanicalSystem, VectorField, linear_combination, symmetric_product

SERIES_ORDER_CAP = 6


class SimulatorError(Exception):
    pass


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant input: values[k] on [breakpoints[k], breakpoints[k+1])."""

    breakpoints: tuple
    values: tuple
    clamp: bool = True

    def __post_init__(self):
        if not self.breakpoints or self.breakpoints[0] != 0.0:
            raise SimulatorError("control breakpoints must start at 0")
        if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
            raise SimulatorError("control breakpoints must be strictly increasing")
        if len(self.values) != len(self.breakpoints):
            raise SimulatorError("one value vector is required per breakpoint")
        for v in self.values:
            if any(not math.isfinite(float(x)) for x in v):
                raise SimulatorError("control values must be finite")

    @classmethod
    def constant(cls, u: Sequence[float], clamp: bool = True) -> "ControlSignal":
        return cls(breakpoints=(0.0,), values=(tuple(float(x) for x in u),), clamp=clamp)

    @property
    def m(self) -> int:
        return len(self.values[0])

    def value_at(self, t: float) -> np.ndarray:
        idx = 0
        for k, b in enumerate(self.breakpoints):
            if t >= b:
                idx = k
        u = np.asarray(self.values[idx], dtype=np.float64)
        return np.clip(u, -1.0, 1.0) if self.clamp else u

    def segments(self, T: float):
        """Yield (t_start, t_end, u_vector) covering [0, T]."""
        pts = [b for b in self.breakpoints if b < T] + [T]
        for k in range(len(pts) - 1):
            yield pts[k], pts[k + 1], self.value_at(pts[k])


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    method: str
    step: float
    blown_up: bool = False

    @property
    def final(self) -> tuple:
        return self.t[-1], self.q[-1], self.v[-1]


def _fresh_names(base: str, count: int, taken: set) -> list:
    names = []
    for i in range(count):
        name = f"{base}{i + 1}"
        while name in taken:
            name = "_" + name
        taken.add(name)
        names.append(name)
    return names


def _acceleration_program(system: MechanicalSystem):
    """Compile v-dot components over (coords, velocity names, input names)."""
    coords = system.coords
    n, m = system.n, system.m
    taken = set(coords)
    vnames = _fresh_names("v", n, taken)
    unames = _fresh_names("u", m, taken)
    accel = []
    for a in range(n):
        terms = []
        for b in range(n):
            for c in range(n):
                gam = system.connection.gamma[a][b][c]
                if gam != ex.ZERO:
                    terms.append(
                        ex.neg(ex.mul(gam, ex.var(vnames[b]), ex.var(vnames[c])))
                    )
        for i in range(m):
            comp = system.inputs[i].components[a]
            if comp != ex.ZERO:
                terms.append(ex.mul(ex.var(unames[i]), comp))
        accel.append(ex.simplify(ex.add(*terms)))
    prog = tape.compile_exprs(accel, list(coords) + vnames + unames)
    return prog


def _rk4(f, y0: np.ndarray, t0: float, t1: float, h: float, blowup: float):
    """Fixed-step RK4 from t0 to t1 (the last step is shortened to land on
    t1 exactly).  Returns (times, states, blown_up)."""
    ts = [t0]
    ys = [y0]
    t, y = t0, y0
    blown = False
    n_steps = max(int(math.ceil((t1 - t0) / h - 1e-12)), 1)
    for k in range(n_steps):
        step = min(h, t1 - t)
        if step <= 0:
            break
        k1 = f(t, y)
        k2 = f(t + step / 2, y + step * k1 / 2)
        k3 = f(t + step / 2, y + step * k2 / 2)
        k4 = f(t + step, y + step * k3)
        y = y + (step / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + step
        ts.append(t)
        ys.append(y)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > blowup:
            blown = True
            break
    return ts, ys, blown


def integrate(
    system: MechanicalSystem,
    u: ControlSignal,
    T: float,
    h: float,
    q0: Optional[ex.Point] = None,
    v0: Optional[Sequence[float]] = None,
    blowup: float = 1e12,
) -> Trajectory:
    """Integrate the forced equations from rest (or v0) over [0, T]."""
    if h <= 0 or T <= 0:
        raise SimulatorError("need positive T and step h")
    if u.m != system.m:
        raise SimulatorError(f"control has {u.m} channels for {system.m} inputs")
    q0 = q0 or system.q0
    n = system.n
    prog = _acceleration_program(system)
    y0 = np.concatenate([
        np.asarray(q0.as_floats(), dtype=np.float64),
        np.zeros(n) if v0 is None else np.asarray(v0, dtype=np.float64),
    ])
    point = np.empty(prog.n_vars)

    def make_f(uvec):
        def f(t, y):
            point[:n] = y[:n]
            point[n:2 * n] = y[n:]
            point[2 * n:] = uvec
            acc = tape.eval_at(prog, point)
            return np.concatenate([y[n:], acc])
        return f

    all_t = [0.0]
    all_y = [y0]
    blown = False
    for t_start, t_end, uvec in u.segments(T):
        ts, ys, blown = _rk4(make_f(uvec), all_y[-1], t_start, t_end, h, blowup)
        all_t.extend(ts[1:])
        all_y.extend(ys[1:])
        if blown:
            break
    Y = np.asarray(all_y)
    return Trajectory(
        t=np.asarray(all_t), q=Y[:, :n], v=Y[:, n:],
        method="rk4", step=h, blown_up=blown,
    )


# ---------------------------------------------------------------------------
# series expansion for constant input

@dataclass(frozen=True)
class SeriesCoefficients:
    """Truncated expansion: velocity = sum_k t^(2k-1) W_k(q), k = 1..K."""

    order: int
    u: tuple
    fields: tuple  # W_1 .. W_K as VectorField

    @property
    def coords(self) -> tuple:
        return self.fields[0].coords


def series_coefficients(
    system: MechanicalSystem, u: Sequence[float], order: int
) -> SeriesCoefficients:
    """W_1 = Z; W_k = -1/(2(2k-1)) sum_{j<k} <W_j : W_{k-j}>."""
    if order < 1 or order > SERIES_ORDER_CAP:
        raise SimulatorError(
            f"series order must be between 1 and {SERIES_ORDER_CAP}"
        )
    if len(u) != system.m:
        raise SimulatorError(f"input vector has {len(u)} entries for m = {system.m}")
    Z = linear_combination(list(system.inputs), [Fraction(float(x)) for x in u])
    W = [Z]
    for k in range(2, order + 1):
        total = None
        for j in range(1, k):
            term = symmetric_product(system.connection, W[j - 1], W[k - j - 1])
            if total is None:
                total = term
            else:
                total = VectorField(
                    term.coords,
                    tuple(ex.add(a, b) for a, b in zip(total.components, term.components)),
                )
        scale = Fraction(-1, 2 * (2 * k - 1))
        comps = tuple(
            ex.simplify(ex.mul(ex.const(scale), c)) for c in total.components
        )
        W.append(VectorField(Z.coords, comps))
    return SeriesCoefficients(order=order, u=tuple(float(x) for x in u), fields=tuple(W))


def series_velocity(coeffs: SeriesCoefficients, q: ex.Point, t: float) -> np.ndarray:
    """Evaluate the truncated series velocity at configuration q, time t."""
    env = q.as_dict()
    out = np.zeros(len(q))
    for k, Wk in enumerate(coeffs.fields, start=1):
        vals = np.asarray([ex.evaluate(c, env) for c in Wk.components])
        out += t ** (2 * k - 1) * vals
    return out


def series_terms_magnitudes(coeffs: SeriesCoefficients, q: ex.Point, t: float) -> list:
    """Norms of the individual series terms (divergence heuristic data)."""
    env = q.as_dict()
    mags = []
    for k, Wk in enumerate(coeffs.fields, start=1):
        vals = np.asarray([ex.evaluate(c, env) for c in Wk.components])
        mags.append(float(np.linalg.norm(vals) * abs(t) ** (2 * k - 1)))
    return mags


def integrate_series(
    coeffs: SeriesCoefficients,
    q0: ex.Point,
    T: float,
    h: float,
    blowup: float = 1e12,
) -> Trajectory:
    """Integrate the series-defined first-order flow qd = sum t^(2k-1) W_k(q)."""
    n = len(q0)
    taken = set(coeffs.coords)
    tname = _fresh_names("t_series", 1, taken)[0]
    outputs = []
    for a in range(n):
        terms = []
        for k, Wk in enumerate(coeffs.fields, start=1):
            c = Wk.components[a]
            if c != ex.ZERO:
                terms.append(ex.mul(ex.pow_(ex.var(tname), 2 * k - 1), c))
        outputs.append(ex.simplify(ex.add(*terms)))
    prog = tape.compile_exprs(outputs, list(coeffs.coords) + [tname])
    point = np.empty(prog.n_vars)

    def f(t, y):
        point[:n] = y
        point[n] = t
        return tape.eval_at(prog, point)

    ts, ys, blown = _rk4(f, np.asarray(q0.as_floats()), 0.0, T, h, blowup)
    Q = np.asarray(ys)
    V = np.asarray([
        series_velocity(coeffs, ex.Point(coeffs.coords, list(row)), t)
        for t, row in zip(ts, Q)
    ])
    return Trajectory(
        t=np.asarray(ts), q=Q, v=V, method="rk4-series", step=h, blown_up=blown,
    )


@dataclass(frozen=True)
class SeriesComparison:
    times: tuple
    errors: tuple
    max_error: float
    order_estimates: tuple
    diverging: bool


def compare_series_ode(
    system: MechanicalSystem,
    u: Sequence[float],
    order: int,
    T: float,
    h: float,
    q0: Optional[ex.Point] = None,
    clamp: bool = True,
) -> SeriesComparison:
    """Integrate the truncated series flow and the true system; report the
    pointwise configuration error and an empirical convergence order from
    halving the horizon twice."""
    q0 = q0 or system.q0
    coeffs = series_coefficients(system, u, order)
    signal = ControlSignal.constant(u, clamp=clamp)

    def final_error(horizon):
        tr_ode = integrate(system, signal, horizon, h, q0)
        tr_ser = integrate_series(coeffs, q0, horizon, h)
        if tr_ode.blown_up or tr_ser.blown_up:
            raise SimulatorError("trajectory blow-up during series comparison")
        k = min(len(tr_ode.t), len(tr_ser.t))
        errs = np.linalg.norm(tr_ode.q[:k] - tr_ser.q[:k], axis=1)
        return tr_ode.t[:k], errs

    times, errs = final_error(T)
    e_T = errs[-1]
    orders = []
    prev = e_T
    for div in (2.0, 4.0):
        _, errs_h = final_error(T / div)
        e_h = errs_h[-1]
        if e_h > 0 and prev > 0:
            orders.append(float(np.log2(prev / e_h)))
        prev = e_h
    mags = series_terms_magnitudes(coeffs, q0, T)
    diverging = any(b > a * (1 + 1e-12) for a, b in zip(mags, mags[1:]))
    return SeriesComparison(
        times=tuple(float(t) for t in times),
        errors=tuple(float(e) for e in errs),
        max_error=float(np.max(errs)),
        order_estimates=tuple(orders),
        diverging=diverging,
    )


def export_trajectory(traj: Trajectory, fileobj) -> None:
    """Rows `t q1..qn v1..vn`, 17 significant digits, one grid point per line."""
    n = traj.q.shape[1]
    header = "# t " + " ".join(f"q{i+1}" for i in range(n))
    header += " " + " ".join(f"v{i+1}" for i in range(n))
    fileobj.write(header + "\n")
    for k in range(len(traj.t)):
        row = [traj.t[k]] + list(traj.q[k]) + list(traj.v[k])
        fileobj.write(" ".join(f"{x:.17g}" for x in row) + "\n")
