"""Compilation of expression trees to a flat stack-machine program.

Symbolic trees are slow to walk point by point; the integrator and the
randomized numeric checks evaluate the same expressions at thousands of
points.  ``compile_exprs`` flattens a list of trees into one instruction
tape which is interpreted either by the compiled extension
(``symcon._tape_c``, built from Cython) or by a pure-Python fallback that
vectorizes over evaluation points with numpy.  The backend is chosen once
at import; set ``SYMCON_PURE_PYTHON=1`` to force the fallback.

Unlike ``expr.evaluate``, tape evaluation follows IEEE semantics for
domain violations (log of a non-positive number yields nan, division by
zero yields inf) instead of raising; callers check finiteness.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_MUL = 3
OP_POW = 4
OP_SIN = 5
OP_COS = 6
OP_EXP = 7
OP_LOG = 8
OP_OUT = 9

_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "log": OP_LOG}

if os.environ.get("SYMCON_PURE_PYTHON"):
    from . import _tape_py as _backend
    _BACKEND_NAME = "python"
else:
    try:
        from . import _tape_c as _backend  # type: ignore[no-redef]
        _BACKEND_NAME = "compiled"
    except ImportError:
        from . import _tape_py as _backend  # type: ignore[no-redef]
        _BACKEND_NAME = "python"


def backend_name() -> str:
    return _BACKEND_NAME


@dataclass(frozen=True)
class Program:
    """Instruction tape evaluating a fixed list of expressions."""

    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    varnames: tuple
    n_out: int
    stack_need: int

    @property
    def n_vars(self) -> int:
        return len(self.varnames)


class _Emitter:
    def __init__(self, varnames: Sequence[str]):
        self.var_index = {v: i for i, v in enumerate(varnames)}
        self.ops: list = []
        self.args: list = []
        self.consts: list = []
        self.const_index: dict = {}
        self.depth = 0
        self.max_depth = 0

    def _push(self):
        self.depth += 1
        self.max_depth = max(self.max_depth, self.depth)

    def emit(self, op: int, arg: int = 0):
        self.ops.append(op)
        self.args.append(arg)

    def const(self, value: float):
        idx = self.const_index.get(value)
        if idx is None:
            idx = len(self.consts)
            self.consts.append(value)
            self.const_index[value] = idx
        self.emit(OP_CONST, idx)
        self._push()

    def walk(self, e: ex.Expr):
        if isinstance(e, ex.Const):
            self.const(float(e.value))
        elif isinstance(e, ex.Var):
            try:
                self.emit(OP_VAR, self.var_index[e.name])
            except KeyError:
                raise ex.ExprError(f"variable {e.name!r} not in program scope") from None
            self._push()
        elif isinstance(e, ex.Add):
            for i, t in enumerate(e.terms):
                self.walk(t)
                if i > 0:
                    self.emit(OP_ADD)
                    self.depth -= 1
        elif isinstance(e, ex.Mul):
            for i, f in enumerate(e.factors):
                self.walk(f)
                if i > 0:
                    self.emit(OP_MUL)
                    self.depth -= 1
        elif isinstance(e, ex.Pow):
            self.walk(e.base)
            self.emit(OP_POW, e.exponent)
        elif isinstance(e, ex.Call):
            self.walk(e.arg)
            self.emit(_FUNC_OPS[e.func])
        else:
            raise TypeError(f"unknown node {type(e).__name__}")

    def out(self, slot: int):
        self.emit(OP_OUT, slot)
        self.depth -= 1


def compile_exprs(exprs: Sequence[ex.Expr], varnames: Sequence[str]) -> Program:
    """Flatten ``exprs`` into one tape over the variable order ``varnames``."""
    em = _Emitter(varnames)
    for slot, e in enumerate(exprs):
        em.walk(e)
        em.out(slot)
    return Program(
        ops=np.asarray(em.ops, dtype=np.int32),
        args=np.asarray(em.args, dtype=np.int32),
        consts=np.asarray(em.consts if em.consts else [0.0], dtype=np.float64),
        varnames=tuple(varnames),
        n_out=len(exprs),
        stack_need=max(em.max_depth, 1),
    )


def eval_program(prog: Program, points: np.ndarray) -> np.ndarray:
    """Evaluate at ``points`` (P, n_vars); returns (P, n_out) float64."""
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != prog.n_vars:
        raise ValueError(f"expected {prog.n_vars} columns, got {X.shape[1]}")
    return _backend.run(
        prog.ops, prog.args, prog.consts, prog.stack_need, prog.n_out, X
    )


def eval_at(prog: Program, point: Sequence[float]) -> np.ndarray:
    """Evaluate at a single point; returns a (n_out,) vector."""
    return eval_program(prog, np.asarray(point, dtype=np.float64).reshape(1, -1))[0]
