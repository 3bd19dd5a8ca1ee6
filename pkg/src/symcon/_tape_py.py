"""Pure-Python tape interpreter, vectorized over evaluation points."""

from __future__ import annotations

import numpy as np

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


def run(ops, args, consts, stack_need, n_out, X):
    P = X.shape[0]
    out = np.empty((P, n_out), dtype=np.float64)
    stack = []
    with np.errstate(all="ignore"):
        for op, a in zip(ops, args):
            if op == OP_CONST:
                stack.append(np.full(P, consts[a]))
            elif op == OP_VAR:
                stack.append(X[:, a].copy())
            elif op == OP_ADD:
                b = stack.pop()
                stack[-1] += b
            elif op == OP_MUL:
                b = stack.pop()
                stack[-1] *= b
            elif op == OP_POW:
                stack[-1] = stack[-1] ** float(a)
            elif op == OP_SIN:
                np.sin(stack[-1], out=stack[-1])
            elif op == OP_COS:
                np.cos(stack[-1], out=stack[-1])
            elif op == OP_EXP:
                np.exp(stack[-1], out=stack[-1])
            elif op == OP_LOG:
                np.log(stack[-1], out=stack[-1])
            else:  # OP_OUT
                out[:, a] = stack.pop()
    return out
