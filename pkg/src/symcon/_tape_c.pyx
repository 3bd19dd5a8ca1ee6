# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape interpreter: scalar stack machine, one pass per point."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, log, pow, sin

cnp.import_array()


def run(cnp.int32_t[::1] ops, cnp.int32_t[::1] args, cnp.float64_t[::1] consts,
        int stack_need, int n_out, cnp.float64_t[:, ::1] X):
    cdef Py_ssize_t P = X.shape[0]
    cdef Py_ssize_t n_instr = ops.shape[0]
    out_arr = np.empty((P, n_out), dtype=np.float64)
    stack_arr = np.empty(stack_need, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef cnp.float64_t[::1] st = stack_arr
    cdef Py_ssize_t p, i
    cdef int sp, op, a
    cdef double x
    with nogil:
        for p in range(P):
            sp = 0
            for i in range(n_instr):
                op = ops[i]
                a = args[i]
                if op == 0:
                    st[sp] = consts[a]
                    sp += 1
                elif op == 1:
                    st[sp] = X[p, a]
                    sp += 1
                elif op == 2:
                    sp -= 1
                    st[sp - 1] = st[sp - 1] + st[sp]
                elif op == 3:
                    sp -= 1
                    st[sp - 1] = st[sp - 1] * st[sp]
                elif op == 4:
                    x = st[sp - 1]
                    if a == 2:
                        st[sp - 1] = x * x
                    elif a == 3:
                        st[sp - 1] = x * x * x
                    elif a == -1:
                        st[sp - 1] = 1.0 / x
                    elif a == 4:
                        x = x * x
                        st[sp - 1] = x * x
                    elif a == -2:
                        st[sp - 1] = 1.0 / (x * x)
                    else:
                        st[sp - 1] = pow(x, <double> a)
                elif op == 5:
                    st[sp - 1] = sin(st[sp - 1])
                elif op == 6:
                    st[sp - 1] = cos(st[sp - 1])
                elif op == 7:
                    st[sp - 1] = exp(st[sp - 1])
                elif op == 8:
                    st[sp - 1] = log(st[sp - 1])
                else:
                    sp -= 1
                    out[p, a] = st[sp]
    return out_arr
