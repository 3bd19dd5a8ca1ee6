"""Benchmark: compiled tape interpreter vs the pure-Python fallback.

Measures batch expression evaluation (the kernel under the randomized
numeric checks) and a full RK4 integration of the curved-metric fixture
(the kernel under `simulate`/`series-compare`).  Run:

    python benchmarks/bench_eval.py
"""

import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from symcon import expr as E          # noqa: E402
from symcon import tape               # noqa: E402
from symcon import _tape_py           # noqa: E402
from symcon import simulator as sim   # noqa: E402
from symcon.sysfile import load_system  # noqa: E402

try:
    from symcon import _tape_c
except ImportError:
    _tape_c = None


def build_program():
    coords = ("x", "y")
    texts = [
        "sin(x)*exp(y) + x^3*y - 1/(1+x^2)",
        "cos(x*y) - (1+x)^4 + y^2/(2+y^2)",
        "x*y*(1+x)*(1+y) - log(2+x^2)",
        "exp(x*y/4) + sin(x+y)^2",
    ]
    exprs = [E.simplify(E.parse_expr(t, coords)) for t in texts]
    return tape.compile_exprs(exprs, coords)


def bench_backend(run, prog, X, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(prog.ops, prog.args, prog.consts, prog.stack_need, prog.n_out, X)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_eval():
    prog = build_program()
    rng = np.random.default_rng(0)
    print(f"active backend: {tape.backend_name()}")
    print()
    print("batch evaluation, 4 expressions, P points  (best of 5, seconds)")
    print(f"{'P':>9}  {'python':>12}  {'compiled':>12}  {'speedup':>8}")
    for P in (100, 1000, 10_000, 100_000):
        X = np.ascontiguousarray(rng.uniform(-1, 1, size=(P, 2)))
        t_py = bench_backend(_tape_py.run, prog, X)
        if _tape_c is not None:
            t_c = bench_backend(_tape_c.run, prog, X)
            print(f"{P:>9}  {t_py:>12.6f}  {t_c:>12.6f}  {t_py / t_c:>7.1f}x")
        else:
            print(f"{P:>9}  {t_py:>12.6f}  {'n/a':>12}  {'':>8}")


def bench_rk4():
    system, _ = load_system(str(ROOT / "fixtures" / "curved2d.sys"))
    u = sim.ControlSignal.constant([1.0])

    def once():
        t0 = time.perf_counter()
        sim.integrate(system, u, T=0.5, h=1e-4)
        return time.perf_counter() - t0

    print()
    print("RK4 integration of the curved 2-D fixture (5000 steps):")
    best = min(once() for _ in range(3))
    print(f"  {tape.backend_name():>8} backend: {best:.4f} s")
    print(
        "  (set SYMCON_PURE_PYTHON=1 and rerun to time the fallback; the\n"
        "   integrator calls the tape once per RK4 stage, so single-point\n"
        "   dispatch overhead dominates in the pure-Python path)"
    )


if __name__ == "__main__":
    bench_eval()
    bench_rk4()
