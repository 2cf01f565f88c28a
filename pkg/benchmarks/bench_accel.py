"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is chosen at
import time from WHQUANT_BACKEND.  Results are compared for agreement.

    python benchmarks/bench_accel.py [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

CASES = r"""
import json, sys, time, warnings
import numpy as np
warnings.simplefilter("ignore")
from whquant import backend_name, build_m, cartesian_grid, parse_poly, parse_weight, quantize_grid
from whquant import basis, lower_symbol, wigner_map
from whquant.quantizer import quantize_poly_qp

repeat = int(sys.argv[1])
cg = parse_weight("cg:-0.5")
grid = cartesian_grid(6.0, 64)
A_q2 = quantize_poly_qp(parse_weight("ww"), parse_poly("q^2"), 120)
cases = {
    "quantize_grid cg:-0.5 q^2 dim=16": lambda: quantize_grid(cg, parse_poly("q^2"), 16).mat,
    "build_m gauss:1,2 dim=24": lambda: build_m(parse_weight("gauss:1,2"), 24).mat,
    "lower_symbol cg:-0.5 |e1><e1| 64x64": lambda: lower_symbol(cg, basis(1, 24).projector(), grid).values,
    "wigner regularized A_q^2 64x64": lambda: wigner_map(A_q2, grid, regularize=True, degree=2).values,
}
out = {"backend": backend_name(), "cases": {}}
for name, fn in cases.items():
    fn()  # warm-up: compile or cache
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        val = fn()
        best = min(best, time.perf_counter() - t)
    out["cases"][name] = {"seconds": best, "values": [[v.real, v.imag] for v in np.ravel(val)]}
print(json.dumps(out))
"""


def run(backend, repeat):
    env = dict(os.environ, WHQUANT_BACKEND=backend, PYTHONWARNINGS="ignore")
    res = subprocess.run([sys.executable, "-c", CASES, str(repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run("numba", args.repeat), run("numpy", args.repeat)
    print(f"{'case':42s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, a in fast["cases"].items():
        b = slow["cases"][name]
        diff = max(abs(complex(*x) - complex(*y)) for x, y in zip(a["values"], b["values"]))
        print(f"{name:42s} {a['seconds']:10.4f} {b['seconds']:10.4f} {b['seconds'] / a['seconds']:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
