"""Compare the compiled ansatz kernel with the numpy fallback.

Run from the repository root after ``pip install -e .``::

    python benchmarks/bench_kernels.py [--repeat 5]

Workloads mirror the training hot paths: a QT parameter-shift sweep
(11 qubits, 10 layers, 1 + 2*110 circuits) and one QLSTM gate call
(5 qubits, 10 layers, 8 samples x (1 + 100 + 10) circuits).
"""
import argparse
import time

import numpy as np

from fedqt import _fallback, kernels, vqc

WORKLOADS = {
    "qt_shift_sweep": (11, 10, 221),
    "qlstm_gate_step": (5, 10, 8 * 111),
    "small_4q": (4, 3, 4096),
}


def bench(fn, args, repeat):
    psi, c, s, src = args
    best = float("inf")
    for _ in range(repeat):
        work = psi.copy()
        t0 = time.perf_counter()
        fn(work, c, s, src)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernel not available; only the fallback will be timed")
    rng = np.random.default_rng(0)
    print(f"{'workload':<18}{'circuits':>9}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    for name, (n, layers, batch) in WORKLOADS.items():
        psi = rng.normal(size=(batch, 2 ** n))
        ang = rng.uniform(-np.pi, np.pi, (batch, layers, n)) / 2
        call = (psi, np.cos(ang), np.sin(ang), vqc.cnot_chain_source(n))
        t_py = bench(_fallback.evolve, call, args.repeat)
        if kernels.BACKEND == "cython":
            t_c = bench(kernels.evolve, call, args.repeat)
            diff = np.abs(_fallback.evolve(psi.copy(), *call[1:]) - kernels.evolve(psi.copy(), *call[1:])).max()
            assert diff < 1e-12, diff
            print(f"{name:<18}{batch:>9}{1e3 * t_py:>12.2f}{1e3 * t_c:>13.2f}{t_py / t_c:>8.1f}x")
        else:
            print(f"{name:<18}{batch:>9}{1e3 * t_py:>12.2f}{'-':>13}{'-':>9}")


if __name__ == "__main__":
    main()
