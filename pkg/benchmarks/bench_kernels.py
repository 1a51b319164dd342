"""Compare the numba and numpy block-building kernels.

Run ``python benchmarks/bench_kernels.py``. Each kernel runs on the same inputs
through both backends. The script checks that the outputs agree and then
prints the best wall time over several repeats. A second table times the
end-to-end build of all blocks up to order n, with the backend chosen by the
``U1CORR_NUMBA`` flag in a fresh interpreter.

Most of the work in an amplitude sweep is LAPACK (LU factorisation and
triangular solves), and neither backend touches it. The kernels only affect
block construction, which is cached per model.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from u1corr import _accel
from u1corr.library import dimer_jc_chain, waveguide_dimer_chain
from u1corr.space import _caps, blocks_for

CASES = {
    "dimer N_c=8 n=4": (lambda: dimer_jc_chain(8), 4),
    "dimer N_c=8 n=5": (lambda: dimer_jc_chain(8), 5),
    "waveguide N=20 n=4": (lambda: waveguide_dimer_chain(20)[0], 4),
}


def kernel_inputs(model, n):
    caps = np.minimum(_caps(model, n), n)
    S = len(model.sites)
    hi = _accel.NUMPY_KERNELS["enumerate"](n, caps)
    lo = _accel.NUMPY_KERNELS["enumerate"](n - 1, np.minimum(caps, n - 1))
    lo_keys = _accel.NUMPY_KERNELS["keys"](lo, S)
    lo_order = np.argsort(lo_keys, kind="stable")
    hi_keys = _accel.NUMPY_KERNELS["keys"](hi, S)
    hi_order = np.argsort(hi_keys, kind="stable")
    src, dst, amp = [], [], []
    for c in model.couplings:
        i, j = model.site_index(c.site_i), model.site_index(c.site_j)
        src += [j, i]
        dst += [i, j]
        amp += [c.amplitude, c.amplitude.conjugate()]
    return {
        "enumerate": (n, caps),
        "keys": (hi, S),
        "lowering": (hi, 0, bool(model.is_qubit[0]), lo_keys[lo_order], lo_order),
        "hopping": (hi, hi_keys[hi_order], hi_order, np.array(src, dtype=np.int64),
                    np.array(dst, dtype=np.int64), np.array(amp, dtype=complex), model.is_qubit),
    }


def canonical(out):
    """Kernel output in a backend-independent order (triplets are sorted by position)."""
    if not isinstance(out, tuple):
        return [out]
    rows, cols, vals = out
    idx = np.lexsort((cols, rows))
    return [rows[idx], cols[idx], vals[idx]]


def best_time(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def kernel_table(repeat):
    print(f"{'case':22s} {'kernel':10s} {'dim':>7s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s}")
    for name, (build, n) in CASES.items():
        model = build()
        inputs = kernel_inputs(model, n)
        dim = inputs["keys"][0].shape[0]
        for kernel, args in inputs.items():
            ref = _accel.NUMPY_KERNELS[kernel](*args)
            got = _accel.NUMBA_KERNELS[kernel](*args)  # also triggers compilation
            if not all(np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(canonical(ref), canonical(got))):
                raise SystemExit(f"backend mismatch in {kernel} for {name}")
            t_np = best_time(_accel.NUMPY_KERNELS[kernel], args, repeat)
            t_nb = best_time(_accel.NUMBA_KERNELS[kernel], args, repeat)
            print(f"{name:22s} {kernel:10s} {dim:7d} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:9.1f}")


def build_all_blocks(case: str) -> None:
    build, n = CASES[case]
    model = build()
    cache = blocks_for(model)
    for k in range(1, n + 1):
        cache.h_eff(k)
        for ch in model.channels:
            cache.channel_lowering(ch.id, k)


def end_to_end_table():
    print()
    print(f"{'case':22s} {'numpy [s]':>10s} {'numba [s]':>10s}  (fresh process, includes import and JIT cache load)")
    for case in CASES:
        times = []
        for flag in ("0", "1"):
            env = dict(os.environ, U1CORR_NUMBA=flag)
            code = ("import time, sys; sys.path.insert(0, %r); import bench_kernels as b; "
                    "t = time.perf_counter(); b.build_all_blocks(%r); print(time.perf_counter() - t)"
                    % (os.path.dirname(os.path.abspath(__file__)), case))
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            times.append(float(out.stdout.strip()))
        print(f"{case:22s} {times[0]:10.3f} {times[1]:10.3f}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)
    if _accel.numba is None:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"active backend in this process: {_accel.backend()}")
    kernel_table(args.repeat)
    if not args.skip_end_to_end:
        end_to_end_table()


if __name__ == "__main__":
    main()
