"""Time the numba kernels against their numpy fallbacks.

Both implementations are called directly, so the ``LGRAPE_NUMBA`` switch
does not matter here.  Each row also reports the largest difference between
the two outputs.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from lgrape import _kernels as K
from lgrape.spins import SpinChain, chain_hamiltonian


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases():
    rng = np.random.default_rng(0)
    n = 6
    drift, (cx, cy) = chain_hamiltonian(SpinChain(rng.uniform(-5, 5, n), [1.0] * (n - 1)))
    L = np.ascontiguousarray(drift + 2.0 * cx)
    M = np.ascontiguousarray(drift + 2.2 * cx + 0.3 * cy)
    R = np.ascontiguousarray(drift + 2.4 * cx)
    v = np.zeros(L.shape[0], complex)
    v[0] = 1.0
    dt = 0.05
    steps = int(np.ceil(np.abs(L).sum(axis=0).max() * dt))
    h = dt / steps
    tol, mt = K.TAYLOR_TOL, K.MAX_TERMS
    yield ("taylor1 (dim 64)", lambda f: f(L, v, h, steps, tol, mt), K._taylor1_nb, K._taylor1_np)
    yield ("taylor2 (dim 64)", lambda f: f(L, R, v, h, dt, steps, tol, mt),
           K._taylor2_nb, K._taylor2_np)
    yield ("taylor3 (dim 64)", lambda f: f(L, M, R, v, h, dt, steps, tol, mt),
           K._taylor3_nb, K._taylor3_np)
    A = -1j * (rng.normal(size=(2000, 4, 4)) + 1j * rng.normal(size=(2000, 4, 4)))
    D = rng.normal(size=(2000, 4, 4)).astype(complex)
    yield ("expm batch (2000 x 4x4)", lambda f: f(A, tol, mt), K._expm_batch_nb, K._expm_batch_np)
    yield ("dexp batch (2000 x 4x4)", lambda f: f(A, D, tol, mt),
           K._dexp_batch_nb, K._dexp_batch_np)
    w0 = 2 * np.pi * 5e5
    dt = 2 * np.pi / (16 * w0)
    phi = np.array([[0.9, 0.4], [-0.4, 0.9]])
    g0 = np.array([0.01, 0.02])
    g1 = np.array([0.005, 0.01])
    u = np.cos(w0 * dt * np.arange(200_000))
    yield ("rlc recursion (2e5 samples)", lambda f: f(phi, g0, g1, u), K._rlc_nb, K._rlc_np)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':30s} {'numba (ms)':>11s} {'numpy (ms)':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, call, nb, npf in cases():
        t_nb, o_nb = best_of(lambda: call(nb), args.repeat)
        t_np, o_np = best_of(lambda: call(npf), args.repeat)
        a = o_nb[0] if isinstance(o_nb, tuple) else o_nb
        b = o_np[0] if isinstance(o_np, tuple) else o_np
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{name:30s} {1e3 * t_nb:11.3f} {1e3 * t_np:11.3f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
