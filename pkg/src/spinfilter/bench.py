"""Benchmark the compiled kernel against the pure-numpy fallback.

Run as ``python -m spinfilter.bench [--steps N] [--batch B] [--n-dim N]``.
"""

import argparse
import time

import numpy as np

from . import engine
from .feedback import ControllerSpec
from .integrator import noise_increments
from .spin import build_basis, projector
from .states import SystemParams


def _run(name, basis, params, spec, rho0, rhohat0, dw, dt, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        engine.run_batch(
            basis, params, spec, rho0, rhohat0, dw, dt, record_stride=dw.shape[1],
            engine=name,
        )
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--n-dim", type=int, default=3)
    args = parser.parse_args(argv)

    basis = build_basis(args.n_dim)
    params = SystemParams(omega=0.4, eta=0.4, M=1.4, omega_hat=0.5, eta_hat=0.5, M_hat=1.5)
    spec = ControllerSpec(variant="boundary", target=0, alpha=5.0, beta=2.0)
    dt = 1e-4
    rho0 = np.stack([projector(basis, args.n_dim - 1)] * args.batch)
    rhohat0 = np.stack([projector(basis, 1 if args.n_dim > 2 else 0)] * args.batch)
    dw = np.stack(
        [noise_increments(0, i, args.steps, dt) for i in range(args.batch)]
    )

    total = args.steps * args.batch
    results = {}
    for name in engine.available_engines():
        elapsed = _run(name, basis, params, spec, rho0, rhohat0, dw, dt)
        results[name] = elapsed
        print(f"{name:>9}: {elapsed:8.3f} s  ({total / elapsed / 1e6:6.2f} M coupled steps/s)")
    if len(results) == 2:
        print(f"speedup compiled/python: {results['python'] / results['compiled']:.2f}x")


if __name__ == "__main__":
    main()
