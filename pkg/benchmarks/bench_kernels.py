"""Compare the compiled and pure-Python Kronecker-sum kernels.

Times ``Mhat @ x`` for the 1D wave model (CSR spatial matrices) with both
backends and checks that they agree.  Run with ``python3 benchmarks/bench_kernels.py``.
"""
import argparse
import timeit

import numpy as np

from dgtime import WaveModel1D, assemble_slab_operators, manufactured_case, time_matrices
from dgtime.kernels import get_accumulator, kron_sum_apply


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--elements", type=int, nargs="+", default=[201, 1001, 5001])
    parser.add_argument("--degree", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args(argv)

    try:
        get_accumulator("compiled")
        backends = ["compiled", "python"]
    except ImportError:
        print("compiled kernel not built; timing the fallback only")
        backends = ["python"]

    rng = np.random.default_rng(0)
    print(f"{'d':>6} {'backend':>9} {'us/apply':>10} {'max |diff|':>11}")
    for n in args.elements:
        system = manufactured_case(WaveModel1D(n_elements=n, zeta=0.5)).system()
        tm = time_matrices(args.degree, "shifted-legendre", 0.01)
        ops = assemble_slab_operators(system, tm)
        terms = [(system.P, tm.n13), (system.L, tm.n2), (system.K, tm.n7)]
        X = rng.standard_normal((system.dim, args.degree + 1))
        ref = kron_sum_apply(terms, X, backend="python")
        assert np.allclose(ref.ravel(), ops.m_hat_sparse() @ X.ravel())
        for backend in backends:
            out = kron_sum_apply(terms, X, backend=backend)
            t = timeit.timeit(lambda: kron_sum_apply(terms, X, backend=backend),
                              number=args.repeat) / args.repeat
            print(f"{system.dim:>6} {backend:>9} {t * 1e6:>10.1f} {np.abs(out - ref).max():>11.2e}")


if __name__ == "__main__":
    main()
