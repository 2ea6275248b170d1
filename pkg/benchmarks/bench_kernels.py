"""Compare the compiled and pure-Python kernel backends.

Times each per-round kernel at several dimensions, then a full SpectralUCB
run on a Barabási-Albert graph with each backend.

    python3 benchmarks/bench_kernels.py --dims 50,200,1000 --T 200
"""
import argparse
import timeit

import numpy as np

from spectral_bandits.algorithms import AlgoConfig, make_algorithm
from spectral_bandits.env import EnvSpec, run
from spectral_bandits.graph import generate, spectral_basis
from spectral_bandits.kernels import available_backends, load_backend


def _kernel_cases(k, dim, rng):
    a = rng.standard_normal((dim, dim))
    spd = a @ a.T + dim * np.eye(dim)
    inv = np.linalg.inv(spd)
    upper = np.linalg.cholesky(spd).T.copy()
    # small x keeps repeated in-place updates well conditioned, so no copies are timed
    x = 1e-3 * rng.standard_normal(dim)
    arms = rng.standard_normal((dim, dim))
    sq = np.full(dim, 1e6)
    u = np.empty(dim)
    scratch = np.empty(dim)

    def chol():
        scratch[:] = x
        k.chol_update(upper, scratch)

    return {
        "sherman_morrison": lambda: k.sherman_morrison(inv, x, u),
        "chol_update": chol,
        "quad_form": lambda: k.quad_form(inv, x),
        "downdate_sq_widths": lambda: k.downdate_sq_widths(arms, x, 1.0, sq),
        "rank_one_add": lambda: k.rank_one_add(spd, x, 1.0),
    }


def _best_us(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e6


def bench_kernels(dims, repeat):
    backends = available_backends()
    print("kernel,dim," + ",".join(f"{b}_us" for b in backends))
    for dim in dims:
        number = max(1, 20000 // (dim * 4))
        timings = {}
        for name in backends:
            cases = _kernel_cases(load_backend(name), dim, np.random.default_rng(0))
            for kernel, fn in cases.items():
                timings.setdefault(kernel, []).append(_best_us(fn, repeat, number))
        for kernel, ts in timings.items():
            print(f"{kernel},{dim}," + ",".join(f"{t:.1f}" for t in ts))


def bench_run(n_nodes, T, seed):
    basis = spectral_basis(generate("ba", n_nodes, seed=seed), 0.01)
    cfg = AlgoConfig(algorithm="spectral_ucb", reg_lambda=0.01, scale=0.1, T=T, seed=seed)
    print("\nbackend,n_nodes,T,run_ms,final_regret")
    for name in available_backends():
        env = EnvSpec().build(basis, seed)
        rec = run(env, make_algorithm(basis, cfg, load_backend(name)), T)
        print(f"{name},{n_nodes},{T},{rec.wall_ms:.1f},{rec.final_regret:.6f}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", default="50,200,1000",
                        help="comma-separated matrix dimensions")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--n-nodes", type=int, default=500)
    parser.add_argument("--T", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    bench_kernels([int(d) for d in args.dims.split(",")], args.repeat)
    bench_run(args.n_nodes, args.T, args.seed)


if __name__ == "__main__":
    main()
