"""Command-line entry point: ``spectral-bandits <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
input, failed invariant checks).
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from spectral_bandits import __version__, kernels
from spectral_bandits._io import atomic_write_text, format_float
from spectral_bandits.algorithms import ALGORITHMS, AlgoConfig, InvariantViolation, StateError
from spectral_bandits.data import (RatingsFormatError, factors_to_csv, load_ratings,
                                   read_rewards_csv, rewards_to_csv, run_pipeline)
from spectral_bandits.effdim import summarize
from spectral_bandits.env import EnvSpec, compare, summary_to_csv, sweep, sweep_to_csv
from spectral_bandits.graph import (GraphError, SpectralError, generate, graph_to_text,
                                    load_graph, spectral_basis)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- flag parsing helpers -----------------------------------------------------

def parse_seeds(text):
    """``"a..b"`` (inclusive) or a comma list -> list of ints."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if lo < 0 or hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        seeds = [int(s) for s in text.split(",") if s.strip()]
        if not seeds or min(seeds) < 0:
            raise ValueError
        return seeds
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed range {text!r}; use a..b or a,b,c") from None


def _float_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _algo_list(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in ALGORITHMS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown algorithm {','.join(bad) or text!r}; choose from {', '.join(sorted(ALGORITHMS))}")
    return names


def _manifest(path, command, items):
    lines = [f"command={command}", f"version={__version__}", f"backend={kernels.BACKEND}"]
    lines += [f"{k}={v}" for k, v in items]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _load_graph(path):
    try:
        return load_graph(path)
    except FileNotFoundError:
        raise DataError(f"graph file not found: {path}") from None
    except (GraphError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _basis(g, reg_lambda, L):
    if L is not None and not 1 <= L <= g.n_nodes:
        raise UsageError(f"--L must be in [1, {g.n_nodes}], got {L}")
    try:
        return spectral_basis(g, reg_lambda, L)
    except SpectralError as exc:
        raise DataError(str(exc)) from None


# -- subcommands --------------------------------------------------------------

def cmd_gen_graph(args):
    try:
        g = generate(args.model, args.n, args.seed, p=args.p, m=args.m, k0=args.k0,
                     n_blocks=args.n_blocks, block_size=args.block_size)
    except GraphError as exc:
        raise UsageError(str(exc)) from None
    atomic_write_text(args.out, graph_to_text(g))
    _manifest(args.out + ".manifest.txt", "gen-graph", [
        ("model", args.model), ("n", args.n), ("p", args.p), ("m", args.m), ("k0", args.k0),
        ("n_blocks", args.n_blocks), ("block_size", args.block_size), ("seed", args.seed),
        ("graph_hash", g.content_hash()), ("n_edges", g.n_edges)])
    print(f"wrote {args.out}: n={g.n_nodes} edges={g.n_edges} components={g.n_components()}")


def cmd_effdim(args):
    if args.T < 1:
        raise UsageError("--T must be >= 1")
    if not args.reg_lambda > 0:
        raise UsageError("--lambda must be > 0")
    g = _load_graph(args.graph)
    info = summarize(_basis(g, args.reg_lambda, args.L), args.T)
    print(f"d={info['d']} d_old={info['d_old']} omega={info['omega']}")
    if args.show_waterfill:
        print("waterfill=" + ",".join(format_float(x) for x in info["t"]))


def cmd_basis(args):
    if not args.reg_lambda > 0:
        raise UsageError("--lambda must be > 0")
    g = _load_graph(args.graph)
    basis = _basis(g, args.reg_lambda, args.L)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "eigenvalues.csv"),
                      "".join(format_float(x) + "\n" for x in basis.eigenvalues))
    atomic_write_text(os.path.join(args.out, "eigenvectors.csv"),
                      factors_to_csv(basis.eigenvectors))
    _manifest(os.path.join(args.out, "manifest.txt"), "basis", [
        ("graph", args.graph), ("graph_hash", g.content_hash()), ("lambda", args.reg_lambda),
        ("L", basis.dim), ("n_components", basis.n_components)])
    print(f"wrote basis of dimension {basis.dim} to {args.out}")


def _env_spec(args, n_nodes):
    if args.rewards is not None:
        if args.user is None:
            raise UsageError("--rewards needs --user")
        try:
            f = read_rewards_csv(args.rewards, args.user)
        except FileNotFoundError:
            raise DataError(f"rewards file not found: {args.rewards}") from None
        except (RatingsFormatError, ValueError) as exc:
            raise DataError(f"{args.rewards}: {exc}") from None
        if len(f) > n_nodes:
            raise DataError(f"rewards reference item {len(f) - 1} but graph has {n_nodes} nodes")
        f = np.pad(f, (0, n_nodes - len(f)))
        return EnvSpec(R=args.R, rewards=tuple(f.tolist()))
    return EnvSpec(k_nonzero=args.k_nonzero, magnitude=args.magnitude, R=args.R,
                   normalize=args.normalize, clip=args.clip)


def _check_sim_flags(args):
    if args.T < 1:
        raise UsageError("--T must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.k_nonzero < 1:
        raise UsageError("--k-nonzero must be >= 1")
    if args.L is not None and args.rewards is None and args.L < args.k_nonzero:
        raise UsageError(f"--L {args.L} is smaller than --k-nonzero {args.k_nonzero}; "
                         "the reward would not fit in the truncated basis")


def _configs(args, algos, reg_lambda):
    try:
        return [AlgoConfig(algorithm=a, reg_lambda=reg_lambda, scale=args.scale, R=args.R,
                           C=args.C, delta=args.delta, T=args.T, lazy_ucb=args.lazy,
                           use_theoretical_constant=args.theoretical,
                           check_invariants=args.check_invariants) for a in algos]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sim_manifest_items(args, g):
    return [("graph", args.graph), ("graph_hash", g.content_hash()), ("T", args.T),
            ("R", args.R), ("C", args.C), ("delta", args.delta), ("L", args.L),
            ("lazy", args.lazy), ("theoretical", args.theoretical),
            ("k_nonzero", args.k_nonzero), ("magnitude", args.magnitude),
            ("normalize", args.normalize), ("clip", args.clip), ("rewards", args.rewards),
            ("user", args.user), ("seeds", ",".join(map(str, args.seeds)))]


def cmd_simulate(args):
    _check_sim_flags(args)
    configs = _configs(args, args.algo, args.reg_lambda)
    g = _load_graph(args.graph)
    basis = _basis(g, args.reg_lambda, args.L)
    spec = _env_spec(args, g.n_nodes)
    if spec.rewards is None and args.k_nonzero > basis.dim:
        raise UsageError(f"--k-nonzero {args.k_nonzero} exceeds basis dimension {basis.dim}")
    records = compare(basis, configs, spec, args.seeds, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    for rec in records:
        name = f"{rec.metadata['algorithm']}_seed{rec.metadata['run_seed']}.csv"
        atomic_write_text(os.path.join(args.out, name), rec.to_csv())
    atomic_write_text(os.path.join(args.out, "summary.csv"),
                      summary_to_csv(records, with_time=not args.no_timing))
    _manifest(os.path.join(args.out, "manifest.txt"), "simulate",
              [("algo", ",".join(args.algo)), ("lambda", args.reg_lambda),
               ("scale", args.scale)] + _sim_manifest_items(args, g))
    for algo in args.algo:
        finals = [r.final_regret for r in records if r.metadata["algorithm"] == algo]
        print(f"{algo}: mean final regret {np.mean(finals):.4f} over {len(finals)} runs")


def cmd_sweep(args):
    _check_sim_flags(args)
    if args.theoretical:
        raise UsageError("--theoretical makes the confidence scale fixed; nothing to sweep")
    if not args.lambdas or not args.scales:
        raise UsageError("--lambdas and --scales must be non-empty")
    if min(args.lambdas) <= 0 or min(args.scales) < 0:
        raise UsageError("--lambdas must be > 0 and --scales >= 0")
    args.scale = args.scales[0]
    base = _configs(args, [args.algo[0]], args.lambdas[0])[0]
    g = _load_graph(args.graph)
    basis = _basis(g, args.lambdas[0], args.L)
    spec = _env_spec(args, g.n_nodes)
    rows, best = sweep(basis, base, args.lambdas, args.scales, spec, args.seeds, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "sweep.csv"), sweep_to_csv(rows))
    _manifest(os.path.join(args.out, "manifest.txt"), "sweep",
              [("algo", args.algo[0]),
               ("lambdas", ",".join(map(format_float, args.lambdas))),
               ("scales", ",".join(map(format_float, args.scales)))]
              + _sim_manifest_items(args, g))
    print(f"best: lambda={format_float(best.reg_lambda)} scale={format_float(best.scale)} "
          f"mean_regret={best.mean_regret:.4f}")


def cmd_ingest(args):
    for flag in ("rank", "sweeps", "k", "n_users"):
        if getattr(args, flag) < 1:
            raise UsageError(f"--{flag.replace('_', '-')} must be >= 1")
    if args.reg < 0:
        raise UsageError("--reg must be >= 0")
    try:
        table = load_ratings(args.ratings, args.min_item_ratings, args.min_user_ratings)
    except FileNotFoundError:
        raise DataError(f"ratings file not found: {args.ratings}") from None
    except RatingsFormatError as exc:
        raise DataError(f"{args.ratings}: {exc}") from None
    if len(table) < 3:
        raise DataError("need at least 3 ratings to split into three parts")
    try:
        res = run_pipeline(table, args.rank, args.reg, args.sweeps, args.k, args.n_users,
                           args.seed)
    except (ValueError, GraphError) as exc:
        raise DataError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    labels = [table.user_ids[u] for u in res.users]
    atomic_write_text(os.path.join(args.out, "graph.txt"), graph_to_text(res.graph))
    atomic_write_text(os.path.join(args.out, "rewards.csv"), rewards_to_csv(labels, res.rewards))
    atomic_write_text(os.path.join(args.out, "tuning_rewards.csv"),
                      rewards_to_csv(labels, res.tuning_rewards))
    atomic_write_text(os.path.join(args.out, "item_factors.csv"),
                      factors_to_csv(res.graph_fact.V))
    atomic_write_text(os.path.join(args.out, "items.txt"),
                      "".join(f"{i}\n" for i in table.item_ids))
    _manifest(os.path.join(args.out, "manifest.txt"), "ingest", [
        ("ratings", args.ratings), ("min_item_ratings", args.min_item_ratings),
        ("min_user_ratings", args.min_user_ratings), ("rank", args.rank), ("reg", args.reg),
        ("sweeps", args.sweeps), ("k", args.k), ("n_users", len(res.users)),
        ("seed", args.seed), ("graph_hash", res.graph.content_hash()),
        ("n_items", table.n_items), ("n_ratings", len(table))])
    print(f"users={len(res.users)} items={table.n_items} ratings={len(table)} "
          f"model_rmse={res.model_fact.rmse:.4f}")


# -- parser -------------------------------------------------------------------

def _add_sim_flags(p, multi_algo):
    p.add_argument("--graph", required=True)
    p.add_argument("--algo", type=_algo_list, default=["spectral_ucb"],
                   help="algorithm id" + (" or comma list" if multi_algo else ""))
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--R", type=float, default=0.05)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--seeds", type=parse_seeds, default=list(range(5)), help="a..b inclusive")
    p.add_argument("--L", type=int, default=None, help="keep the L smallest eigenpairs")
    p.add_argument("--lazy", action="store_true", help="lazy (heap) UCB evaluation")
    p.add_argument("--theoretical", action="store_true",
                   help="use the confidence constant from the regret analysis")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--check-invariants", action="store_true")
    p.add_argument("--k-nonzero", type=int, default=20)
    p.add_argument("--magnitude", type=float, default=1.0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--clip", action="store_true")
    p.add_argument("--rewards", default=None, help="user,item,reward CSV from ingest")
    p.add_argument("--user", default=None)
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = _Parser(prog="spectral-bandits", allow_abbrev=False,
                     description="Spectral bandits on graphs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-graph", allow_abbrev=False, help="generate a synthetic graph")
    p.add_argument("--model", required=True, choices=["er", "ba", "lattice", "blocks"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--k0", type=int, default=3)
    p.add_argument("--n-blocks", type=int, default=None)
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("effdim", allow_abbrev=False, help="effective dimension of a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=0.01)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--show-waterfill", action="store_true")
    p.set_defaults(func=cmd_effdim)

    p = sub.add_parser("basis", allow_abbrev=False, help="write the Laplacian eigenbasis")
    p.add_argument("--graph", required=True)
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=0.01)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("simulate", allow_abbrev=False, help="run bandit simulations")
    _add_sim_flags(p, multi_algo=True)
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=0.01)
    p.add_argument("--scale", type=float, default=0.1, help="confidence scale c (UCB) or v (TS)")
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_ms=0 so summary.csv is reproducible byte for byte")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", allow_abbrev=False, help="grid search over lambda and scale")
    _add_sim_flags(p, multi_algo=False)
    p.add_argument("--lambdas", type=_float_list, required=True)
    p.add_argument("--scales", type=_float_list, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ingest", allow_abbrev=False,
                       help="ratings -> item graph + per-user reward vectors")
    p.add_argument("--ratings", required=True)
    p.add_argument("--min-item-ratings", type=int, default=0)
    p.add_argument("--min-user-ratings", type=int, default=0)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--reg", type=float, default=0.1)
    p.add_argument("--sweeps", type=int, default=30)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-users", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "algo", None) and args.command == "sweep" and len(args.algo) > 1:
            raise UsageError("sweep takes a single --algo")
        args.func(args)
    except UsageError as exc:
        print(f"spectral-bandits: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"spectral-bandits: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantViolation, StateError) as exc:
        print(f"spectral-bandits: invariant violated: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
