"""Smooth-reward environments on graphs, the run loop, batches and sweeps."""
from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from spectral_bandits._io import atomic_write_text, format_float
from spectral_bandits.algorithms import AlgoConfig, make_algorithm

RUN_HEADER = "t,arm,reward,inst_regret,cum_regret"
SUMMARY_HEADER = "algorithm,seed,final_regret,wall_ms"
SWEEP_HEADER = "lambda,scale,mean_regret,stderr,n_runs"


def derive_seed(*keys):
    """Stable 63-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence(list(keys)).generate_state(2, dtype=np.uint64)[0] >> 1)


def env_seed(run_seed):
    return derive_seed(run_seed, 0)


def algo_seed(run_seed):
    return derive_seed(run_seed, 1)


class SmoothRewardEnv:
    """Arms with mean rewards ``f = Q α`` and uniform noise on ``[-R, R]``."""

    def __init__(self, basis, alpha_true, R=0.05, seed=0, rewards=None):
        if R < 0:
            raise ValueError("noise bound R must be >= 0")
        self.basis = basis
        self.alpha_true = np.asarray(alpha_true, dtype=np.float64)
        if rewards is None:
            self.f = basis.features @ self.alpha_true
        else:
            self.f = np.asarray(rewards, dtype=np.float64)
        self.R = float(R)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.best_arm = int(np.argmax(self.f))
        self.best_value = float(self.f[self.best_arm])

    @property
    def n_arms(self):
        return len(self.f)

    def pull(self, arm):
        return float(self.f[arm] + self.rng.uniform(-self.R, self.R))

    def regret(self, arm):
        return self.best_value - float(self.f[arm])

    def smoothness(self):
        """``α^T Λ α`` with the regularised spectrum of the basis."""
        return float(np.sum(self.basis.reg_eigenvalues * self.alpha_true ** 2))


def make_smooth_env(basis, k_nonzero, magnitude=1.0, seed=0, R=0.05, *,
                    normalize=False, clip=False):
    """Random smooth environment supported on the ``k_nonzero`` lowest frequencies.

    Coefficients are uniform on ``[-magnitude, magnitude]``. The full-length
    draw is made first and then masked, so for one seed the support grows by
    nesting as ``k_nonzero`` increases. ``normalize`` rescales so
    ``max |f| = 1``; ``clip`` only shrinks when ``max |f| > 1``.
    """
    if not 1 <= k_nonzero <= basis.dim:
        raise ValueError(f"k_nonzero must be in [1, {basis.dim}], got {k_nonzero}")
    alpha_rng, noise_seed = np.random.SeedSequence(seed).spawn(2)
    draws = np.random.default_rng(alpha_rng).uniform(-1.0, 1.0, size=basis.dim) * magnitude
    alpha = np.zeros(basis.dim)
    alpha[:k_nonzero] = draws[:k_nonzero]
    peak = float(np.max(np.abs(basis.features @ alpha)))
    if peak > 0 and (normalize or (clip and peak > 1.0)):
        alpha /= peak
    return SmoothRewardEnv(basis, alpha, R, np.random.default_rng(noise_seed))


def env_from_rewards(basis, rewards, R=0.05, seed=0):
    """Environment with given mean rewards; ``α`` is their projection on the basis."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if len(rewards) != basis.n_nodes:
        raise ValueError(f"reward vector has {len(rewards)} entries, graph has {basis.n_nodes}")
    alpha = basis.features.T @ rewards
    return SmoothRewardEnv(basis, alpha, R, seed, rewards=rewards)


@dataclass(frozen=True)
class EnvSpec:
    """Recipe for building the environment of one run (picklable)."""

    k_nonzero: int = 20
    magnitude: float = 1.0
    R: float = 0.05
    normalize: bool = False
    clip: bool = False
    rewards: tuple | None = None

    def build(self, basis, seed):
        if self.rewards is not None:
            return env_from_rewards(basis, self.rewards, self.R, env_seed(seed))
        return make_smooth_env(basis, self.k_nonzero, self.magnitude, env_seed(seed), self.R,
                               normalize=self.normalize, clip=self.clip)


@dataclass
class RunRecord:
    t: np.ndarray
    arm: np.ndarray
    reward: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def final_regret(self):
        return float(self.cum_regret[-1]) if len(self.cum_regret) else 0.0

    @property
    def wall_ms(self):
        return self.metadata.get("wall_ms", 0.0)

    def to_csv(self):
        lines = [RUN_HEADER]
        for row in zip(self.t.tolist(), self.arm.tolist(), self.reward.tolist(),
                       self.inst_regret.tolist(), self.cum_regret.tolist()):
            t, a, r, ir, cr = row
            lines.append(f"{t},{a},{format_float(r)},{format_float(ir)},{format_float(cr)}")
        return "\n".join(lines) + "\n"


def run(env, algorithm, T, check_invariants=False):
    """Play ``T`` rounds of select / pull / update and record pseudo-regret."""
    arms = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    start = time.perf_counter()
    for i in range(T):
        a = algorithm.select()
        r = env.pull(a)
        algorithm.update(a, r)
        arms[i] = a
        rewards[i] = r
        if check_invariants:
            algorithm.check_invariants()
    wall = time.perf_counter() - start
    inst = env.best_value - env.f[arms]
    np.maximum(inst, 0.0, out=inst)
    return RunRecord(np.arange(1, T + 1), arms, rewards, inst, np.cumsum(inst), {
        "algorithm": algorithm.config.algorithm,
        "seed": algorithm.config.seed,
        "wall_ms": wall * 1e3,
    })


def run_eliminator(basis, config, env):
    if config.family != "eliminator":
        raise ValueError("run_eliminator needs an eliminator config")
    algo = make_algorithm(basis, config)
    return run(env, algo, config.T, config.check_invariants)


@dataclass(frozen=True)
class Cell:
    """One (config, run seed) unit of work."""

    config: AlgoConfig
    run_seed: int
    index: int = 0


def _run_cell(basis, env_spec, cell):
    cfg = replace(cell.config, seed=algo_seed(cell.run_seed))
    env = env_spec.build(basis, cell.run_seed)
    algo = make_algorithm(basis, cfg)
    rec = run(env, algo, cfg.T, cfg.check_invariants)
    rec.metadata.update(run_seed=cell.run_seed, cell=cell.index)
    return rec


def execute(basis, env_spec, cells, jobs=1):
    """Run cells, in parallel when ``jobs > 1``; results keep the input order."""
    cells = list(cells)
    if jobs <= 1 or len(cells) <= 1:
        return [_run_cell(basis, env_spec, c) for c in cells]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_cell, basis, env_spec, c) for c in cells]
        return [f.result() for f in futures]


def compare(basis, configs, env_spec, seeds, jobs=1):
    """Run every config on every seed with common environments per seed."""
    cells = [Cell(cfg, s, i) for i, (cfg, s) in
             enumerate((cfg, s) for cfg in configs for s in seeds)]
    return execute(basis, env_spec, cells, jobs)


@dataclass
class SweepRow:
    reg_lambda: float
    scale: float
    mean_regret: float
    stderr: float
    n_runs: int


def sweep(basis, base_config, lambdas, scales, env_spec, seeds, jobs=1):
    """Grid search over (λ, confidence scale); returns ``(rows, best_row)``.

    Every cell sees the same environment seeds (common random numbers).
    """
    seeds = list(seeds)
    grid = [(lam, sc) for lam in lambdas for sc in scales]
    cells = []
    for gi, (lam, sc) in enumerate(grid):
        cfg = replace(base_config, reg_lambda=lam, scale=sc, use_theoretical_constant=False)
        cells += [Cell(cfg, s, gi) for s in seeds]
    records = execute(basis, env_spec, cells, jobs)
    rows = []
    for gi, (lam, sc) in enumerate(grid):
        finals = np.array([r.final_regret for r in records if r.metadata["cell"] == gi])
        n = len(finals)
        se = float(finals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append(SweepRow(lam, sc, float(finals.mean()), se, n))
    best = min(rows, key=lambda r: r.mean_regret)
    return rows, best


def sweep_to_csv(rows):
    lines = [SWEEP_HEADER]
    lines += [f"{format_float(r.reg_lambda)},{format_float(r.scale)},"
              f"{format_float(r.mean_regret)},{format_float(r.stderr)},{r.n_runs}"
              for r in rows]
    return "\n".join(lines) + "\n"


def summary_to_csv(records, with_time=True):
    lines = [SUMMARY_HEADER]
    for r in records:
        wall = format_float(round(r.wall_ms, 3)) if with_time else "0"
        lines.append(f"{r.metadata['algorithm']},{r.metadata.get('run_seed', r.metadata['seed'])},"
                     f"{format_float(r.final_regret)},{wall}")
    return "\n".join(lines) + "\n"


def write_run_csv(record, path):
    atomic_write_text(path, record.to_csv())
