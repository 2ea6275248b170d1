import math

import numpy as np
import pytest

from spectral_bandits.algorithms import AlgoConfig, make_algorithm
from spectral_bandits.env import (RUN_HEADER, SUMMARY_HEADER, SWEEP_HEADER, Cell, EnvSpec,
                                  SmoothRewardEnv, algo_seed, compare, derive_seed, env_from_rewards,
                                  env_seed, execute, make_smooth_env, run, run_eliminator,
                                  summary_to_csv, sweep, sweep_to_csv, write_run_csv)
from spectral_bandits.graph import SpectralBasis, generate, spectral_basis


@pytest.fixture(scope="module")
def ba100():
    return spectral_basis(generate("ba", 100, seed=0), 0.01)


def _cfg(name="spectral_ucb", **kw):
    return AlgoConfig(**{"algorithm": name, "reg_lambda": 0.01, "scale": 0.1, "T": 50, **kw})


class TestMakeEnv:
    def test_constant_reward_zero_regret(self):
        basis = spectral_basis(generate("lattice", 100), 0.01)
        env = make_smooth_env(basis, 1, seed=3)
        assert np.ptp(env.f) < 1e-12
        for name in ("spectral_ucb", "spectral_ts", "linucb"):
            rec = run(env, make_algorithm(basis, _cfg(name)), 50)
            assert rec.final_regret == pytest.approx(0.0, abs=1e-12)

    def test_f_is_Q_alpha(self, ba100):
        env = make_smooth_env(ba100, 20, seed=1)
        np.testing.assert_allclose(env.f, ba100.eigenvectors @ env.alpha_true, rtol=1e-12)
        assert np.count_nonzero(env.alpha_true[20:]) == 0
        assert np.all(np.abs(env.alpha_true) <= 1.0)

    def test_support_nests(self, ba100):
        a5 = make_smooth_env(ba100, 5, seed=4).alpha_true
        a50 = make_smooth_env(ba100, 50, seed=4).alpha_true
        np.testing.assert_array_equal(a5[:5], a50[:5])

    def test_smoothness_ordering(self):
        b = spectral_basis(generate("ba", 500, seed=0), 0.001)
        sm = [np.mean([make_smooth_env(b, k, seed=env_seed(s)).smoothness() for s in range(5)])
              for k in (5, 25, 100, 500)]
        assert sm == sorted(sm) and len(set(sm)) == 4

    def test_normalize(self, ba100):
        env = make_smooth_env(ba100, 20, magnitude=5.0, seed=0, normalize=True)
        assert np.max(np.abs(env.f)) == pytest.approx(1.0)

    def test_clip_only_shrinks(self, ba100):
        small = make_smooth_env(ba100, 3, magnitude=0.01, seed=0, clip=True)
        plain = make_smooth_env(ba100, 3, magnitude=0.01, seed=0)
        np.testing.assert_array_equal(small.f, plain.f)
        big = make_smooth_env(ba100, 20, magnitude=50.0, seed=0, clip=True)
        assert np.max(np.abs(big.f)) == pytest.approx(1.0)

    def test_bad_k(self, ba100):
        with pytest.raises(ValueError):
            make_smooth_env(ba100, 0)
        with pytest.raises(ValueError):
            make_smooth_env(ba100.truncate(10), 11)

    def test_from_rewards(self, ba100):
        f = np.linspace(-1, 1, 100)
        env = env_from_rewards(ba100, f)
        np.testing.assert_array_equal(env.f, f)
        np.testing.assert_allclose(ba100.eigenvectors @ env.alpha_true, f, atol=1e-10)
        with pytest.raises(ValueError):
            env_from_rewards(ba100, f[:50])


class TestPull:
    def test_noise_free(self, ba100):
        env = make_smooth_env(ba100, 10, seed=0, R=0.0)
        assert env.pull(7) == env.f[7]

    def test_mean_clt(self, ba100):
        R = 0.05
        env = make_smooth_env(ba100, 10, seed=0, R=R)
        n = 100_000
        mean = np.mean([env.pull(3) for _ in range(n)])
        assert abs(mean - env.f[3]) <= 3 * (R / math.sqrt(3)) / math.sqrt(n)

    def test_same_seed_same_noise(self, ba100):
        a = make_smooth_env(ba100, 10, seed=5)
        b = make_smooth_env(ba100, 10, seed=5)
        assert [a.pull(0) for _ in range(20)] == [b.pull(0) for _ in range(20)]

    def test_noise_bounded(self, ba100):
        env = make_smooth_env(ba100, 10, seed=0, R=0.2)
        noise = np.array([env.pull(1) for _ in range(2000)]) - env.f[1]
        assert noise.min() >= -0.2 and noise.max() <= 0.2


class TestRun:
    def test_greedy_first_round_regret(self):
        basis = SpectralBasis(np.zeros(2), np.eye(2), 1.0, 2)
        env = SmoothRewardEnv(basis, np.array([0.0, 1.0]), R=0.0)
        algo = make_algorithm(basis, AlgoConfig(algorithm="linucb", reg_lambda=1.0, scale=0.0))
        rec = run(env, algo, 3)
        assert rec.arm[0] == 0 and rec.inst_regret[0] == 1.0

    def test_regret_nonnegative_nondecreasing(self, ba100):
        for name in ("spectral_ucb", "spectral_ts", "linear_ts", "spectral_eliminator"):
            rec = compare(ba100, [_cfg(name)], EnvSpec(k_nonzero=10), [0])[0]
            assert np.all(rec.inst_regret >= 0)
            assert np.all(np.diff(rec.cum_regret) >= 0)

    def test_doubling_T(self, ba100):
        for seed in range(3):
            short = compare(ba100, [_cfg(T=40)], EnvSpec(), [seed])[0]
            long = compare(ba100, [_cfg(T=80)], EnvSpec(), [seed])[0]
            assert long.final_regret >= short.final_regret
            np.testing.assert_array_equal(long.arm[:40], short.arm)

    def test_oracle_estimate_zero_regret(self, ba100):
        env = make_smooth_env(ba100, 10, seed=2, R=0.0)
        algo = make_algorithm(ba100, _cfg(scale=0.0))
        st = algo.state
        st.alpha_hat[:] = env.alpha_true
        st.b[:] = st.penalty * env.alpha_true
        algo._means[:] = ba100.features @ env.alpha_true
        rec = run(env, algo, 300)
        assert rec.final_regret == pytest.approx(0.0, abs=1e-9)

    def test_invariants_checked_every_round(self, ba100, monkeypatch):
        algo = make_algorithm(ba100, _cfg(check_invariants=True))
        calls = []
        monkeypatch.setattr(algo, "check_invariants", lambda: calls.append(1))
        run(make_smooth_env(ba100, 5), algo, 12, check_invariants=True)
        assert len(calls) == 12

    def test_run_eliminator(self, ba100):
        cfg = _cfg("spectral_eliminator", T=31)
        rec = run_eliminator(ba100, cfg, make_smooth_env(ba100, 5))
        assert len(rec.arm) == 31
        with pytest.raises(ValueError):
            run_eliminator(ba100, _cfg(), make_smooth_env(ba100, 5))

    def test_csv(self, ba100, tmp_path):
        rec = compare(ba100, [_cfg(T=5)], EnvSpec(), [0])[0]
        text = rec.to_csv()
        lines = text.splitlines()
        assert lines[0] == RUN_HEADER and len(lines) == 6
        assert lines[1].split(",")[0] == "1"
        write_run_csv(rec, tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == text
        summary = summary_to_csv([rec], with_time=False).splitlines()
        assert summary[0] == SUMMARY_HEADER
        assert summary[1] == f"spectral_ucb,0,{rec.final_regret!r},0"


class TestBatch:
    def test_common_random_numbers(self, ba100):
        recs = compare(ba100, [_cfg("spectral_ucb"), _cfg("linucb")], EnvSpec(), [3])
        envs = [EnvSpec().build(ba100, 3) for _ in range(2)]
        np.testing.assert_array_equal(envs[0].f, envs[1].f)
        assert recs[0].metadata["run_seed"] == recs[1].metadata["run_seed"] == 3

    def test_seed_derivation(self):
        assert env_seed(0) != algo_seed(0)
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert len({env_seed(s) for s in range(100)}) == 100

    def test_parallel_matches_serial(self, ba100):
        cells = [Cell(_cfg(name), s, i) for i, (name, s) in
                 enumerate([("spectral_ucb", 0), ("spectral_ts", 1), ("linucb", 2)])]
        serial = execute(ba100, EnvSpec(), cells, jobs=1)
        parallel = execute(ba100, EnvSpec(), cells, jobs=2)
        assert [r.to_csv() for r in serial] == [r.to_csv() for r in parallel]


class TestSweep:
    def test_single_cell_equals_batch(self, ba100):
        rows, best = sweep(ba100, _cfg(), [0.01], [0.1], EnvSpec(), range(3))
        recs = compare(ba100, [_cfg()], EnvSpec(), range(3))
        assert best.mean_regret == pytest.approx(np.mean([r.final_regret for r in recs]))
        assert rows[0].n_runs == 3

    def test_best_is_argmin(self, ba100):
        rows, best = sweep(ba100, _cfg(), [0.1, 1.0], [0.1, 1.0], EnvSpec(), range(3))
        assert all(best.mean_regret <= r.mean_regret for r in rows)
        text = sweep_to_csv(rows).splitlines()
        assert text[0] == SWEEP_HEADER and len(text) == 5

    def test_ts_best_cell_near_tuned(self):
        # the tuned BA value is (λ=0.001, v=0.1); one grid step of slack
        b = spectral_basis(generate("ba", 500, seed=0), 0.001)
        lambdas, scales = [0.001, 0.01, 0.1, 1.0], [0.01, 0.1, 1.0]
        cfg = AlgoConfig(algorithm="spectral_ts", scale=0.1, T=100)
        _, best = sweep(b, cfg, lambdas, scales, EnvSpec(k_nonzero=20), range(5))
        assert abs(lambdas.index(best.reg_lambda) - 0) <= 1
        assert abs(scales.index(best.scale) - 1) <= 1
