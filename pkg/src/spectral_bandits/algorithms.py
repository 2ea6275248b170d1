"""SpectralUCB, SpectralTS, SpectralEliminator and their linear baselines.

All algorithms share :class:`EllipsoidState`, the regularised least-squares
state ``V_t = Λ + sum x x^T`` with a Sherman-Morrison-maintained inverse.
The linear variants run the same code with a flat penalty ``λ I``.
"""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from spectral_bandits import kernels as _default_kernels
from spectral_bandits.effdim import EffDimInput, effective_dimension

# algorithm id -> (family, spectral penalty?)
ALGORITHMS = {
    "spectral_ucb": ("ucb", True),
    "linucb": ("ucb", False),
    "spectral_ts": ("ts", True),
    "linear_ts": ("ts", False),
    "spectral_eliminator": ("eliminator", True),
    "linear_eliminator": ("eliminator", False),
}

TIE_RTOL = 1e-10
REFRESH_EVERY = 256


class InvariantViolation(AssertionError):
    pass


class StateError(RuntimeError):
    """Internal numerical state is unusable (e.g. V lost positive definiteness)."""


def tie_tolerance(best):
    return TIE_RTOL * max(1.0, abs(best))


def argmax_lowest(scores):
    """Lowest index among entries within ``tie_tolerance`` of the maximum."""
    best = float(np.max(scores))
    return int(np.flatnonzero(scores >= best - tie_tolerance(best))[0])


@dataclass
class AlgoConfig:
    algorithm: str = "spectral_ucb"
    reg_lambda: float = 0.01
    scale: float | None = None
    R: float = 0.05
    C: float | None = None
    delta: float = 0.05
    T: int = 100
    lazy_ucb: bool = False
    use_theoretical_constant: bool = False
    seed: int = 0
    check_invariants: bool = False
    refresh_every: int = REFRESH_EVERY

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; "
                             f"choose from {sorted(ALGORITHMS)}")
        if not self.reg_lambda > 0:
            raise ValueError("reg_lambda must be > 0")
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.C is not None and self.C < 0:
            raise ValueError("C must be >= 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.scale is None and not self.use_theoretical_constant:
            raise ValueError("scale is required unless use_theoretical_constant is set")
        if self.scale is not None and self.scale < 0:
            raise ValueError("scale must be >= 0")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")

    @property
    def family(self):
        return ALGORITHMS[self.algorithm][0]

    @property
    def spectral(self):
        return ALGORITHMS[self.algorithm][1]

    def to_dict(self):
        return asdict(self)


def ucb_constant(R, C, delta, T, K, reg_lambda, d):
    return R * math.sqrt(2 * d * math.log1p(T / (K * reg_lambda))
                         + 8 * math.log(1 / delta)) + C


def ts_constant(R, C, delta, T, K, reg_lambda, d):
    return R * math.sqrt(3 * d * math.log(1 / delta + T / (delta * reg_lambda * K))) + C


def eliminator_beta(R, C, delta, T, n_arms):
    return R * math.sqrt(math.log(2 * n_arms * (1 + math.log2(T)) / delta)) + C


def phase_starts(T):
    """Phase start rounds ``1, 2, 4, ...`` not exceeding ``T``."""
    return [2 ** j for j in range(int(math.floor(math.log2(T))) + 1)]


class EllipsoidState:
    """``V = Λ + sum_s x_s x_s^T`` with inverse, reward accumulator and estimate.

    ``update`` costs O(L^2): the inverse follows a Sherman-Morrison step and
    is recomputed from ``V`` every ``refresh_every`` updates to bound drift.
    ``logdet`` tracks ``log(det V / det Λ)`` incrementally.
    """

    def __init__(self, penalty, *, track_cholesky=False, refresh_every=REFRESH_EVERY,
                 kernels=None):
        penalty = np.asarray(penalty, dtype=np.float64)
        if np.any(penalty <= 0):
            raise ValueError("penalty must be strictly positive")
        self.kernels = kernels or _default_kernels
        self.penalty = penalty
        self.dim = len(penalty)
        self.V = np.diag(penalty)
        self.V_inv = np.diag(1.0 / penalty)
        self.b = np.zeros(self.dim)
        self.alpha_hat = np.zeros(self.dim)
        self.t = 0
        self.logdet = 0.0
        self.refresh_every = refresh_every
        self.track_cholesky = track_cholesky
        self.chol_upper = np.diag(np.sqrt(penalty)) if track_cholesky else None
        self._u = np.empty(self.dim)
        self._since_refresh = 0
        self.n_refreshes = 0

    def width(self, x):
        return math.sqrt(max(self.kernels.quad_form(self.V_inv, np.ascontiguousarray(x)), 0.0))

    def sq_widths(self, arms):
        return np.maximum(np.einsum("ij,ij->i", arms @ self.V_inv, arms), 0.0)

    def update(self, x, r):
        """Add ``(x, r)``.

        Returns ``(u, s, residual, refreshed)`` where ``u = V_t^{-1} x``,
        ``s = x^T V_t^{-1} x`` and ``residual = r - x^T α̂_t``, all taken
        before the update. Since ``V_{t+1}^{-1} x = u / (1 + s)`` the estimate
        moves by ``u residual / (1 + s)``; it is recomputed as ``V^{-1} b``
        whenever the inverse is refreshed.
        """
        x = np.ascontiguousarray(x, dtype=np.float64)
        residual = r - float(x @ self.alpha_hat)
        s = self.kernels.sherman_morrison(self.V_inv, x, self._u)
        self.kernels.rank_one_add(self.V, x, 1.0)
        self.b += r * x
        self.alpha_hat += self._u * (residual / (1.0 + s))
        self.logdet += math.log1p(s)
        if self.track_cholesky:
            self.kernels.chol_update(self.chol_upper, x.copy())
        self.t += 1
        self._since_refresh += 1
        refreshed = False
        if self._since_refresh >= self.refresh_every:
            self.refresh()
            refreshed = True
        return self._u.copy(), s, residual, refreshed

    def refresh(self):
        """Recompute the inverse (and Cholesky factor) directly from ``V``."""
        try:
            factor = scipy.linalg.cho_factor(self.V, lower=False, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise StateError(f"V ({self.dim}x{self.dim}) is not positive definite") from exc
        inv = scipy.linalg.cho_solve(factor, np.eye(self.dim), check_finite=False)
        self.V_inv[...] = 0.5 * (inv + inv.T)
        if self.track_cholesky:
            self.chol_upper[...] = np.triu(factor[0])
        np.dot(self.V_inv, self.b, out=self.alpha_hat)
        self._since_refresh = 0
        self.n_refreshes += 1

    def cholesky_upper(self):
        if self.track_cholesky:
            return self.chol_upper
        try:
            return scipy.linalg.cholesky(self.V, lower=False, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise StateError(f"Cholesky of V ({self.dim}x{self.dim}) failed") from exc

    def inverse_drift(self):
        return float(np.max(np.abs(self.V @ self.V_inv - np.eye(self.dim))))

    def copy(self):
        other = EllipsoidState.__new__(EllipsoidState)
        other.__dict__.update(self.__dict__)
        for name in ("V", "V_inv", "b", "alpha_hat", "_u"):
            setattr(other, name, getattr(self, name).copy())
        if self.chol_upper is not None:
            other.chol_upper = self.chol_upper.copy()
        return other


def ucb_scores(state, arms, c):
    """Exhaustive UCB index ``x^T α̂ + c ||x||_{V^{-1}}`` for every arm."""
    return arms @ state.alpha_hat + c * np.sqrt(state.sq_widths(arms))


def select_arm_ucb(state, arms, c):
    return argmax_lowest(ucb_scores(state, arms, c))


def sample_ts_coefficients(state, v, rng, size=None):
    """Draw from ``N(α̂, v^2 V^{-1})`` as ``α̂ + v S z`` with ``S = U^{-1}``, ``V = U^T U``."""
    upper = state.cholesky_upper()
    if size is None:
        z = rng.standard_normal(state.dim)
        return state.alpha_hat + v * scipy.linalg.solve_triangular(upper, z, lower=False)
    z = rng.standard_normal((size, state.dim))
    y = scipy.linalg.solve_triangular(upper, z.T, lower=False).T
    return state.alpha_hat + v * y


def select_arm_ts(state, arms, v, rng):
    return argmax_lowest(arms @ sample_ts_coefficients(state, v, rng))


class BanditAlgorithm:
    """Common set-up: penalty, features, effective dimension and constants."""

    family = None

    def __init__(self, basis, config, kernels=None):
        if config.family != self.family:
            raise ValueError(f"{type(self).__name__} cannot run {config.algorithm!r}")
        self.config = config
        self.kernels = kernels or _default_kernels
        self.arms = np.ascontiguousarray(basis.features, dtype=np.float64)
        self.n_arms, self.dim = self.arms.shape
        lam = config.reg_lambda
        if config.spectral:
            self.penalty = np.asarray(basis.eigenvalues, dtype=np.float64) + lam
            self.n_components = int(basis.n_components)
        else:
            self.penalty = np.full(self.dim, lam)
            # a flat penalty is a Laplacian with all-zero spectrum
            self.n_components = self.dim
        if basis.truncated and config.C is None:
            warnings.warn("truncated basis with C unset: the norm bound C refers to "
                          "the truncated spectrum", stacklevel=3)
        self.eff_input = EffDimInput(self.penalty, config.T, self.n_components, lam)
        self.d = effective_dimension(self.eff_input)
        self.logdet_bound = self.d * math.log1p(config.T / (self.n_components * lam))
        self.rng = np.random.default_rng(config.seed)
        self.scale = self._confidence_scale()
        self.state = self._new_state()

    def _new_state(self):
        return EllipsoidState(self.penalty, refresh_every=self.config.refresh_every,
                              kernels=self.kernels)

    def _theoretical(self):
        raise NotImplementedError

    def _confidence_scale(self):
        if self.config.use_theoretical_constant:
            return self._theoretical()
        return float(self.config.scale)

    @property
    def _C(self):
        return 0.0 if self.config.C is None else float(self.config.C)

    def select(self):
        raise NotImplementedError

    def update(self, arm, reward):
        raise NotImplementedError

    def check_invariants(self):
        st = self.state
        slack = 1e-9 * max(1.0, self.logdet_bound)
        if st.logdet > self.logdet_bound + slack:
            raise InvariantViolation(
                f"log det ratio {st.logdet:.6g} exceeds d log(1+T/(K lambda)) "
                f"= {self.logdet_bound:.6g} at t={st.t}")
        drift = st.inverse_drift()
        if drift > 1e-8:
            raise InvariantViolation(f"inverse drift {drift:.3g} > 1e-8 at t={st.t}")


class SpectralUCB(BanditAlgorithm):
    """Optimistic arm choice ``argmax x^T α̂ + c ||x||_{V^{-1}}``.

    Non-lazy mode keeps every arm's estimate and squared width cached and
    updates them in O(N L) per round. Lazy mode keeps a max-heap of stale
    keys and refreshes arms only while a stale upper bound could still win;
    see :meth:`_select_lazy`.
    """

    family = "ucb"

    def __init__(self, basis, config, kernels=None):
        super().__init__(basis, config, kernels)
        self.lazy = config.lazy_ucb
        self._means = np.zeros(self.n_arms)
        self._sq = self.state.sq_widths(self.arms)
        self.n_refreshed = 0
        if self.lazy:
            c = self.scale
            widths = np.sqrt(self._sq)
            self._drift = 0.0
            self._w = widths.copy()
            self._heap = [(-(c * w), a) for a, w in enumerate(widths.tolist())]
            heapq.heapify(self._heap)

    def _theoretical(self):
        cfg = self.config
        return ucb_constant(cfg.R, self._C, cfg.delta, cfg.T, self.n_components,
                            cfg.reg_lambda, self.d)

    def scores(self):
        return self._means + self.scale * np.sqrt(self._sq)

    def select(self):
        if self.lazy:
            return self._select_lazy()
        return argmax_lowest(self.scores())

    def _select_lazy(self):
        # Stored key k_a = m_a + w_a (c - E_s) where (m_a, w_a) were exact at
        # round s and E is the running sum of ||α̂_{r+1} - α̂_r||_{V_{r+1}}.
        # Then UCB_a(t) <= k_a + w_a E_t <= k_a + W E_t with W = max stored width.
        c = self.scale
        st = self.state
        E = self._drift
        W = float(self._w.max())
        heap = self._heap
        refreshed = []
        best = -math.inf
        while heap:
            bound = -heap[0][0] + W * E
            if refreshed and bound < best - tie_tolerance(best):
                break
            _, a = heapq.heappop(heap)
            x = self.arms[a]
            m = float(x @ st.alpha_hat)
            w = math.sqrt(max(self.kernels.quad_form(st.V_inv, x), 0.0))
            u = m + c * w
            refreshed.append((a, m, w, u))
            if u > best:
                best = u
        self.n_refreshed += len(refreshed)
        tol = tie_tolerance(best)
        chosen = min(a for a, _, _, u in refreshed if u >= best - tol)
        for a, m, w, _ in refreshed:
            self._w[a] = w
            heapq.heappush(heap, (-(m + w * (c - E)), a))
        return chosen

    def update(self, arm, reward):
        st = self.state
        alpha_before = st.alpha_hat.copy() if self.lazy else None
        u, s, residual, refreshed = st.update(self.arms[arm], reward)
        if self.lazy:
            step = abs(residual) * math.sqrt(s / (1.0 + s))
            if refreshed:
                # re-factorisation nudges α̂; charge the nudge to the drift budget
                diff = st.alpha_hat - (alpha_before + u * (residual / (1.0 + s)))
                step += math.sqrt(max(float(diff @ st.V @ diff), 0.0))
            self._drift += step
        elif refreshed:
            self._sq = st.sq_widths(self.arms)
            np.dot(self.arms, st.alpha_hat, out=self._means)
        else:
            z = self.kernels.downdate_sq_widths(self.arms, u, s, self._sq)
            self._means += z * (residual / (1.0 + s))


class SpectralTS(BanditAlgorithm):
    """Thompson sampling from ``N(α̂, v^2 V^{-1})`` with a maintained Cholesky factor."""

    family = "ts"

    def _new_state(self):
        return EllipsoidState(self.penalty, track_cholesky=True,
                              refresh_every=self.config.refresh_every, kernels=self.kernels)

    def _theoretical(self):
        cfg = self.config
        return ts_constant(cfg.R, self._C, cfg.delta, cfg.T, self.n_components,
                           cfg.reg_lambda, self.d)

    def select(self):
        return select_arm_ts(self.state, self.arms, self.scale, self.rng)

    def update(self, arm, reward):
        self.state.update(self.arms[arm], reward)


class SpectralEliminator(BanditAlgorithm):
    """Phased elimination with phases starting at rounds 1, 2, 4, 8, ...

    Each phase restarts from ``V = Λ``, plays the surviving arm of largest
    width, and at the phase end drops arms whose optimistic value is below
    the best pessimistic value, using only that phase's samples.
    """

    family = "eliminator"

    def __init__(self, basis, config, kernels=None):
        super().__init__(basis, config, kernels)
        self.active = np.ones(self.n_arms, dtype=bool)
        self.round = 0
        self.phase = 0
        self.phase_start = 1
        self.phase_pulls = 0
        self.phase_log = []
        self.eliminated_at = {}
        self._start_phase()

    def _theoretical(self):
        cfg = self.config
        return eliminator_beta(cfg.R, self._C, cfg.delta, cfg.T, self.n_arms)

    def _start_phase(self):
        self.phase += 1
        self.phase_start = 2 ** (self.phase - 1)
        self.phase_pulls = 0
        self.state = self._new_state()
        self._sq = self.state.sq_widths(self.arms)
        self.phase_log.append(self.phase_start)

    @property
    def phase_end(self):
        return 2 ** self.phase - 1

    def select(self):
        widths = np.where(self.active, np.sqrt(self._sq), -np.inf)
        return argmax_lowest(widths)

    def update(self, arm, reward):
        self.round += 1
        u, s, _, refreshed = self.state.update(self.arms[arm], reward)
        if refreshed:
            self._sq = self.state.sq_widths(self.arms)
        else:
            self.kernels.downdate_sq_widths(self.arms, u, s, self._sq)
        self.phase_pulls += 1
        if self.round == self.phase_end:
            if self.phase_pulls > 1:
                self._eliminate()
            self._start_phase()

    def _eliminate(self):
        idx = np.flatnonzero(self.active)
        means = self.arms[idx] @ self.state.alpha_hat
        widths = np.sqrt(self._sq[idx])
        beta = self.scale
        floor = float(np.max(means - beta * widths))
        keep = means + beta * widths >= floor
        for a in idx[~keep].tolist():
            self.eliminated_at[a] = self.round
        self.active[idx[~keep]] = False

    def check_invariants(self):
        drift = self.state.inverse_drift()
        if drift > 1e-8:
            raise InvariantViolation(f"inverse drift {drift:.3g} > 1e-8")


_FAMILY_CLASS = {"ucb": SpectralUCB, "ts": SpectralTS, "eliminator": SpectralEliminator}


def make_algorithm(basis, config, kernels=None):
    return _FAMILY_CLASS[config.family](basis.with_lambda(config.reg_lambda), config, kernels)
