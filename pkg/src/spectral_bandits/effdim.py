"""Smoothness, spectral norms and the effective dimension of a regularised spectrum."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spectral_bandits.graph import build_laplacian

# relative slack before rounding a ratio up, so exact integers stay put
CEIL_SLACK = 1e-12


@dataclass(frozen=True)
class EffDimInput:
    """Regularised eigenvalues (ascending, first one equal to ``reg_lambda``),
    horizon and number of graph components."""

    reg_eigenvalues: np.ndarray
    horizon: int
    n_components: int
    reg_lambda: float

    def __post_init__(self):
        lam = np.asarray(self.reg_eigenvalues, dtype=np.float64).ravel()
        if len(lam) == 0:
            raise ValueError("need at least one eigenvalue")
        if not self.reg_lambda > 0:
            raise ValueError("reg_lambda must be positive")
        if np.any(np.diff(lam) < 0):
            raise ValueError("reg_eigenvalues must be ascending")
        if not math.isclose(lam[0], self.reg_lambda, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("first regularised eigenvalue must equal reg_lambda")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        object.__setattr__(self, "reg_eigenvalues", lam)

    @classmethod
    def from_basis(cls, basis, horizon):
        return cls(basis.reg_eigenvalues, int(horizon), int(basis.n_components),
                   float(basis.reg_lambda))

    @property
    def denominator(self):
        return math.log1p(self.horizon / (self.n_components * self.reg_lambda))


def waterfill_level(input):
    """Return ``(omega, level)``: active prefix length and common value of λ_i + t_i."""
    lam = input.reg_eigenvalues
    counts = np.arange(1, len(lam) + 1)
    levels = (np.cumsum(lam) + input.horizon) / counts
    gap = levels - lam
    ok = gap > 1e-12 * np.maximum(1.0, levels)
    # the condition is monotone in omega for sorted λ; take the last true index
    omega = int(np.flatnonzero(ok)[-1]) + 1 if ok.any() else 1
    return omega, float(levels[omega - 1])


def waterfill(input):
    """Allocation ``t`` maximising ``sum log(1 + t_i/λ_i)`` subject to ``sum t = T``."""
    omega, level = waterfill_level(input)
    t = np.zeros_like(input.reg_eigenvalues)
    t[:omega] = level - input.reg_eigenvalues[:omega]
    np.maximum(t, 0.0, out=t)
    # renormalise the round-off so the budget is spent exactly
    total = t.sum()
    if total > 0:
        t *= input.horizon / total
    return t


def waterfill_objective(t, reg_eigenvalues):
    return float(np.sum(np.log1p(np.asarray(t) / np.asarray(reg_eigenvalues))))


def _ceil(x):
    r = math.floor(x)
    return r if x - r <= CEIL_SLACK * max(1.0, abs(x)) else r + 1


def effective_dimension_ratio(input):
    t = waterfill(input)
    return waterfill_objective(t, input.reg_eigenvalues) / input.denominator


def effective_dimension(input):
    n = len(input.reg_eigenvalues)
    d = _ceil(effective_dimension_ratio(input))
    return int(min(max(d, 1), n))


def old_effective_dimension(input):
    """Largest ``k`` with ``(k - 1) λ_k <= T / log(1 + T/λ)``."""
    lam = input.reg_eigenvalues
    bound = input.horizon / math.log1p(input.horizon / input.reg_lambda)
    k = np.arange(1, len(lam) + 1)
    ok = (k - 1) * lam <= bound
    return int(np.flatnonzero(ok)[-1]) + 1


def smoothness(g, f):
    """Half the weighted sum of squared differences over edges: ``f^T L f``."""
    f = np.asarray(f, dtype=np.float64)
    diff = f[g.u] - f[g.v]
    return float(np.sum(g.w * diff * diff))


def smoothness_quadratic(g, f):
    f = np.asarray(f, dtype=np.float64)
    return float(f @ build_laplacian(g) @ f)


def lambda_norm(alpha, reg_eigenvalues):
    alpha = np.asarray(alpha, dtype=np.float64)
    return float(np.sqrt(np.sum(np.asarray(reg_eigenvalues) * alpha * alpha)))


def summarize(basis, horizon):
    """d, d_old, omega and the allocation for a basis at a given horizon."""
    inp = EffDimInput.from_basis(basis, horizon)
    omega, _ = waterfill_level(inp)
    return {
        "d": effective_dimension(inp),
        "d_old": old_effective_dimension(inp),
        "omega": omega,
        "t": waterfill(inp),
    }
