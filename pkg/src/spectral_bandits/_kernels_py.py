"""Pure-Python (numpy) implementations of the per-round linear-algebra kernels.

Every function here has a drop-in twin in ``_kernels.pyx``. Both operate in
place on C-contiguous float64 arrays.
"""
import numpy as np

BACKEND = "python"


def sherman_morrison(v_inv, x, u_out):
    """Apply ``V <- V + x x^T`` to the maintained inverse ``v_inv`` in place.

    Writes ``V^{-1} x`` (pre-update) into ``u_out`` and returns the pre-update
    quadratic form ``s = x^T V^{-1} x``.
    """
    np.dot(v_inv, x, out=u_out)
    s = float(x @ u_out)
    v_inv -= np.outer(u_out, u_out) / (1.0 + s)
    return s


def chol_update(upper, x):
    """Rank-one update of an upper Cholesky factor: ``U^T U + x x^T``.

    ``x`` is used as scratch and is overwritten.
    """
    n = x.shape[0]
    for k in range(n):
        ukk = upper[k, k]
        xk = x[k]
        r = np.hypot(ukk, xk)
        c = r / ukk
        s = xk / ukk
        upper[k, k] = r
        if k + 1 < n:
            row = upper[k, k + 1:]
            tail = x[k + 1:]
            row += s * tail
            row /= c
            tail *= c
            tail -= s * row
    return upper


def quad_form(a, x):
    """``x^T A x`` for symmetric ``A``."""
    return float(x @ (a @ x))


def downdate_sq_widths(arms, u, s, sq_widths):
    """Propagate a Sherman-Morrison step to cached squared widths.

    After ``V^{-1} <- V^{-1} - u u^T / (1 + s)`` every arm's squared width
    drops by ``(x_a . u)^2 / (1 + s)``. Returns ``arms @ u``.
    """
    z = arms @ u
    sq_widths -= z * z / (1.0 + s)
    np.maximum(sq_widths, 0.0, out=sq_widths)
    return z


def rank_one_add(a, x, alpha):
    """``A += alpha x x^T`` in place."""
    a += alpha * np.outer(x, x)
