"""Backend selection for the per-round kernels.

The compiled extension is used when it was built; otherwise (or when
``SPECTRAL_BANDITS_PURE=1`` is set) the numpy fallback is used. Both expose
``sherman_morrison``, ``chol_update``, ``quad_form``, ``downdate_sq_widths`` and ``rank_one_add``.
"""
import importlib
import os

from spectral_bandits import _kernels_py


def load_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or None=best)."""
    if name == "python":
        return _kernels_py
    try:
        return importlib.import_module("spectral_bandits._kernels")
    except ImportError:
        if name == "cython":
            raise
        return _kernels_py


def available_backends():
    names = ["python"]
    try:
        importlib.import_module("spectral_bandits._kernels")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


_active = load_backend("python" if os.environ.get("SPECTRAL_BANDITS_PURE") else None)

BACKEND = _active.BACKEND
sherman_morrison = _active.sherman_morrison
chol_update = _active.chol_update
quad_form = _active.quad_form
downdate_sq_widths = _active.downdate_sq_widths
rank_one_add = _active.rank_one_add
