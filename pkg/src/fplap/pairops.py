"""Backend selection for the hot pair-table kernels.

The compiled extension is used when importable; set FPLAP_DISABLE_EXT=1 to
force the NumPy fallback (the parity test and the benchmark do this).
"""

from __future__ import annotations

import os

import numpy as np

from . import _pairops_np

_backend = _pairops_np
_BACKEND_NAME = "numpy"

if not os.environ.get("FPLAP_DISABLE_EXT"):
    try:
        from . import _pairops_cy as _backend  # type: ignore[no-redef]

        _BACKEND_NAME = "cython"
    except ImportError:
        pass


def backend_name() -> str:
    return _BACKEND_NAME


def pair_power_sum(W: np.ndarray, u: np.ndarray, p: float) -> float:
    """sum_{i<j} W_ij |u_i - u_j|^p."""
    return float(_backend.pair_power_sum(W, np.ascontiguousarray(u, dtype=float), float(p)))


def pair_grad(W: np.ndarray, u: np.ndarray, p: float) -> np.ndarray:
    """g_i = sum_j 2 W_ij (u_i - u_j)^{*(p-1)}."""
    return np.asarray(_backend.pair_grad(W, np.ascontiguousarray(u, dtype=float), float(p)))


def pair_pairing(W: np.ndarray, u: np.ndarray, v: np.ndarray, p: float) -> float:
    """sum_{i<j} 2 W_ij (u_i - u_j)^{*(p-1)} (v_i - v_j)."""
    return float(
        _backend.pair_pairing(
            W,
            np.ascontiguousarray(u, dtype=float),
            np.ascontiguousarray(v, dtype=float),
            float(p),
        )
    )
