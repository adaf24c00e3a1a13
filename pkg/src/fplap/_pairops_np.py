"""Pure-NumPy pair-table kernels (fallback backend).

Row-blocked over the dense symmetric pair table so peak memory stays at
O(block * n) regardless of node count. Semantics must match _pairops_cy
exactly; the parity test compares both backends.
"""

from __future__ import annotations

import numpy as np

BLOCK = 512


def _abs_pow(d: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return d * d
    a = np.abs(d)
    if p == 3.0:
        return a * a * a
    if p == 1.5:
        return a * np.sqrt(a)
    return a**p


def _signed_pow(d: np.ndarray, q: float) -> np.ndarray:
    if q == 1.0:
        return d
    if q == 2.0:
        return d * np.abs(d)
    if q == 0.5:
        return np.sign(d) * np.sqrt(np.abs(d))
    return np.sign(d) * np.abs(d) ** q


def pair_power_sum(W: np.ndarray, u: np.ndarray, p: float) -> float:
    """sum_{i<j} W_ij |u_i - u_j|^p."""
    n = u.shape[0]
    total = 0.0
    for lo in range(0, n, BLOCK):
        hi = min(lo + BLOCK, n)
        d = u[lo:hi, None] - u[None, :]
        total += float(np.sum(W[lo:hi] * _abs_pow(d, p)))
    return 0.5 * total


def pair_grad(W: np.ndarray, u: np.ndarray, p: float) -> np.ndarray:
    """g_i = sum_j 2 W_ij (u_i - u_j)^{*(p-1)}."""
    n = u.shape[0]
    g = np.empty(n)
    q = p - 1.0
    for lo in range(0, n, BLOCK):
        hi = min(lo + BLOCK, n)
        d = u[lo:hi, None] - u[None, :]
        g[lo:hi] = 2.0 * np.sum(W[lo:hi] * _signed_pow(d, q), axis=1)
    return g


def pair_pairing(W: np.ndarray, u: np.ndarray, v: np.ndarray, p: float) -> float:
    """sum_{i<j} 2 W_ij (u_i - u_j)^{*(p-1)} (v_i - v_j)."""
    n = u.shape[0]
    q = p - 1.0
    total = 0.0
    for lo in range(0, n, BLOCK):
        hi = min(lo + BLOCK, n)
        du = u[lo:hi, None] - u[None, :]
        dv = v[lo:hi, None] - v[None, :]
        total += float(np.sum(W[lo:hi] * _signed_pow(du, q) * dv))
    return total
