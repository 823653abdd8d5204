"""Derivative-free 1-D minimizers shared by the conjugate, CGF and bound searches."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 0.618...


def golden_min(
    fun: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Minimize a unimodal ``fun`` on ``[lo, hi]`` by golden-section search.

    Returns ``(x, fun(x))`` for the best point evaluated, endpoints included,
    so the reported value is always an attained objective value.
    """
    a, b = float(lo), float(hi)
    f_lo, f_hi = fun(a), fun(b)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = fun(x1), fun(x2)
    best_x, best_f = (a, f_lo) if f_lo <= f_hi else (b, f_hi)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = fun(x2)
    for x, fx in ((x1, f1), (x2, f2)):
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def golden_min_batch(
    fun: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    n_iter: int = 120,
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise golden-section search; ``fun`` maps a vector of abscissae to values."""
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(n_iter):
        left = f1 <= f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        nx1 = np.where(left, b - INV_PHI * (b - a), x2)
        nx2 = np.where(left, x1, a + INV_PHI * (b - a))
        # one fresh evaluation per row, placed where the bracket moved
        fresh = fun(np.where(left, nx1, nx2))
        f1, f2 = np.where(left, fresh, f2), np.where(left, f1, fresh)
        x1, x2 = nx1, nx2
    take1 = f1 <= f2
    return np.where(take1, x1, x2), np.where(take1, f1, f2)


def expand_upper(
    fun: Callable[[float], float], lo: float, hi: float, limit: float = 1e12
) -> float:
    """Push ``hi`` outward until ``fun`` stops decreasing there (convex ``fun``)."""
    while hi < limit:
        mid = 0.5 * (lo + hi)
        if fun(hi) < fun(mid):
            hi = lo + 2.0 * (hi - lo)
        else:
            break
    return hi


def expand_lower(
    fun: Callable[[float], float], lo: float, hi: float, floor: float = -math.inf
) -> float:
    """Mirror of :func:`expand_upper`; never moves below ``floor``."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fun(lo) < fun(mid) and lo > floor:
            lo = max(hi - 2.0 * (hi - lo), floor)
        else:
            break
    return lo
