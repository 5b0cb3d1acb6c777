"""Lasso by cyclic coordinate descent, plug-in penalty, and post-lasso OLS.

The objective is the *sum* of squared residuals plus an l1 penalty,

    sum_r (y_r - w_r'b)**2 + lam * ||b||_1,

so the plug-in penalty from :func:`compute_penalty` grows with the number of
cells. Coordinate descent works on the Gram matrix ``W'W`` which makes a full
sweep O(p**2) regardless of the number of rows.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InputError, InvalidConstantError

DEFAULT_PENALTY_C = 1.1


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    tol: float = 1e-8
    max_sweeps: int = 10_000
    standardize: bool = True
    support_eps: float = 1e-10

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InputError(f"penalty must be finite and nonnegative, got {self.lam}")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.max_sweeps < 1:
            raise InputError("max_sweeps must be at least 1")
        if self.support_eps < 0:
            raise InputError("support_eps must be nonnegative")


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray
    support: np.ndarray
    sweeps_used: int
    converged: bool
    final_delta: float
    lam: float = field(default=0.0)


def compute_penalty(n1: int, n2: int, p: int, c: float = DEFAULT_PENALTY_C) -> float:
    """Plug-in penalty ``c * sqrt((N*M)**2 * log(a) / min(N, M))``, ``a = max(p, N*M)``."""
    if not c > 1:
        raise InvalidConstantError(f"penalty constant must exceed 1, got {c}")
    if n1 < 1 or n2 < 1 or p < 1:
        raise InputError("compute_penalty needs N, M, p >= 1")
    nm = n1 * n2
    a = max(p, nm)
    return c * math.sqrt(float(nm) ** 2 * math.log(a) / min(n1, n2))


def soft_threshold(z, t):
    """``sign(z) * max(|z| - t, 0)``; works elementwise on arrays."""
    if np.any(np.asarray(t) < 0):
        raise InputError("threshold must be nonnegative")
    out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@njit(cache=True)
def _cd_gram(gram, xty, half_lam, b, tol, max_sweeps):
    # b is updated in place; returns (sweeps, converged, last max |delta b|)
    p = xty.shape[0]
    delta = 0.0
    for sweep in range(max_sweeps):
        gb = gram @ b
        delta = 0.0
        for k in range(p):
            gkk = gram[k, k]
            if gkk <= 0.0:
                continue
            old = b[k]
            z = xty[k] - gb[k] + gkk * old
            if z > half_lam:
                new = (z - half_lam) / gkk
            elif z < -half_lam:
                new = (z + half_lam) / gkk
            else:
                new = 0.0
            if new != old:
                step = new - old
                for l in range(p):
                    gb[l] += step * gram[l, k]
                b[k] = new
                if abs(step) > delta:
                    delta = abs(step)
        if delta <= tol:
            return sweep + 1, True, delta
    return max_sweeps, False, delta


def _column_scale(gram_diag, n_rows):
    scale = np.sqrt(np.asarray(gram_diag, dtype=float) / n_rows)
    scale[scale == 0] = 1.0
    return scale


def lasso_fit_gram(gram, xty, n_rows: int, cfg: LassoConfig, *, warn=True) -> LassoFit:
    """Solve the lasso from sufficient statistics ``W'W`` and ``W'y``.

    With ``cfg.standardize`` the columns are rescaled to unit root-mean-square
    (using the Gram diagonal and ``n_rows``) before solving; the returned
    coefficients are always on the original scale.
    """
    gram = np.asarray(gram, dtype=float)
    xty = np.asarray(xty, dtype=float)
    p = len(xty)
    if p == 0:
        return LassoFit(np.zeros(0), np.zeros(0, dtype=np.int64), 0, True, 0.0, cfg.lam)
    if cfg.standardize:
        scale = _column_scale(np.diag(gram), n_rows)
        g = gram / np.outer(scale, scale)
        c = xty / scale
    else:
        scale = np.ones(p)
        g = np.ascontiguousarray(gram)
        c = xty.copy()
    b = np.zeros(p)
    sweeps, converged, delta = _cd_gram(g, c, 0.5 * cfg.lam, b, cfg.tol, cfg.max_sweeps)
    coef = b / scale
    if not converged and warn:
        warnings.warn(
            f"lasso did not converge in {sweeps} sweeps (max change {delta:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    support = np.flatnonzero(np.abs(coef) > cfg.support_eps)
    return LassoFit(coef, support, int(sweeps), bool(converged), float(delta), cfg.lam)


def lasso_fit(y, w, cfg: LassoConfig) -> LassoFit:
    """Minimise ``sum((y - w @ b)**2) + cfg.lam * sum(|b|)`` by cyclic coordinate descent.

    Parameters
    ----------
    y : (n,) array
    w : (n, k) array
    cfg : LassoConfig

    Returns
    -------
    LassoFit
        Non-convergence within ``cfg.max_sweeps`` is reported through
        ``converged=False`` and a :class:`ConvergenceWarning`, never raised.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] != len(y) or len(y) < 1:
        raise InputError(f"design has {w.shape[0]} rows but y has {len(y)}")
    if not (np.isfinite(w).all() and np.isfinite(y).all()):
        raise InputError("lasso input contains non-finite values")
    return lasso_fit_gram(w.T @ w, w.T @ y, len(y), cfg)


def lasso_objective(y, w, coef, lam):
    r = np.asarray(y) - np.asarray(w) @ coef
    return float(r @ r + lam * np.abs(coef).sum())


def restricted_lstsq(y, w, keep):
    """Least squares on the columns in ``keep``; other coefficients are zero.

    Returns ``(coef, rank)``. Rank-deficient problems get the minimum-norm
    solution.
    """
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    keep = np.asarray(sorted(set(int(k) for k in keep)), dtype=np.int64)
    coef = np.zeros(w.shape[1])
    if keep.size == 0:
        return coef, 0
    if keep.min() < 0 or keep.max() >= w.shape[1]:
        raise InputError("kept column index out of range")
    sol, _, rank, _ = np.linalg.lstsq(w[:, keep], y, rcond=None)
    coef[keep] = sol
    return coef, int(rank)


def post_lasso_ols(y, w, keep) -> np.ndarray:
    """OLS refit restricted to ``keep``; an empty ``keep`` gives the zero vector."""
    return restricted_lstsq(y, w, keep)[0]
