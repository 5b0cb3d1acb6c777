"""Sandwich variance estimators for the post-double-selection estimate.

All estimators work from per-cell scores ``g[i, j] = v_ij' e_ij`` (inner
product of the treatment and outcome residual vectors of cell ``(i, j)``; an
empty cell contributes zero). Every divisor uses the cell-grid count ``N*M``,
not the number of observations.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTreatmentError, InputError, InsufficientClustersError


class Flavor(str, enum.Enum):
    TWO_WAY = "2way"
    ONE_WAY_DIM1 = "1way1"
    ONE_WAY_DIM2 = "1way2"
    ZERO_WAY = "0way"


# Acklam's rational approximation of the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_ppf(prob: float) -> float:
    """Standard normal quantile.

    Rational approximation (relative error ~1e-9) followed by one Halley
    refinement step against ``math.erfc``, which brings it to full double
    precision away from the extreme tails.
    """
    if not 0.0 < prob < 1.0:
        if prob == 0.0:
            return -math.inf
        if prob == 1.0:
            return math.inf
        raise ValueError(f"probability must lie in [0, 1], got {prob}")
    if prob < _P_LOW:
        q = math.sqrt(-2.0 * math.log(prob))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    elif prob <= 1.0 - _P_LOW:
        q = prob - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log1p(-prob))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - prob
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def _aligned(ds, *vectors):
    out = []
    for v in vectors:
        v = np.asarray(v, dtype=float)
        if v.shape != (ds.n_obs,):
            raise InputError(
                f"residual vector of shape {v.shape} does not match {ds.n_obs} observations"
            )
        out.append(v)
    return out


def cell_sums(ds, values) -> np.ndarray:
    """Sum a per-row vector within cells, returning an ``N x M`` grid."""
    flat = ds.flatten()
    (values,) = _aligned(ds, values)
    idx = flat.cell_i * ds.n2 + flat.cell_j
    return np.bincount(idx, weights=values, minlength=ds.n_cells).reshape(ds.n1, ds.n2)


def cell_scores(ds, v_hat, eps_hat) -> np.ndarray:
    v, e = _aligned(ds, v_hat, eps_hat)
    return cell_sums(ds, v * e)


def q_hat(ds, v_hat) -> float:
    """``(1/NM) * sum of squared treatment residuals``."""
    (v,) = _aligned(ds, v_hat)
    q = float(v @ v) / ds.n_cells
    if not q > 0:
        raise DegenerateTreatmentError("treatment residuals are identically zero")
    return q


def gamma_two_way_from_scores(g: np.ndarray, c_min: int) -> float:
    n1, n2 = g.shape
    row = g.sum(axis=1)
    col = g.sum(axis=0)
    return float(c_min * (row @ row + col @ col) / float(n1 * n2) ** 2)


def gamma_one_way_from_scores(g: np.ndarray, dim: int) -> float:
    n1, n2 = g.shape
    if dim == 1:
        row = g.sum(axis=1)
        return float(row @ row / (n1 * n2 * n2))
    if dim == 2:
        col = g.sum(axis=0)
        return float(col @ col / (n1 * n1 * n2))
    raise InputError(f"clustering dimension must be 1 or 2, got {dim}")


def gamma_hat_two_way(ds, v_hat, eps_hat) -> float:
    """Two-way cluster-robust meat.

    ``(C/(NM)^2) * [sum_i (sum_j g_ij)^2 + sum_j (sum_i g_ij)^2]`` with
    ``C = min(N, M)``. Both one-way sums keep their diagonal terms, so the
    value can exceed the sum of the genuine cross-cell covariances; no
    intersection term is subtracted.
    """
    return gamma_two_way_from_scores(cell_scores(ds, v_hat, eps_hat), ds.c_min)


def gamma_hat_one_way(ds, v_hat, eps_hat, dim: int = 1) -> float:
    """One-way cluster-robust meat, clustering on the first (``dim=1``) or second index."""
    return gamma_one_way_from_scores(cell_scores(ds, v_hat, eps_hat), dim)


def gamma_hat_zero_way(ds, v_hat, eps_hat) -> float:
    """Heteroskedasticity-robust meat ``(1/NM) * sum v^2 e^2`` over observations."""
    v, e = _aligned(ds, v_hat, eps_hat)
    ve = v * e
    return float(ve @ ve) / ds.n_cells


def gamma_hat(ds, v_hat, eps_hat, flavor) -> float:
    flavor = Flavor(flavor)
    if flavor is Flavor.TWO_WAY:
        return gamma_hat_two_way(ds, v_hat, eps_hat)
    if flavor is Flavor.ONE_WAY_DIM1:
        return gamma_hat_one_way(ds, v_hat, eps_hat, 1)
    if flavor is Flavor.ONE_WAY_DIM2:
        return gamma_hat_one_way(ds, v_hat, eps_hat, 2)
    return gamma_hat_zero_way(ds, v_hat, eps_hat)


@dataclass(frozen=True)
class VarianceReport:
    flavor: Flavor
    alpha_tilde: float
    q_hat: float
    gamma_hat: float
    sigma2_hat: float
    se: float | None
    ci: tuple[float, float] | None
    level: float

    @property
    def no_ci(self) -> bool:
        return self.ci is None

    def covers(self, value: float) -> bool:
        """Whether ``value`` lies in the closed interval (False without a CI)."""
        if self.ci is None:
            return False
        return abs(self.alpha_tilde - value) <= self.half_width

    @property
    def half_width(self) -> float:
        if self.se is None:
            return math.nan
        return norm_ppf(1.0 - self.level / 2.0) * self.se

    def to_dict(self) -> dict:
        return {
            "flavor": self.flavor.value,
            "q_hat": self.q_hat,
            "gamma_hat": self.gamma_hat,
            "sigma2_hat": self.sigma2_hat,
            "se": self.se,
            "ci": None if self.ci is None else [self.ci[0], self.ci[1]],
            "level": self.level,
            "no_ci": self.no_ci,
        }


def _rate(flavor: Flavor, n1: int, n2: int) -> int:
    if flavor is Flavor.TWO_WAY:
        return min(n1, n2)
    if flavor is Flavor.ONE_WAY_DIM1:
        return n1
    if flavor is Flavor.ONE_WAY_DIM2:
        return n2
    return n1 * n2


def report(alpha_tilde, flavor, q, gamma, ds, level=0.05) -> VarianceReport:
    """Standard error and normal confidence interval for one variance flavor.

    The sandwich ``sigma2 = gamma / q**2`` is divided by the flavor's
    effective sample size: ``min(N, M)`` for two-way, ``N`` or ``M`` for
    one-way and ``N*M`` for the heteroskedasticity-robust estimator. When
    ``sigma2 <= 0`` the report has ``se=None`` and ``ci=None``.
    """
    flavor = Flavor(flavor)
    if not 0.0 < level < 1.0:
        raise InputError(f"level must lie in (0, 1), got {level}")
    if not q > 0:
        raise DegenerateTreatmentError("Q-hat must be positive")
    if ds.c_min < 2:
        raise InsufficientClustersError(
            "inference needs at least two clusters in each dimension"
        )
    alpha_tilde = float(alpha_tilde)
    sigma2 = float(gamma) / float(q) ** 2
    if sigma2 > 0:
        se = math.sqrt(sigma2 / _rate(flavor, ds.n1, ds.n2))
        half = norm_ppf(1.0 - level / 2.0) * se
        ci = (alpha_tilde - half, alpha_tilde + half)
    else:
        se, ci = None, None
    return VarianceReport(flavor, alpha_tilde, float(q), float(gamma), sigma2, se, ci, float(level))


# Grid forms for one observation per cell: ``v`` and ``e`` are N x M arrays and
# the double sums are spelled out index by index.
def q_hat_grid(v) -> float:
    v = np.asarray(v, dtype=float)
    q = float(np.einsum("ij,ij->", v, v)) / v.size
    if not q > 0:
        raise DegenerateTreatmentError("treatment residuals are identically zero")
    return q


def gamma_two_way_grid(v, e) -> float:
    a = np.asarray(v, dtype=float) * np.asarray(e, dtype=float)
    n1, n2 = a.shape
    within_rows = np.einsum("ij,ik->", a, a)
    within_cols = np.einsum("ij,kj->", a, a)
    return float(min(n1, n2) / float(n1 * n2) ** 2 * (within_rows + within_cols))


def gamma_one_way_grid(v, e, dim=1) -> float:
    a = np.asarray(v, dtype=float) * np.asarray(e, dtype=float)
    n1, n2 = a.shape
    if dim == 1:
        return float(np.einsum("ij,ik->", a, a) / (n1 * n2 * n2))
    if dim == 2:
        return float(np.einsum("ij,kj->", a, a) / (n1 * n1 * n2))
    raise InputError(f"clustering dimension must be 1 or 2, got {dim}")


def gamma_zero_way_grid(v, e) -> float:
    a = np.asarray(v, dtype=float) * np.asarray(e, dtype=float)
    return float(np.einsum("ij,ij->", a, a) / a.size)


def all_reports(ds, alpha_tilde, v_hat, eps_hat, level=0.05, flavors=tuple(Flavor)):
    """Reports for several flavors sharing one Q-hat and one score grid."""
    q = q_hat(ds, v_hat)
    g = cell_scores(ds, v_hat, eps_hat)
    out = {}
    for fl in flavors:
        fl = Flavor(fl)
        if fl is Flavor.TWO_WAY:
            gam = gamma_two_way_from_scores(g, ds.c_min)
        elif fl is Flavor.ONE_WAY_DIM1:
            gam = gamma_one_way_from_scores(g, 1)
        elif fl is Flavor.ONE_WAY_DIM2:
            gam = gamma_one_way_from_scores(g, 2)
        else:
            gam = gamma_hat_zero_way(ds, v_hat, eps_hat)
        out[fl] = report(alpha_tilde, fl, q, gam, ds, level)
    return out
