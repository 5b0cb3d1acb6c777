"""Post-double-selection lasso estimate of a scalar treatment effect."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ClusteredDataset
from .errors import DegenerateTreatmentError, InputError
from .lasso import (
    DEFAULT_PENALTY_C,
    LassoConfig,
    LassoFit,
    compute_penalty,
    lasso_fit_gram,
    restricted_lstsq,
)


class SelectionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PdsConfig:
    """Settings for :func:`fit_pds`.

    ``residuals="lasso"`` builds the variance residuals from the first-stage
    lasso coefficients; ``"post"`` uses the OLS refits instead.
    """

    c: float = DEFAULT_PENALTY_C
    tol: float = 1e-8
    max_sweeps: int = 10_000
    standardize: bool = True
    support_eps: float = 1e-10
    residuals: str = "lasso"

    def __post_init__(self):
        if self.residuals not in ("lasso", "post"):
            raise InputError(f"residuals must be 'lasso' or 'post', got {self.residuals!r}")

    def lasso_config(self, lam: float) -> LassoConfig:
        return LassoConfig(
            lam=lam,
            tol=self.tol,
            max_sweeps=self.max_sweeps,
            standardize=self.standardize,
            support_eps=self.support_eps,
        )


@dataclass(frozen=True)
class PdsResult:
    alpha_tilde: float
    beta_tilde: np.ndarray
    support_union: np.ndarray
    v_hat: np.ndarray
    eps_hat: np.ndarray
    stage1_fits: tuple[LassoFit, LassoFit]
    lam: float
    rank_deficient: bool = False
    notes: tuple[str, ...] = field(default=())

    @property
    def alpha_hat(self) -> float:
        return float(self.stage1_fits[0].coef[0])

    @property
    def support_outcome(self) -> np.ndarray:
        """Covariates selected by the outcome lasso (the treatment coefficient excluded)."""
        s = self.stage1_fits[0].support
        return s[s > 0] - 1

    @property
    def support_treatment(self) -> np.ndarray:
        return self.stage1_fits[1].support

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.stage1_fits)

    @property
    def clean(self) -> bool:
        """No solver or selection warnings were raised."""
        return self.converged and not self.rank_deficient and not self.notes


def _fit_arrays(y, d, x, n1, n2, cfg: PdsConfig) -> PdsResult:
    n, p = x.shape
    if p < 1:
        raise InputError("post-double-selection needs at least one covariate")
    lam = compute_penalty(n1, n2, p, cfg.c)
    lcfg = cfg.lasso_config(lam)

    w = np.column_stack([d, x])
    gram = w.T @ w
    wy = w.T @ y
    fit_y = lasso_fit_gram(gram, wy, n, lcfg)
    fit_d = lasso_fit_gram(gram[1:, 1:], gram[1:, 0], n, lcfg)

    s1 = fit_y.support[fit_y.support > 0] - 1
    union = np.union1d(s1, fit_d.support).astype(np.int64)
    notes = []
    if n <= len(union) + 1:
        notes.append(f"{n} observations for {len(union) + 1} second-stage regressors")
        warnings.warn(notes[-1], SelectionWarning, stacklevel=3)

    coef, rank = restricted_lstsq(y, w, np.r_[0, union + 1])
    rank_deficient = rank < len(union) + 1
    if rank_deficient:
        warnings.warn(
            "second stage is rank deficient; using the minimum-norm solution",
            SelectionWarning,
            stacklevel=3,
        )
    alpha_tilde = float(coef[0])
    beta_tilde = coef[1:]

    if cfg.residuals == "lasso":
        v_hat = d - x @ fit_d.coef
        eps_hat = y - w @ fit_y.coef
    else:
        gamma_post = restricted_lstsq(d, x, union)[0]
        v_hat = d - x @ gamma_post
        eps_hat = y - w @ coef
    if not v_hat @ v_hat > 1e-24 * max(d @ d, 1e-300):
        raise DegenerateTreatmentError(
            "treatment has no variation left after projecting out the selected controls"
        )
    return PdsResult(
        alpha_tilde=alpha_tilde,
        beta_tilde=beta_tilde,
        support_union=union,
        v_hat=v_hat,
        eps_hat=eps_hat,
        stage1_fits=(fit_y, fit_d),
        lam=lam,
        rank_deficient=bool(rank_deficient),
        notes=tuple(notes),
    )


def fit_pds(ds: ClusteredDataset, cfg: PdsConfig | None = None) -> PdsResult:
    """Post-double-selection estimate on any cell layout, including empty cells.

    1. Lasso of ``y`` on ``(d, x)`` with the treatment coefficient penalised too.
    2. Lasso of ``d`` on ``x``.
    3. OLS of ``y`` on ``d`` and the union of the covariates selected in 1 and 2.
       The treatment always stays in this regression.

    Both lasso stages use the plug-in penalty computed from the cell-grid
    dimensions ``N``, ``M`` and the covariate count ``p``. The returned
    residuals are aligned with ``ds.flatten()``.
    """
    cfg = cfg or PdsConfig()
    flat = ds.flatten()
    return _fit_arrays(flat.y, flat.d, flat.x, ds.n1, ds.n2, cfg)


def fit_pds_grid(y, d, x, cfg: PdsConfig | None = None) -> PdsResult:
    """Same estimator for one observation per cell given as grids.

    ``y`` and ``d`` are ``N x M`` arrays and ``x`` is ``N x M x p``. Residuals
    come back as ``N x M`` arrays.
    """
    cfg = cfg or PdsConfig()
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 2 or d.shape != y.shape or x.shape[:2] != y.shape or x.ndim != 3:
        raise InputError("grid inputs must be N x M, N x M and N x M x p")
    n1, n2 = y.shape
    if not (np.isfinite(y).all() and np.isfinite(d).all() and np.isfinite(x).all()):
        raise InputError("grid inputs contain non-finite values")
    res = _fit_arrays(y.reshape(-1), d.reshape(-1), x.reshape(n1 * n2, -1), n1, n2, cfg)
    return PdsResult(
        alpha_tilde=res.alpha_tilde,
        beta_tilde=res.beta_tilde,
        support_union=res.support_union,
        v_hat=res.v_hat.reshape(n1, n2),
        eps_hat=res.eps_hat.reshape(n1, n2),
        stage1_fits=res.stage1_fits,
        lam=res.lam,
        rank_deficient=res.rank_deficient,
        notes=res.notes,
    )
