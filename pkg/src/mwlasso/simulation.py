"""Two-way clustered data-generating process and Monte Carlo harness.

Random numbers
--------------
Every replication ``r`` draws from its own Philox (counter-based) stream whose
64-bit key comes from ``numpy.random.SeedSequence(seed, spawn_key=(r,))``.
Normals are produced by inverse CDF: 53 random bits ``k`` per draw map to
``u = (k + 0.5) / 2**53`` and then to ``ndtri(u)``. Results therefore do not
depend on how replications are spread over worker processes.

Draw order within one dataset: regressor shocks for rows ``(N, Dim)``, columns
``(M, Dim)`` and cells ``(N*M, Dim)``, then error shocks for rows, columns and
cells.
"""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .data import ClusteredDataset
from .errors import InputError, MwlassoError
from .pds import PdsConfig, fit_pds
from .variance import Flavor, all_reports

TRUE_ALPHA = 0.5
SCHEMA_VERSION = "mwlasso.v1"


@dataclass(frozen=True)
class DgpConfig:
    """Simulation design.

    ``dim`` counts the treatment plus covariates, so the datasets have
    ``dim - 1`` covariates. Defaults are the published design.
    """

    n1: int
    n2: int
    dim: int
    omega_x: tuple[float, float] = (0.25, 0.25)
    omega_e: tuple[float, float] = (0.25, 0.25)
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "omega_x", tuple(float(w) for w in self.omega_x))
        object.__setattr__(self, "omega_e", tuple(float(w) for w in self.omega_e))
        if self.n1 < 1 or self.n2 < 1:
            raise InputError("cluster counts must be positive")
        if self.dim < 1:
            raise InputError("dim must be at least 1")
        for name in ("omega_x", "omega_e"):
            w = getattr(self, name)
            if len(w) != 2 or min(w) < 0 or sum(w) > 1 + 1e-12:
                raise InputError(f"{name} must be two nonnegative weights summing to at most 1")
        if not -1 < self.rho < 1:
            raise InputError("rho must lie in (-1, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must be an unsigned 64-bit integer")


def true_coefficients(dim: int) -> np.ndarray:
    """``(0.5, 0.5**2, ..., 0.5**dim)``: treatment effect first, then covariates."""
    return 0.5 ** np.arange(1, dim + 1, dtype=float)


def toeplitz_chol(dim: int, rho: float) -> np.ndarray:
    """Lower Cholesky factor of the ``rho**|k-l|`` correlation matrix."""
    if dim < 1:
        raise InputError("dim must be at least 1")
    if not -1 < rho < 1:
        raise InputError("rho must lie in (-1, 1)")
    sigma = scipy.linalg.toeplitz(rho ** np.arange(dim, dtype=float))
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise MwlassoError(f"Toeplitz matrix not positive definite (dim={dim}, rho={rho})") from exc


def rep_seed(seed: int, rep: int) -> int:
    """Splittable 64-bit seed of replication ``rep``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep),))
    return int(ss.generate_state(1, np.uint64)[0])


def _normals(bitgen, shape) -> np.ndarray:
    n = int(np.prod(shape))
    bits = bitgen.random_raw(n) >> np.uint64(11)
    u = (bits.astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(shape)


def draw_grids(cfg: DgpConfig, chol=None):
    """Draw one sample as grids.

    Returns ``(y, d, x, eps)`` with shapes ``(N, M)``, ``(N, M)``,
    ``(N, M, dim-1)`` and ``(N, M)``.
    """
    n1, n2, dim = cfg.n1, cfg.n2, cfg.dim
    if chol is None:
        chol = toeplitz_chol(dim, cfg.rho)
    bitgen = np.random.Philox(np.random.SeedSequence(int(cfg.seed)))
    z_row = _normals(bitgen, (n1, dim))
    z_col = _normals(bitgen, (n2, dim))
    z_cell = _normals(bitgen, (n1, n2, dim))
    e_row = _normals(bitgen, (n1,))
    e_col = _normals(bitgen, (n2,))
    e_cell = _normals(bitgen, (n1, n2))

    w1, w2 = cfg.omega_x
    shocks = (1 - w1 - w2) * z_cell + w1 * z_row[:, None, :] + w2 * z_col[None, :, :]
    regs = shocks @ chol.T
    w1, w2 = cfg.omega_e
    eps = (1 - w1 - w2) * e_cell + w1 * e_row[:, None] + w2 * e_col[None, :]
    y = regs @ true_coefficients(dim) + eps
    return y, regs[:, :, 0], regs[:, :, 1:], eps


def generate(cfg: DgpConfig, chol=None) -> ClusteredDataset:
    """One simulated dataset with a single observation per cell."""
    y, d, x, _ = draw_grids(cfg, chol)
    n1, n2 = cfg.n1, cfg.n2
    ii, jj = np.divmod(np.arange(n1 * n2), n2)
    return ClusteredDataset.from_arrays(
        y.reshape(-1), d.reshape(-1), x.reshape(n1 * n2, -1), ii, jj, n1, n2
    )


# Monte Carlo ---------------------------------------------------------------

_FLAVORS = tuple(Flavor)


@dataclass(frozen=True)
class McSummary:
    """Summary of the treatment-effect estimates across replications.

    ``sd`` uses the divisor ``n`` so that ``rmse**2 == bias**2 + sd**2``.
    Coverage counts a failed replication, or one without a confidence
    interval, as not covering.
    """

    config: DgpConfig
    reps: int
    avg: float
    bias: float
    sd: float
    rmse: float
    coverage: dict
    nonconverged: int
    failed: int
    level: float = 0.05
    alphas: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["omega_x"] = list(cfg["omega_x"])
        cfg["omega_e"] = list(cfg["omega_e"])
        return {
            "schema": SCHEMA_VERSION,
            "kind": "mc_summary",
            "config": cfg,
            "reps": self.reps,
            "level": self.level,
            "avg": self.avg,
            "bias": self.bias,
            "sd": self.sd,
            "rmse": self.rmse,
            "coverage": {Flavor(k).value: v for k, v in self.coverage.items()},
            "nonconverged": self.nonconverged,
            "failed": self.failed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def table_row(self) -> str:
        c = self.config
        cov = self.coverage
        return (
            f"{c.n1:>4d} {c.n2:>4d} {c.dim:>5d}  "
            f"{self.avg:7.3f} {self.bias:7.3f} {self.sd:7.3f} {self.rmse:7.3f}  "
            f"{cov[Flavor.ZERO_WAY]:6.3f} {cov[Flavor.ONE_WAY_DIM1]:6.3f} "
            f"{cov[Flavor.TWO_WAY]:6.3f}"
        )


TABLE_HEADER = (
    "   N    M   Dim      Avg    Bias      SD    RMSE   0-Way  1-Way  2-Way"
)


def _one_rep(cfg: DgpConfig, rep: int, pds_cfg: PdsConfig, level: float, chol):
    """Returns ``(alpha_tilde, covered flags, clean, failed)`` for one replication."""
    rcfg = DgpConfig(cfg.n1, cfg.n2, cfg.dim, cfg.omega_x, cfg.omega_e, cfg.rho,
                     rep_seed(cfg.seed, rep))
    ds = generate(rcfg, chol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            res = fit_pds(ds, pds_cfg)
            reps = all_reports(ds, res.alpha_tilde, res.v_hat, res.eps_hat, level)
        except MwlassoError:
            return math.nan, (False,) * len(_FLAVORS), False, True
    covered = tuple(reps[fl].covers(TRUE_ALPHA) for fl in _FLAVORS)
    return res.alpha_tilde, covered, res.clean, False


def _run_chunk(args):
    cfg, start, stop, pds_cfg, level = args
    chol = toeplitz_chol(cfg.dim, cfg.rho)
    return [_one_rep(cfg, r, pds_cfg, level, chol) for r in range(start, stop)]


def default_threads() -> int:
    env = os.environ.get("MWLASSO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_mc(cfg: DgpConfig, reps: int, pds_cfg: PdsConfig | None = None,
           level: float = 0.05, threads: int = 1) -> McSummary:
    """Monte Carlo study of the estimator and its three kinds of intervals.

    Replications are independent and seeded through :func:`rep_seed`, so the
    result is the same for any ``threads``.
    """
    if reps < 1:
        raise InputError("reps must be at least 1")
    pds_cfg = pds_cfg or PdsConfig()
    threads = max(1, int(threads))
    if threads == 1:
        rows = _run_chunk((cfg, 0, reps, pds_cfg, level))
    else:
        n_chunks = min(reps, 4 * threads)
        bounds = np.linspace(0, reps, n_chunks + 1).astype(int)
        jobs = [(cfg, int(a), int(b), pds_cfg, level) for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = [row for chunk in pool.map(_run_chunk, jobs) for row in chunk]
    return summarize(cfg, rows, level)


def summarize(cfg: DgpConfig, rows, level: float) -> McSummary:
    alphas = np.array([r[0] for r in rows], dtype=float)
    ok = np.array([not r[3] for r in rows])
    covered = np.array([r[1] for r in rows], dtype=bool).reshape(len(rows), len(_FLAVORS))
    good = alphas[ok]
    if good.size:
        avg = float(good.mean())
        err = good - TRUE_ALPHA
        sd = float(np.sqrt(np.mean((good - avg) ** 2)))
        rmse = float(np.sqrt(np.mean(err**2)))
    else:
        avg = sd = rmse = math.nan
    coverage = {fl: float(covered[:, k].mean()) for k, fl in enumerate(_FLAVORS)}
    return McSummary(
        config=cfg,
        reps=len(rows),
        avg=avg,
        bias=avg - TRUE_ALPHA,
        sd=sd,
        rmse=rmse,
        coverage=coverage,
        nonconverged=int(sum(1 for r in rows if not r[2] and not r[3])),
        failed=int((~ok).sum()),
        level=level,
        alphas=alphas,
    )


# Published table -----------------------------------------------------------

def load_table1() -> list[dict]:
    """Published rows as dicts keyed like the CSV header."""
    text = resources.files("mwlasso").joinpath("data/table1.csv").read_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        row = {k: float(v) for k, v in rec.items()}
        for k in ("n1", "n2", "dim"):
            row[k] = int(row[k])
        out.append(row)
    return out


def parse_row_key(key: str) -> tuple[int, int, int]:
    """``"40x40x100"`` -> ``(40, 40, 100)``."""
    try:
        n1, n2, dim = (int(t) for t in key.lower().split("x"))
    except ValueError:
        raise InputError(f"row selector {key!r} is not of the form NxMxDim") from None
    return n1, n2, dim


def replicate_table1(reps: int = 2000, rows=None, seed: int = 0, pds_cfg=None,
                     level: float = 0.05, threads: int = 1) -> list[dict]:
    """Re-run published rows; each entry has ``summary`` and the ``published`` row."""
    table = load_table1()
    if rows is not None:
        wanted = [parse_row_key(r) if isinstance(r, str) else tuple(r) for r in rows]
        index = {(t["n1"], t["n2"], t["dim"]): t for t in table}
        missing = [w for w in wanted if w not in index]
        if missing:
            raise InputError(f"rows not in the published table: {missing}")
        table = [index[w] for w in wanted]
    out = []
    for row in table:
        cfg = DgpConfig(row["n1"], row["n2"], row["dim"], seed=seed)
        out.append({"summary": run_mc(cfg, reps, pds_cfg, level, threads), "published": row})
    return out


def table1_delta(summary: McSummary, published: dict) -> dict:
    cov = summary.coverage
    return {
        "avg": summary.avg - published["avg"],
        "bias": summary.bias - published["bias"],
        "sd": summary.sd - published["sd"],
        "rmse": summary.rmse - published["rmse"],
        "cov_0way": cov[Flavor.ZERO_WAY] - published["cov_0way"],
        "cov_1way": cov[Flavor.ONE_WAY_DIM1] - published["cov_1way"],
        "cov_2way": cov[Flavor.TWO_WAY] - published["cov_2way"],
    }


# Variance of cell means ------------------------------------------------------

HAJEK_STATISTICS = ("d", "x1", "y", "d_eps")


def _statistic(tag, y, d, x, eps):
    if tag == "d":
        return d
    if tag == "x1":
        if x.shape[2] < 1:
            raise InputError("statistic 'x1' needs dim >= 2")
        return x[:, :, 0]
    if tag == "y":
        return y
    if tag == "d_eps":
        return d * eps
    raise InputError(f"unknown statistic {tag!r}; choose from {HAJEK_STATISTICS}")


def hajek_variance_check(cfg: DgpConfig, outer_reps: int, f: str = "d"):
    """Compare the sampling variance of a scaled cell mean with its covariance form.

    ``lhs`` is the variance over ``outer_reps`` samples of
    ``sqrt(C) * (mean of f over cells - E f)``. ``rhs`` is
    ``mu_N * Cov(f_11, f_12) + mu_M * Cov(f_11, f_21)`` with both covariances
    estimated by pooling all same-row (resp. same-column) pairs of distinct
    cells over every sample. Every statistic in :data:`HAJEK_STATISTICS`
    has mean zero under this design.
    """
    if outer_reps < 2:
        raise InputError("outer_reps must be at least 2")
    n1, n2 = cfg.n1, cfg.n2
    c_min = min(n1, n2)
    chol = toeplitz_chol(cfg.dim, cfg.rho)
    scaled_means = np.empty(outer_reps)
    row_num = col_num = 0.0
    for r in range(outer_reps):
        rcfg = DgpConfig(n1, n2, cfg.dim, cfg.omega_x, cfg.omega_e, cfg.rho,
                         rep_seed(cfg.seed, r))
        a = _statistic(f, *draw_grids(rcfg, chol))
        scaled_means[r] = math.sqrt(c_min) * a.mean()
        sq = float((a * a).sum())
        rs = a.sum(axis=1)
        cs = a.sum(axis=0)
        row_num += float(rs @ rs) - sq
        col_num += float(cs @ cs) - sq
    lhs = float(np.var(scaled_means, ddof=1))
    cov_row = row_num / (outer_reps * n1 * n2 * (n2 - 1)) if n2 > 1 else 0.0
    cov_col = col_num / (outer_reps * n1 * n2 * (n1 - 1)) if n1 > 1 else 0.0
    rhs = (c_min / n1) * cov_row + (c_min / n2) * cov_col
    return lhs, float(rhs)
