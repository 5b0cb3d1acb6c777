"""Post-double-selection lasso with multi-way cluster-robust inference."""
from .data import CellBlock, ClusteredDataset, ColumnSchema, FlatView, flatten, from_csv, to_csv
from .errors import (
    DegenerateTreatmentError,
    EmptyDatasetError,
    InputError,
    InsufficientClustersError,
    InvalidConstantError,
    MwlassoError,
    ParseError,
    SchemaError,
)
from .lasso import (
    ConvergenceWarning,
    LassoConfig,
    LassoFit,
    compute_penalty,
    lasso_fit,
    post_lasso_ols,
    soft_threshold,
)
from .pds import PdsConfig, PdsResult, fit_pds, fit_pds_grid
from .simulation import DgpConfig, McSummary, generate, hajek_variance_check, run_mc, toeplitz_chol
from .variance import (
    Flavor,
    VarianceReport,
    all_reports,
    gamma_hat_one_way,
    gamma_hat_two_way,
    gamma_hat_zero_way,
    norm_ppf,
    q_hat,
    report,
)

__version__ = "0.1.0"
