# %% [markdown]
# # Fitting one dataset
#
# A two-way clustered sample: rows indexed by `i` (say, importers) and
# columns by `j` (exporters). Every observation in row `i` shares a shock,
# and so does every observation in column `j`. We estimate the effect of a
# treatment `d` on `y` while choosing among many candidate controls.

# %%
import tempfile
from pathlib import Path

import numpy as np

from mwlasso import ColumnSchema, DgpConfig, fit_pds, from_csv, generate, to_csv
from mwlasso.variance import all_reports

# %% [markdown]
# Draw a 30 x 30 grid with 60 regressors (treatment plus 59 controls) and
# round-trip it through CSV, the format the command-line tool reads.

# %%
ds = generate(DgpConfig(n1=30, n2=30, dim=60, seed=2024))
path = Path(tempfile.mkdtemp()) / "panel.csv"
to_csv(ds, path)
ds = from_csv(path, ColumnSchema(y="y", d="d", cluster1="cluster1", cluster2="cluster2"))
print(f"{ds.n_obs} observations, {ds.n1} x {ds.n2} clusters, {ds.p} candidate controls")

# %% [markdown]
# Two lasso regressions pick the controls that predict the outcome and the
# treatment; the final OLS keeps the treatment plus the union of both picks.

# %%
res = fit_pds(ds)
print("penalty       ", round(res.lam, 2))
print("outcome picks ", [ds.x_names[k] for k in res.support_outcome])
print("treatment picks", [ds.x_names[k] for k in res.support_treatment])
print("alpha (true 0.5):", round(res.alpha_tilde, 4))

# %% [markdown]
# Standard errors under four assumptions about the dependence. Only the
# two-way version accounts for both shared shocks.

# %%
for flavor, rep in all_reports(ds, res.alpha_tilde, res.v_hat, res.eps_hat).items():
    lo, hi = rep.ci
    print(f"{flavor.value:>6}: se {rep.se:.4f}  95% CI [{lo:.3f}, {hi:.3f}]")

# %% [markdown]
# Same thing from the shell:
#
#     mwlasso fit --data panel.csv --y-col y --d-col d \
#         --cluster1-col cluster1 --cluster2-col cluster2

# %%
assert np.isfinite(res.alpha_tilde)
