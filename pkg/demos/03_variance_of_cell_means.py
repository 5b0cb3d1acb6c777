# %% [markdown]
# # Why the two-way rate is min(N, M)
#
# Average any statistic over the N x M grid. Its variance is driven not by
# the N*M cells but by pairs of cells that share a row or a column. Scaling
# by sqrt(min(N, M)) gives a variance that settles at
#
#     (min/N) Cov(f_11, f_12) + (min/M) Cov(f_11, f_21)
#
# and the gap to the exact value vanishes as the grid grows.

# %%
from mwlasso import DgpConfig, hajek_variance_check

# Under the default design, (1-w1-w2)^2 + w1^2 + w2^2 = 0.375 is the
# variance of each regressor and w^2 = 0.0625 the same-row covariance.
var, cov = 0.375, 0.0625

for n in (10, 20, 40):
    lhs, rhs = hajek_variance_check(DgpConfig(n, n, 2, seed=0), 1000, f="d")
    exact = (var + 2 * (n - 1) * cov) / n
    print(f"N=M={n:>2}: simulated {lhs:.4f}  exact {exact:.4f}  covariance form {rhs:.4f}")

# %% [markdown]
# With no shared shocks the covariance form collapses to zero and the
# ordinary sqrt(N*M) rate applies instead.

# %%
lhs, rhs = hajek_variance_check(DgpConfig(20, 20, 2, omega_x=(0, 0), omega_e=(0, 0)), 1000)
print(f"no clustering: simulated {lhs:.4f}  covariance form {rhs:.1e}")
