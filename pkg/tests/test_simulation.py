import json
import math

import numpy as np
import pytest

from mwlasso import DgpConfig, Flavor, PdsConfig, fit_pds, generate, run_mc, toeplitz_chol
from mwlasso.errors import InputError
from mwlasso.simulation import (
    TRUE_ALPHA,
    draw_grids,
    hajek_variance_check,
    load_table1,
    parse_row_key,
    rep_seed,
    summarize,
    true_coefficients,
)
from mwlasso.variance import all_reports, norm_ppf


def test_toeplitz_identity():
    np.testing.assert_array_equal(toeplitz_chol(4, 0.0), np.eye(4))


def test_toeplitz_hand_cholesky():
    np.testing.assert_allclose(toeplitz_chol(2, 0.5), [[1, 0], [0.5, math.sqrt(0.75)]], atol=1e-15)


def test_toeplitz_reconstruction():
    chol = toeplitz_chol(101, 0.5)
    k = np.arange(101)
    sigma = 0.5 ** np.abs(k[:, None] - k[None, :])
    np.testing.assert_allclose(chol @ chol.T, sigma, atol=1e-12)
    assert np.all(np.triu(chol, 1) == 0)


def test_toeplitz_rejects_bad_rho():
    with pytest.raises(InputError):
        toeplitz_chol(3, 1.0)


def test_config_validation():
    with pytest.raises(InputError):
        DgpConfig(10, 10, 5, omega_x=(0.7, 0.7))
    with pytest.raises(InputError):
        DgpConfig(10, 10, 5, omega_e=(-0.1, 0.2))
    with pytest.raises(InputError):
        DgpConfig(0, 10, 5)
    with pytest.raises(InputError):
        DgpConfig(10, 10, 5, seed=2**64)


def test_true_coefficients():
    np.testing.assert_array_equal(true_coefficients(3), [0.5, 0.25, 0.125])
    assert TRUE_ALPHA == true_coefficients(1)[0]


def test_generate_is_reproducible():
    cfg = DgpConfig(7, 9, 6, seed=42)
    a, b = generate(cfg), generate(cfg)
    fa, fb = a.flatten(), b.flatten()
    for u, v in zip(fa, fb):
        assert np.array_equal(u, v)
    c = generate(DgpConfig(7, 9, 6, seed=43)).flatten()
    assert not np.array_equal(fa.y, c.y)


def test_generate_shape_and_model():
    cfg = DgpConfig(5, 6, 4, seed=1)
    y, d, x, eps = draw_grids(cfg)
    assert y.shape == (5, 6) and d.shape == (5, 6) and x.shape == (5, 6, 3)
    regs = np.concatenate([d[..., None], x], axis=2)
    np.testing.assert_allclose(y, regs @ true_coefficients(4) + eps, atol=1e-14)
    ds = generate(cfg)
    assert ds.p == 3 and ds.is_balanced_singleton()


def test_normals_have_standard_moments():
    # idiosyncratic-only errors are pure standard normal draws
    _, _, _, eps = draw_grids(DgpConfig(200, 200, 1, omega_e=(0, 0), seed=5))
    assert abs(eps.mean()) < 4 / 200
    assert abs(eps.var() - 1) < 4 * math.sqrt(2) / 200


def test_no_clustering_gives_uncorrelated_rows():
    _, d, _, _ = draw_grids(DgpConfig(50, 50, 3, omega_x=(0, 0), omega_e=(0, 0), seed=9))
    r = np.corrcoef(d[:, :-1].reshape(-1), d[:, 1:].reshape(-1))[0, 1]
    assert abs(r) < 0.05


def test_full_row_weight_makes_rows_constant():
    _, d, x, _ = draw_grids(DgpConfig(6, 5, 3, omega_x=(1, 0), seed=2))
    assert np.all(d == d[:, :1])
    assert np.all(x == x[:, :1, :])


def test_pooled_adjacent_correlation():
    _, d, x, _ = draw_grids(DgpConfig(100, 100, 6, seed=11))
    regs = np.concatenate([d[..., None], x], axis=2).reshape(-1, 6)
    corr = np.mean([np.corrcoef(regs[:, k], regs[:, k + 1])[0, 1] for k in range(5)])
    assert abs(corr - 0.5) <= 0.03


def test_combined_shock_variance():
    # (1 - w1 - w2)^2 + w1^2 + w2^2 = 0.375 at the default weights
    _, d, _, eps = draw_grids(DgpConfig(120, 120, 2, seed=4))
    assert d.var() == pytest.approx(0.375, abs=0.04)
    assert eps.var() == pytest.approx(0.375, abs=0.04)


def test_rep_seed_is_deterministic_and_distinct():
    assert rep_seed(0, 3) == rep_seed(0, 3)
    seeds = {rep_seed(0, r) for r in range(500)} | {rep_seed(1, r) for r in range(500)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2**64 for s in seeds)


def test_run_mc_single_rep():
    cfg = DgpConfig(10, 10, 8, seed=3)
    s = run_mc(cfg, 1)
    assert s.sd == 0.0
    assert s.rmse == pytest.approx(abs(s.bias), abs=1e-15)
    assert all(v in (0.0, 1.0) for v in s.coverage.values())


def test_rmse_identity():
    s = run_mc(DgpConfig(10, 10, 8, seed=5), 30)
    assert s.rmse**2 == pytest.approx(s.bias**2 + s.sd**2, rel=1e-12)
    assert s.reps == 30 and s.failed == 0


def test_thread_count_invariance():
    cfg = DgpConfig(10, 12, 8, seed=17)
    a = run_mc(cfg, 12, threads=1)
    b = run_mc(cfg, 12, threads=3)
    assert a.to_json() == b.to_json()
    np.testing.assert_array_equal(a.alphas, b.alphas)


def test_coverage_matches_interval_rule():
    cfg = DgpConfig(10, 10, 8, seed=23)
    s = run_mc(cfg, 15)
    z = norm_ppf(0.975)
    hits = {fl: 0 for fl in Flavor}
    for r in range(15):
        ds = generate(DgpConfig(10, 10, 8, seed=rep_seed(23, r)))
        res = fit_pds(ds)
        for fl, rep in all_reports(ds, res.alpha_tilde, res.v_hat, res.eps_hat).items():
            hits[fl] += rep.se is not None and abs(rep.alpha_tilde - TRUE_ALPHA) <= z * rep.se
    for fl in Flavor:
        assert s.coverage[fl] == hits[fl] / 15


def test_summarize_counts_failures():
    cfg = DgpConfig(4, 4, 2)
    rows = [(0.5, (True,) * 4, True, False), (math.nan, (False,) * 4, False, True),
            (0.7, (False, True, True, True), False, False)]
    s = summarize(cfg, rows, 0.05)
    assert s.failed == 1 and s.nonconverged == 1
    assert s.avg == pytest.approx(0.6)
    assert s.coverage[Flavor.TWO_WAY] == pytest.approx(1 / 3)
    assert s.coverage[Flavor.ONE_WAY_DIM1] == pytest.approx(2 / 3)


def test_summary_json_roundtrip():
    s = run_mc(DgpConfig(8, 8, 4, seed=1), 3)
    d = json.loads(s.to_json())
    assert d["kind"] == "mc_summary" and d["schema"] == "mwlasso.v1"
    assert set(d["coverage"]) == {"2way", "1way1", "1way2", "0way"}


def test_table1_resource():
    rows = load_table1()
    assert len(rows) == 15
    index = {(r["n1"], r["n2"], r["dim"]): r for r in rows}
    assert index[(40, 40, 100)]["cov_2way"] == pytest.approx(0.959)
    assert index[(20, 20, 100)]["sd"] == pytest.approx(0.076)
    assert parse_row_key("40x40x400") == (40, 40, 400)
    with pytest.raises(InputError):
        parse_row_key("40by40")


# Hajek check against closed forms. With weights (w, w) the cell shocks give
# Var = (1-2w)^2 + 2w^2 and same-row / same-column covariance w^2 (unit-variance
# marginals before the Toeplitz factor, whose diagonal is 1).
def population_hajek(n, var, cov):
    lhs = n * (var + (n - 1) * cov * 2) / n**2
    return lhs, 2 * cov


@pytest.mark.parametrize("f, var, cov", [
    ("d", 0.375, 0.0625),
    ("x1", 0.375, 0.0625),
    ("d_eps", 0.375**2, 0.0625**2),
])
def test_hajek_matches_closed_form(f, var, cov):
    n, reps = 10, 3000
    lhs, rhs = hajek_variance_check(DgpConfig(n, n, 4, seed=8), reps, f)
    exp_lhs, exp_rhs = population_hajek(n, var, cov)
    # lhs: sample variance of ~normal draws, relative SE sqrt(2/reps)
    assert lhs == pytest.approx(exp_lhs, rel=5 * math.sqrt(2 / reps) + 0.02)
    assert rhs == pytest.approx(exp_rhs, rel=0.1)


def test_hajek_without_clustering():
    n, reps = 20, 400
    lhs, rhs = hajek_variance_check(
        DgpConfig(n, n, 3, omega_x=(0, 0), omega_e=(0, 0), seed=1), reps, "d")
    se = 2 / math.sqrt(reps * n * n * (n - 1))
    assert abs(rhs) <= 4 * se
    # lhs = C * Var(cell mean) = C / NM = 1/n
    assert lhs == pytest.approx(1 / n, rel=5 * math.sqrt(2 / reps))


def test_hajek_gap_shrinks_with_size():
    gaps = []
    for n in (10, 40):
        lhs, rhs = population_hajek(n, 0.375, 0.0625)
        gaps.append(lhs - rhs)
    assert gaps[1] < gaps[0]
    got = [hajek_variance_check(DgpConfig(n, n, 2, seed=3), 800, "d") for n in (10, 40)]
    assert abs(got[1][0] - got[1][1]) < abs(got[0][0] - got[0][1]) + 0.02


def test_hajek_rejects_bad_input():
    with pytest.raises(InputError):
        hajek_variance_check(DgpConfig(5, 5, 2), 1)
    with pytest.raises(InputError):
        hajek_variance_check(DgpConfig(5, 5, 2), 10, "nope")
