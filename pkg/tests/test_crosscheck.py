"""Cross-checks against independent implementations and numerics.

These complement the hand-rolled oracles: statsmodels re-derives the
clustered/robust covariances and quantile coefficients through entirely
different code paths, and a finite-difference Hessian of the full SAR
log-likelihood validates the analytic information matrix.
"""

import numpy as np
import pytest
import statsmodels.api as sm
from statsmodels.regression.quantile_regression import QuantReg

from placefx import naming
from placefx.econ import ClusterRobustOLS, SpatialLagML
from placefx.quantfit import fit_quantile
from placefx.simgen import DgpConfig, generate


def test_quantile_lp_matches_statsmodels_irls(rng):
    worst = 0.0
    for tau in (0.25, 0.5, 0.75):
        for _ in range(4):
            n = 150
            x = rng.standard_normal((n, 2))
            y = x @ np.array([1.0, -0.5]) + rng.standard_normal(n) * (
                1 + 0.3 * np.abs(x[:, 0])
            )
            mine = fit_quantile(y, x, tau).coefficients
            theirs = (
                QuantReg(y, sm.add_constant(x))
                .fit(q=tau, p_tol=1e-10, max_iter=5000)
                .params
            )
            worst = max(worst, np.abs(mine - theirs).max())
    assert worst < 1e-5


def test_cr1_matches_statsmodels_cluster_cov(rng):
    for _ in range(5):
        n = 80
        X = sm.add_constant(rng.standard_normal((n, 2)))
        y = rng.standard_normal(n)
        groups = rng.integers(0, 9, n)
        mine = ClusterRobustOLS().fit(X, y, clusters=groups)
        theirs = sm.OLS(y, X).fit(cov_type="cluster", cov_kwds={"groups": groups})
        assert np.abs(mine.vcov_ - theirs.cov_params()).max() < 1e-12


def test_hc1_matches_statsmodels(rng):
    n = 70
    X = sm.add_constant(rng.standard_normal((n, 3)))
    y = rng.standard_normal(n)
    mine = ClusterRobustOLS(se_type="hc1").fit(X, y)
    theirs = sm.OLS(y, X).fit(cov_type="HC1")
    assert np.abs(mine.vcov_ - theirs.cov_params()).max() < 1e-12


def test_sar_information_matrix_matches_numerical_hessian():
    """Analytic (expected-information) SEs sit close to the observed-Hessian
    SEs at the optimum; a missing information-matrix term would blow the
    rho and coefficient blocks apart."""
    cfg = DgpConfig(grid_rows=9, grid_cols=9, rho_true=0.4, treatment_share=0.3, seed=12)
    panel, W, _ = generate(cfg)
    auth = panel[panel.approach == naming.AUTHORITATIVE]
    y = auth["poverty_raw"].to_numpy()
    X = np.column_stack(
        [np.ones(len(y)), auth["redlined"].to_numpy(), auth[["cov1", "cov2"]].to_numpy()]
    )
    est = SpatialLagML().fit(X, y, weights=W)
    n, k = X.shape
    eig = W.eigenvalues()
    ylag = W.row_std @ y

    def loglik(params):
        beta, rho, sig2 = params[:k], params[k], params[k + 1]
        u = (y - rho * ylag) - X @ beta
        return (
            -n / 2 * np.log(2 * np.pi * sig2)
            + np.sum(np.log1p(-rho * eig))
            - (u @ u) / (2 * sig2)
        )

    theta = np.concatenate([est.coef_, [est.rho_, est.sig2_]])
    eps = 1e-5
    dim = k + 2
    hess = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(dim):
            ei = np.zeros(dim)
            ej = np.zeros(dim)
            ei[i] = eps
            ej[j] = eps
            hess[i, j] = (
                loglik(theta + ei + ej)
                - loglik(theta + ei - ej)
                - loglik(theta - ei + ej)
                + loglik(theta - ei - ej)
            ) / (4 * eps * eps)
    vcov_num = np.linalg.inv(-hess)
    se_num = np.sqrt(np.diag(vcov_num))
    assert est.se_ == pytest.approx(se_num[:k], rel=0.05)
    assert est.se_rho_ == pytest.approx(se_num[k], rel=0.05)
