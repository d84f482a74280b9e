"""Quantile regressions with check-loss pseudo-R2 and the R2 ladder.

Quantile fits solve the standard LP formulation

    min  tau * 1'u+ + (1 - tau) * 1'u-   s.t.  X b + u+ - u- = y

with the HiGHS dual-simplex solver, so solutions sit on vertices and can
be checked against a basis-enumeration oracle.  Goodness of fit is
1 - V_fit / V_intercept where V is the summed check loss, with the
intercept-only optimum computed exactly from order statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import linprog
from sklearn.base import BaseEstimator

from . import naming
from .econ import NonConvergence
from .validation import (
    add_intercept,
    check_consistent_rows,
    check_full_rank,
    check_matrix,
    check_vector,
)


class Unbounded(RuntimeError):
    """The quantile LP is unbounded (degenerate design)."""


def check_loss(residuals, tau: float) -> float:
    u = np.asarray(residuals, dtype=float)
    return float(np.sum(u * (tau - (u < 0))))


def intercept_only_loss(y, tau: float) -> float:
    """Exact min_c sum rho_tau(y - c); the optimum sits at an order statistic."""
    ys = np.sort(np.asarray(y, dtype=float))
    n = ys.size
    prefix = np.concatenate([[0.0], np.cumsum(ys)])
    total = prefix[-1]
    i = np.arange(n)
    below = ys[i] * (i + 1) - prefix[i + 1]  # sum of (c - y_j) for y_j <= c
    above = (total - prefix[i + 1]) - ys[i] * (n - i - 1)
    losses = (1.0 - tau) * below + tau * above
    return float(losses.min())


@dataclass
class QuantileFit:
    tau: float
    coefficients: np.ndarray
    names: tuple[str, ...]
    pseudo_r2: float
    check_loss: float
    n: int


class QuantileRegressionLP(BaseEstimator):
    """Linear quantile regression solved as an LP.

    An intercept is prepended by default so the intercept-only model is
    always nested and the pseudo-R2 stays in [0, 1].
    """

    def __init__(self, tau: float = 0.5, add_intercept: bool = True):
        self.tau = tau
        self.add_intercept = add_intercept

    def fit(self, X, y):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        X = check_matrix(X)
        y = check_vector(y)
        check_consistent_rows(X, y)
        if self.add_intercept:
            X = add_intercept(X)
        check_full_rank(X)
        n, k = X.shape

        c = np.concatenate([np.zeros(k), np.full(n, self.tau), np.full(n, 1.0 - self.tau)])
        eye = sparse.identity(n, format="csc")
        a_eq = sparse.hstack([sparse.csc_matrix(X), eye, -eye], format="csc")
        bounds = [(None, None)] * k + [(0.0, None)] * (2 * n)
        res = linprog(c, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs-ds")
        if res.status == 3:
            raise Unbounded(res.message)
        if not res.success:
            raise NonConvergence(f"quantile LP failed: {res.message}")

        self.coef_ = res.x[:k]
        self.resid_ = y - X @ self.coef_
        self.check_loss_ = check_loss(self.resid_, self.tau)
        base = intercept_only_loss(y, self.tau)
        # the intercept-only model is nested, so the exact ratio lives in
        # [0, 1]; snap float-noise-level deviations onto the endpoints
        snap = 1e-12 * max(1.0, base)
        if base <= 0.0 or self.check_loss_ <= snap:
            self.pseudo_r2_ = 1.0
        elif abs(self.check_loss_ - base) <= snap:
            self.pseudo_r2_ = 0.0
        else:
            self.pseudo_r2_ = float(np.clip(1.0 - self.check_loss_ / base, 0.0, 1.0))
        self.nobs_ = n
        return self

    def predict(self, X):
        X = check_matrix(X)
        if self.add_intercept:
            X = add_intercept(X)
        return X @ self.coef_


def fit_quantile(y, X, tau: float, names: Sequence[str] | None = None) -> QuantileFit:
    est = QuantileRegressionLP(tau=tau).fit(X, y)
    k = len(est.coef_)
    if names is None:
        names = ("const",) + tuple(f"x{j}" for j in range(k - 1))
    return QuantileFit(
        tau=tau,
        coefficients=est.coef_,
        names=tuple(names),
        pseudo_r2=est.pseudo_r2_,
        check_loss=est.check_loss_,
        n=est.nobs_,
    )


# ---------------------------------------------------------------------------
# panel-level comparisons


def panel_wide(panel: pd.DataFrame) -> pd.DataFrame:
    """Pivot the long panel to one row per cbg.

    Outcome columns become ``<approach>_<outcome>_z``; covariates and
    design columns are carried once per cbg.
    """
    keep = ["cbg_id", "redlined", "zip_code"]
    extra = [
        c
        for c in panel.columns
        if c
        not in keep
        + [
            "approach",
            "poverty_raw",
            "canopy_raw",
            "poverty_z",
            "canopy_z",
            "si_z",
            "weight_images",
            "holc_group",
        ]
    ]
    base = panel[panel["approach"] == naming.AUTHORITATIVE][keep + extra]
    wide = base.set_index("cbg_id")
    for approach in naming.APPROACHES:
        sub = panel[panel["approach"] == approach].set_index("cbg_id")
        for outcome in naming.OUTCOMES:
            wide[f"{approach}_{outcome}_z"] = sub[naming.outcome_column(outcome)]
    return wide.reset_index().sort_values("cbg_id").reset_index(drop=True)


def _adj_r2(y: np.ndarray, X: np.ndarray) -> float:
    n = len(y)
    design = add_intercept(X) if X.size else np.ones((n, 1))
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 0:
        return 1.0
    r2 = 1.0 - ss_res / ss_tot
    k = design.shape[1] - 1
    if n - k - 1 <= 0:
        return r2
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


R2_SPECS = (
    "mllm_only",
    "segmentation_only",
    "controls_only",
    "mllm_plus_segmentation",
    "mllm_plus_controls",
)


def _r2_columns(spec: str, outcome: str, covariate_names: Sequence[str]) -> list[str]:
    mllm = f"{naming.MLLM}_{outcome}_z"
    seg = f"{naming.SEGMENTATION}_{outcome}_z"
    return {
        "mllm_only": [mllm],
        "segmentation_only": [seg],
        "controls_only": list(covariate_names),
        "mllm_plus_segmentation": [mllm, seg],
        "mllm_plus_controls": [mllm, *covariate_names],
    }[spec]


def r2_ladder(
    wide: pd.DataFrame,
    covariate_names: Sequence[str],
    B: int = 500,
    seed: int = 0,
) -> pd.DataFrame:
    """Adjusted R2 of the authoritative outcome on five predictor sets,
    with percentile bootstrap CIs over cbg resamples."""
    rows = []
    for outcome in naming.OUTCOMES:
        ycol = f"{naming.AUTHORITATIVE}_{outcome}_z"
        for spec_name in R2_SPECS:
            cols = _r2_columns(spec_name, outcome, covariate_names)
            sub = wide.dropna(subset=[ycol, *cols])
            y = sub[ycol].to_numpy(dtype=float)
            X = sub[cols].to_numpy(dtype=float)
            point = _adj_r2(y, X)
            stats = []
            for b in range(B):
                rng = np.random.default_rng(np.random.SeedSequence((seed, b)))
                idx = rng.integers(0, len(y), size=len(y))
                stats.append(_adj_r2(y[idx], X[idx]))
            lo, hi = (
                np.percentile(stats, (2.5, 97.5)) if stats else (np.nan, np.nan)
            )
            rows.append(
                {
                    "outcome": outcome,
                    "spec": spec_name,
                    "adj_r2": point,
                    "ci_low": float(lo),
                    "ci_high": float(hi),
                    "n": len(y),
                    "B": B,
                }
            )
    return pd.DataFrame(rows)


def quantile_grid(
    wide: pd.DataFrame,
    taus: Sequence[float] = (0.10, 0.25, 0.50, 0.75, 0.90),
    B: int = 500,
    seed: int = 0,
) -> pd.DataFrame:
    """Pseudo-R2 of the authoritative outcome on each method's prediction,
    per (outcome, approach, tau), with percentile bootstrap CIs."""
    if not taus:
        raise ValueError("taus must be nonempty")
    rows = []
    for outcome in naming.OUTCOMES:
        ycol = f"{naming.AUTHORITATIVE}_{outcome}_z"
        for approach in (naming.MLLM, naming.SEGMENTATION):
            xcol = f"{approach}_{outcome}_z"
            sub = wide.dropna(subset=[ycol, xcol])
            y = sub[ycol].to_numpy(dtype=float)
            X = sub[[xcol]].to_numpy(dtype=float)
            for tau in taus:
                point = fit_quantile(y, X, tau).pseudo_r2
                stats = []
                for b in range(B):
                    rng = np.random.default_rng(np.random.SeedSequence((seed, b)))
                    idx = rng.integers(0, len(y), size=len(y))
                    stats.append(fit_quantile(y[idx], X[idx], tau).pseudo_r2)
                lo, hi = (
                    np.percentile(stats, (2.5, 97.5)) if stats else (np.nan, np.nan)
                )
                rows.append(
                    {
                        "outcome": outcome,
                        "approach": approach,
                        "tau": tau,
                        "pseudo_r2": point,
                        "ci_low": float(lo),
                        "ci_high": float(hi),
                        "n": len(y),
                        "B": B,
                    }
                )
    return pd.DataFrame(rows)
