"""Treatment-effect estimators: pooled OLS, fixed effects, and SAR by ML.

The estimators follow the scikit-learn protocol (``fit`` returns ``self``,
learned quantities carry a trailing underscore, hyperparameters live on
``__init__`` so ``get_params`` works), and each one is also wrapped by a
module-level function returning a :class:`FitResult` for table emission.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator

from . import naming
from .spatial import WeightsMatrix
from .validation import (
    DimensionMismatch,
    RankDeficient,
    check_consistent_rows,
    check_full_rank,
    check_matrix,
    check_vector,
)


class TooFewClusters(ValueError):
    """Clustered covariance requested with fewer than two clusters."""


class NoWithinVariation(ValueError):
    """A regressor is collinear with the fixed effects."""


class NonConvergence(RuntimeError):
    """The spatial-lag likelihood optimizer failed."""


class LikelihoodNotConcave(RuntimeError):
    """The concentrated likelihood has no clean interior maximum."""

    def __init__(self, message: str, grid: np.ndarray):
        self.grid = grid
        super().__init__(message)


@dataclass(frozen=True)
class ModelSpec:
    """One cell of the specification ladder."""

    outcome: str
    approach: str
    comparison: str
    variant: str
    covariate_names: tuple[str, ...] = naming.COVARIATE_NAMES
    cluster_var: str = "zip_code"

    def __post_init__(self):
        if self.variant not in naming.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def key(self) -> tuple[str, str, str, str]:
        return (self.outcome, self.approach, self.comparison, self.variant)


@dataclass
class FitResult:
    """Coefficients and uncertainty for one fitted specification."""

    delta: float
    se_delta: float
    beta: np.ndarray
    names: tuple[str, ...]
    vcov: np.ndarray
    n: int
    residuals: np.ndarray
    se_type: str
    spec: ModelSpec | None = None
    rho: float | None = None
    se_rho: float | None = None
    loglik: float | None = None
    sig2: float | None = None
    extra: dict = field(default_factory=dict)

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])


def _cluster_codes(clusters) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(np.asarray(clusters))
    return codes, len(uniques)


def _sandwich_cluster(X, u, codes, n_groups, k_total) -> np.ndarray:
    """CR1 covariance: G/(G-1) * (n-1)/(n-k) * bread @ meat @ bread."""
    n = X.shape[0]
    bread = np.linalg.inv(X.T @ X)
    xu = X * u[:, None]
    scores = np.zeros((n_groups, X.shape[1]))
    np.add.at(scores, codes, xu)
    meat = scores.T @ scores
    c = (n_groups / (n_groups - 1)) * ((n - 1) / (n - k_total))
    return c * bread @ meat @ bread


def _sandwich_hc1(X, u, k_total) -> np.ndarray:
    n = X.shape[0]
    bread = np.linalg.inv(X.T @ X)
    xu = X * u[:, None]
    meat = xu.T @ xu
    return (n / (n - k_total)) * bread @ meat @ bread


class ClusterRobustOLS(BaseEstimator):
    """OLS with cluster-robust (CR1), HC1, or classical covariance.

    Parameters
    ----------
    se_type : {"cluster", "hc1", "classical"}
        Covariance estimator.  "cluster" requires ``clusters`` in ``fit``
        and applies the CR1 small-sample factors
        G/(G-1) * (n-1)/(n-k).
    """

    def __init__(self, se_type: str = "cluster"):
        self.se_type = se_type

    def fit(self, X, y, clusters=None):
        X = check_matrix(X)
        y = check_vector(y)
        check_consistent_rows(X, y)
        check_full_rank(X)
        n, k = X.shape

        xtx = X.T @ X
        beta = np.linalg.solve(xtx, X.T @ y)
        u = y - X @ beta

        se_type = self.se_type
        if se_type == "cluster":
            if clusters is None:
                raise TooFewClusters("cluster SEs requested but no clusters given")
            codes, n_groups = _cluster_codes(clusters)
            if n_groups < 2:
                raise TooFewClusters(f"need >=2 clusters, got {n_groups}")
            vcov = _sandwich_cluster(X, u, codes, n_groups, k)
            self.n_clusters_ = n_groups
        elif se_type == "hc1":
            vcov = _sandwich_hc1(X, u, k)
        elif se_type == "classical":
            dof = max(n - k, 1)
            vcov = (u @ u / dof) * np.linalg.inv(xtx)
        else:
            raise ValueError(f"unknown se_type {se_type!r}")

        self.coef_ = beta
        self.resid_ = u
        self.vcov_ = vcov
        self.se_ = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        self.nobs_ = n
        return self

    def predict(self, X):
        return check_matrix(X) @ self.coef_


class FixedEffectsOLS(BaseEstimator):
    """Within (group-demeaned) OLS absorbing one set of fixed effects.

    Coefficients are identical to a full-dummy regression; the degrees of
    freedom used in covariance corrections count the absorbed group
    means, so k_total = k + G.
    """

    def __init__(self, se_type: str = "cluster"):
        self.se_type = se_type

    def fit(self, X, y, groups, clusters=None):
        X = check_matrix(X)
        y = check_vector(y)
        check_consistent_rows(X, y)
        codes, uniques = pd.factorize(np.asarray(groups))
        if len(codes) != len(y):
            raise DimensionMismatch("groups length does not match y")
        n_groups = len(uniques)
        counts = np.bincount(codes)

        def demean(v):
            means = np.bincount(codes, weights=v) / counts
            return v - means[codes]

        yd = demean(y)
        Xd = np.column_stack([demean(X[:, j]) for j in range(X.shape[1])])

        scale = np.abs(X).max(axis=0)
        dead = np.abs(Xd).max(axis=0) <= 1e-10 * (1.0 + scale)
        if dead.any():
            raise NoWithinVariation(
                f"columns {np.flatnonzero(dead).tolist()} have no variation "
                "within the fixed-effect groups"
            )
        check_full_rank(Xd, "demeaned X")

        n, k = X.shape
        k_total = k + n_groups
        beta = np.linalg.solve(Xd.T @ Xd, Xd.T @ yd)
        u = yd - Xd @ beta

        if self.se_type == "cluster":
            if clusters is None:
                raise TooFewClusters("cluster SEs requested but no clusters given")
            ccodes, n_clusters = _cluster_codes(clusters)
            if n_clusters < 2:
                raise TooFewClusters(f"need >=2 clusters, got {n_clusters}")
            vcov = _sandwich_cluster(Xd, u, ccodes, n_clusters, k_total)
            self.n_clusters_ = n_clusters
        elif self.se_type == "hc1":
            vcov = _sandwich_hc1(Xd, u, k_total)
        elif self.se_type == "classical":
            dof = max(n - k_total, 1)
            vcov = (u @ u / dof) * np.linalg.inv(Xd.T @ Xd)
        else:
            raise ValueError(f"unknown se_type {self.se_type!r}")

        # group intercepts, recoverable for prediction/diagnostics
        ymeans = np.bincount(codes, weights=y) / counts
        xmeans = np.vstack(
            [np.bincount(codes, weights=X[:, j]) / counts for j in range(X.shape[1])]
        ).T
        self.group_effects_ = ymeans - xmeans @ beta
        self.group_labels_ = tuple(uniques)

        self.coef_ = beta
        self.resid_ = u
        self.vcov_ = vcov
        self.se_ = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        self.nobs_ = n
        self.n_groups_ = n_groups
        return self


def _concentrated_nll(rho, n, e0, e1, eigvals, n_layers):
    u = e0 - rho * e1
    sig2 = (u @ u) / n
    logdet = n_layers * np.sum(np.log1p(-rho * eigvals))
    return 0.5 * n * np.log(sig2) - logdet


class SpatialLagML(BaseEstimator):
    """Maximum-likelihood spatial-lag model y = rho*W y + X b + e.

    The spatial parameter is concentrated out of the Gaussian likelihood:
    with b0, b1 the OLS coefficients of y and Wy on X and e0, e1 their
    residuals, sigma^2(rho) = ||e0 - rho*e1||^2 / n and

        l(rho) = const - (n/2) log sigma^2(rho) + sum_i log(1 - rho*l_i),

    where l_i are the eigenvalues of the row-standardized weights.  The
    scalar maximization uses bounded Brent iteration (golden section with
    parabolic steps) on the feasible interval (1/l_min, 1/l_max).

    Standard errors are model-based, from the inverse of the full
    information matrix in (b, rho, sigma^2), so the uncertainty in rho
    propagates into the coefficient covariance.

    ``n_layers`` fits a stacked system whose weights are ``n_layers``
    block-diagonal copies of the layer matrix; X and y then have
    ``n_layers * weights.n`` rows ordered layer-major.
    """

    def __init__(
        self,
        tol: float = 1e-8,
        bound_margin: float = 1e-6,
        fixed_rho: float | None = None,
        compute_vcov: bool = True,
        grid_check: int = 33,
    ):
        self.tol = tol
        self.bound_margin = bound_margin
        self.fixed_rho = fixed_rho
        self.compute_vcov = compute_vcov
        self.grid_check = grid_check

    def fit(self, X, y, weights: WeightsMatrix, n_layers: int = 1):
        X = check_matrix(X)
        y = check_vector(y)
        check_consistent_rows(X, y)
        check_full_rank(X)
        m = weights.n
        n, k = X.shape
        if n != m * n_layers:
            raise DimensionMismatch(
                f"{n} rows incompatible with {n_layers} layer(s) of {m} units"
            )

        W = weights.row_std
        ylag = np.concatenate([W @ y[i * m : (i + 1) * m] for i in range(n_layers)])
        eigvals = weights.eigenvalues()

        xtx = X.T @ X
        b0 = np.linalg.solve(xtx, X.T @ y)
        b1 = np.linalg.solve(xtx, X.T @ ylag)
        e0 = y - X @ b0
        e1 = ylag - X @ b1

        lo, hi = weights.rho_interval(self.bound_margin)
        if self.fixed_rho is not None:
            rho = float(self.fixed_rho)
        elif weights.n_edges == 0:
            rho = 0.0
        else:
            res = minimize_scalar(
                _concentrated_nll,
                bounds=(lo, hi),
                args=(n, e0, e1, eigvals, n_layers),
                method="bounded",
                options={"xatol": self.tol},
            )
            if not res.success:
                raise NonConvergence(f"rho optimizer failed: {res.message}")
            rho = float(res.x)
            if self.grid_check:
                grid_rho = np.linspace(lo, hi, self.grid_check)
                grid_nll = np.array(
                    [_concentrated_nll(r, n, e0, e1, eigvals, n_layers) for r in grid_rho]
                )
                best = grid_nll.min()
                if best < res.fun - 1e-6 * (1.0 + abs(res.fun)):
                    raise LikelihoodNotConcave(
                        "grid scan found a better optimum than the line search; "
                        "concentrated likelihood may be multimodal",
                        np.column_stack([grid_rho, -grid_nll]),
                    )

        beta = b0 - rho * b1
        u = e0 - rho * e1
        sig2 = float(u @ u) / n
        logdet = n_layers * float(np.sum(np.log1p(-rho * eigvals)))
        loglik = -0.5 * n * (np.log(2.0 * np.pi) + 1.0) - 0.5 * n * np.log(sig2) + logdet

        self.coef_ = beta
        self.rho_ = rho
        self.sig2_ = sig2
        self.loglik_ = float(loglik)
        self.resid_ = u
        self.nobs_ = n
        self.rho_interval_ = (lo, hi)

        if self.compute_vcov:
            self.vcov_, self.se_, self.se_rho_ = self._information_vcov(
                X, beta, rho, sig2, weights, n_layers
            )
        else:
            self.vcov_ = None
            self.se_ = None
            self.se_rho_ = None
        return self

    @staticmethod
    def _information_vcov(X, beta, rho, sig2, weights, n_layers):
        m = weights.n
        n, k = X.shape
        W = weights.row_std
        A = np.eye(m) - rho * W
        Ainv = np.linalg.inv(A)
        WAinv = W @ Ainv
        tr1 = n_layers * np.trace(WAinv)
        tr2 = n_layers * float(np.einsum("ij,ji->", WAinv, WAinv))
        tr3 = n_layers * float(np.einsum("ij,ij->", WAinv, WAinv))

        xb = X @ beta
        wpred = np.concatenate(
            [W @ (Ainv @ xb[i * m : (i + 1) * m]) for i in range(n_layers)]
        )

        info = np.zeros((k + 2, k + 2))
        info[:k, :k] = X.T @ X / sig2
        info[:k, k] = X.T @ wpred / sig2
        info[k, :k] = info[:k, k]
        info[k, k] = tr2 + tr3 + (wpred @ wpred) / sig2
        info[k, k + 1] = info[k + 1, k] = tr1 / sig2
        info[k + 1, k + 1] = n / (2.0 * sig2**2)

        full = np.linalg.inv(info)
        vcov = full[: k + 1, : k + 1]
        se = np.sqrt(np.clip(np.diag(vcov)[:k], 0.0, None))
        se_rho = float(np.sqrt(max(vcov[k, k], 0.0)))
        return vcov, se, se_rho


# ---------------------------------------------------------------------------
# FitResult wrappers


def fit_ols(
    y,
    X_design,
    cluster_ids=None,
    names: Sequence[str] | None = None,
    treatment_index: int = 1,
    se_type: str | None = None,
    spec: ModelSpec | None = None,
) -> FitResult:
    """OLS on an explicit design matrix (intercept included by the caller).

    ``treatment_index`` points at the treatment column (default 1, the
    column after the intercept).
    """
    if se_type is None:
        se_type = "cluster" if cluster_ids is not None else "hc1"
    est = ClusterRobustOLS(se_type=se_type).fit(X_design, y, clusters=cluster_ids)
    names = tuple(names) if names else tuple(f"x{j}" for j in range(len(est.coef_)))
    return FitResult(
        delta=float(est.coef_[treatment_index]),
        se_delta=float(est.se_[treatment_index]),
        beta=est.coef_,
        names=names,
        vcov=est.vcov_,
        n=est.nobs_,
        residuals=est.resid_,
        se_type=se_type,
        spec=spec,
        extra={"n_clusters": getattr(est, "n_clusters_", None)},
    )


def fit_fe(
    y,
    X,
    fe_ids,
    cluster_ids=None,
    names: Sequence[str] | None = None,
    treatment_index: int = 0,
    se_type: str | None = None,
    spec: ModelSpec | None = None,
) -> FitResult:
    """Within estimator; X excludes the intercept (absorbed by the groups)."""
    if se_type is None:
        se_type = "cluster" if cluster_ids is not None else "hc1"
    est = FixedEffectsOLS(se_type=se_type).fit(X, y, groups=fe_ids, clusters=cluster_ids)
    names = tuple(names) if names else tuple(f"x{j}" for j in range(len(est.coef_)))
    return FitResult(
        delta=float(est.coef_[treatment_index]),
        se_delta=float(est.se_[treatment_index]),
        beta=est.coef_,
        names=names,
        vcov=est.vcov_,
        n=est.nobs_,
        residuals=est.resid_,
        se_type=se_type,
        spec=spec,
        extra={"n_groups": est.n_groups_,
               "n_clusters": getattr(est, "n_clusters_", None)},
    )


def fit_sar(
    y,
    X_design,
    weights: WeightsMatrix,
    names: Sequence[str] | None = None,
    treatment_index: int = 1,
    n_layers: int = 1,
    spec: ModelSpec | None = None,
    tol: float = 1e-8,
    se: str = "model",
    cluster_ids=None,
) -> FitResult:
    """Spatial-lag ML fit.

    ``se="model"`` (default) takes standard errors from the inverse
    information matrix in (b, rho, sigma^2).  ``se="cluster"`` instead
    applies the CR1 sandwich to the spatially filtered regression
    (I - rho*W) y on X, conditional on the estimated rho.
    """
    est = SpatialLagML(tol=tol).fit(X_design, y, weights=weights, n_layers=n_layers)
    names = tuple(names) if names else tuple(f"x{j}" for j in range(len(est.coef_)))
    if se == "model":
        vcov = est.vcov_
        se_vec = est.se_
        se_type = "model"
    elif se == "cluster":
        if cluster_ids is None:
            raise TooFewClusters("cluster SEs requested but no clusters given")
        X = check_matrix(X_design)
        codes, n_groups = _cluster_codes(cluster_ids)
        if n_groups < 2:
            raise TooFewClusters(f"need >=2 clusters, got {n_groups}")
        vcov = _sandwich_cluster(X, est.resid_, codes, n_groups, X.shape[1])
        se_vec = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        se_type = "cluster_conditional_on_rho"
    else:
        raise ValueError(f"unknown SAR se option {se!r}")
    return FitResult(
        delta=float(est.coef_[treatment_index]),
        se_delta=float(se_vec[treatment_index]),
        beta=est.coef_,
        names=names,
        vcov=vcov,
        n=est.nobs_,
        residuals=est.resid_,
        se_type=se_type,
        spec=spec,
        rho=est.rho_,
        se_rho=est.se_rho_,
        loglik=est.loglik_,
        sig2=est.sig2_,
    )


# ---------------------------------------------------------------------------
# Ladder over specifications


def default_specs(
    covariate_names: Sequence[str] = naming.COVARIATE_NAMES,
) -> list[ModelSpec]:
    """All 3 outcomes x 3 approaches x 2 comparisons x 4 variants = 72 cells."""
    specs = []
    for outcome in naming.OUTCOMES:
        for approach in naming.APPROACHES:
            for comparison in naming.COMPARISONS:
                for variant in naming.VARIANTS:
                    specs.append(
                        ModelSpec(
                            outcome=outcome,
                            approach=approach,
                            comparison=comparison,
                            variant=variant,
                            covariate_names=tuple(covariate_names),
                        )
                    )
    return specs


def build_design(panel: pd.DataFrame, spec: ModelSpec):
    """Extract (y, X, names, fe_ids, cluster_ids, weights_ids) for one cell.

    The panel is long (one row per cbg x approach) and already filtered
    to the comparison sample and standardized.  Rows with any null among
    the needed columns are dropped (listwise deletion at model build).
    """
    sub = panel[panel["approach"] == spec.approach].copy()
    ycol = naming.outcome_column(spec.outcome)
    use_covs = spec.variant in ("Covariates", "ZipFE", "SAR")
    cols = [ycol, "redlined", spec.cluster_var, "cbg_id"] + (
        list(spec.covariate_names) if use_covs else []
    )
    sub = sub.dropna(subset=[c for c in cols if c in sub.columns])
    sub = sub.sort_values("cbg_id", kind="stable").reset_index(drop=True)

    y = sub[ycol].to_numpy(dtype=float)
    treat = sub["redlined"].to_numpy(dtype=float)
    covs = (
        sub[list(spec.covariate_names)].to_numpy(dtype=float)
        if use_covs
        else np.empty((len(sub), 0))
    )
    cluster_ids = sub[spec.cluster_var].to_numpy()
    cbg_ids = sub["cbg_id"].tolist()

    if spec.variant == "ZipFE":
        X = np.column_stack([treat, covs])
        names = ("redlined",) + (tuple(spec.covariate_names) if use_covs else ())
        return y, X, names, cluster_ids, cluster_ids, cbg_ids, 0
    X = np.column_stack([np.ones(len(sub)), treat, covs])
    names = ("const", "redlined") + (tuple(spec.covariate_names) if use_covs else ())
    return y, X, names, None, cluster_ids, cbg_ids, 1


def _fit_cell(
    panel, spec: ModelSpec, weights: WeightsMatrix | None, sar_se: str = "model"
) -> FitResult:
    y, X, names, fe_ids, cluster_ids, cbg_ids, tidx = build_design(panel, spec)
    treat = X[:, tidx]
    n_treated = int(treat.sum())
    if min(n_treated, len(treat) - n_treated) < 2:
        warnings.warn(
            f"{spec.key()}: a treatment group has <2 members; "
            "falling back to heteroskedasticity-robust SEs"
        )
        cluster_ids = None

    if spec.variant in ("Baseline", "Covariates"):
        se_type = "cluster" if cluster_ids is not None else "hc1"
        return fit_ols(
            y, X, cluster_ids, names=names, treatment_index=tidx, se_type=se_type, spec=spec
        )
    if spec.variant == "ZipFE":
        se_type = "cluster" if cluster_ids is not None else "hc1"
        return fit_fe(
            y, X, fe_ids, cluster_ids, names=names, treatment_index=tidx,
            se_type=se_type, spec=spec,
        )
    if weights is None:
        raise ValueError("SAR variant requires a weights matrix")
    w = weights if list(weights.ids) == cbg_ids else weights.subset(cbg_ids)
    if sar_se == "cluster" and cluster_ids is None:
        sar_se = "model"
    return fit_sar(
        y, X, w, names=names, treatment_index=tidx, spec=spec,
        se=sar_se, cluster_ids=cluster_ids,
    )


def contrast_ladder(
    panels: Mapping[str, pd.DataFrame],
    specs: Sequence[ModelSpec],
    weights: Mapping[str, WeightsMatrix] | None = None,
    sar_se: str = "model",
) -> pd.DataFrame:
    """Fit every spec cell; one failed cell is recorded, not fatal.

    ``panels`` maps comparison -> standardized long panel and ``weights``
    maps comparison -> queen weights over that panel's cbg sample.
    """
    rows = []
    for spec in sorted(specs, key=lambda s: s.key()):
        row = {
            "outcome": spec.outcome,
            "approach": spec.approach,
            "comparison": spec.comparison,
            "variant": spec.variant,
            "delta": np.nan,
            "se": np.nan,
            "rho": np.nan,
            "n": 0,
            "se_type": "",
            "status": "ok",
            "error": "",
        }
        try:
            panel = panels[spec.comparison]
            w = weights.get(spec.comparison) if weights else None
            fit = _fit_cell(panel, spec, w, sar_se=sar_se)
            row.update(
                delta=fit.delta,
                se=fit.se_delta,
                rho=fit.rho if fit.rho is not None else np.nan,
                n=fit.n,
                se_type=fit.se_type,
            )
        except Exception as exc:  # noqa: BLE001 - per-cell isolation is the contract
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return pd.DataFrame(rows)


def ladder_text_table(ladder: pd.DataFrame) -> str:
    """Plain-text ladder, one block per (outcome, comparison)."""
    lines = []
    approach_label = {
        naming.AUTHORITATIVE: "Authoritative",
        naming.MLLM: "MLLM",
        naming.SEGMENTATION: "Segmentation",
    }
    for outcome in naming.OUTCOMES:
        for comparison in naming.COMPARISONS:
            block = ladder[
                (ladder["outcome"] == outcome) & (ladder["comparison"] == comparison)
            ]
            if block.empty:
                continue
            lines.append(f"== {outcome} | reference: {comparison} ==")
            header = f"{'':<16}" + "".join(f"{v:>22}" for v in naming.VARIANTS)
            lines.append(header)
            for approach in naming.APPROACHES:
                cells = []
                for variant in naming.VARIANTS:
                    cell = block[
                        (block["approach"] == approach) & (block["variant"] == variant)
                    ]
                    if cell.empty or cell.iloc[0]["status"] != "ok":
                        cells.append(f"{'--':>22}")
                    else:
                        r = cell.iloc[0]
                        cells.append(f"{r['delta']:>12.3f} ({r['se']:.3f})")
                lines.append(f"{approach_label[approach]:<16}" + "".join(cells))
            lines.append("")
    return "\n".join(lines)
