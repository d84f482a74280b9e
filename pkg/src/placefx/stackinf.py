"""Stacked regression across measurement approaches with cluster bootstrap.

The three outcome series for a common cbg sample are pooled with
approach indicators and treatment-by-approach interactions; the omitted
approach carries the baseline treatment effect and each interaction
measures that approach's deviation from it.  Uncertainty comes from a
nonparametric cbg-level cluster bootstrap: cbgs are resampled with
replacement keeping all stacked rows of each selected cbg, the model is
refit per draw, and approach-specific totals are formed by addition
(total = baseline + interaction) inside every draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from . import naming
from .econ import FixedEffectsOLS, SpatialLagML
from .spatial import WeightsMatrix

CI_PERCENTILES = (2.5, 97.5)
MAX_FAILURE_SHARE = 0.05


class UnbalancedBlock(ValueError):
    def __init__(self, cbg_id: str, detail: str):
        self.cbg_id = cbg_id
        super().__init__(f"cbg {cbg_id}: {detail}")


class BootstrapFailure(RuntimeError):
    pass


def build_stacked_rows(
    panel: pd.DataFrame,
    outcome: str,
    covariate_names: Sequence[str] = (),
) -> pd.DataFrame:
    """Long panel -> stacked rows (cbg_id, approach, y, redlined, zip, covs)."""
    ycol = naming.outcome_column(outcome)
    cols = ["cbg_id", "approach", ycol, "redlined", "zip_code", *covariate_names]
    rows = panel[cols].rename(columns={ycol: "y"}).copy()
    return rows.dropna(subset=["y", "redlined", "zip_code", *covariate_names])


@dataclass
class _StackedData:
    """Per-cbg arrays, layer-major assembly happens per fit."""

    cbg_ids: list[str]
    approaches: tuple[str, ...]  # layer order, omitted first
    y_blocks: np.ndarray  # (n_cbg, n_layers)
    treat: np.ndarray  # (n_cbg,)
    covs: np.ndarray  # (n_cbg, n_cov)
    zip_codes: np.ndarray  # (n_cbg,) labels
    covariate_names: tuple[str, ...]
    weights: WeightsMatrix | None


def _prepare(
    rows: pd.DataFrame,
    covariate_names: Sequence[str],
    weights: WeightsMatrix | None,
    omitted: str,
) -> _StackedData:
    approaches_present = sorted(rows["approach"].unique())
    if omitted not in approaches_present:
        raise ValueError(f"omitted approach {omitted!r} not in rows")
    layer_order = (omitted, *[a for a in approaches_present if a != omitted])

    counts = rows.groupby("cbg_id")["approach"].agg(["count", "nunique"])
    bad = counts[(counts["count"] != len(layer_order)) | (counts["nunique"] != len(layer_order))]
    if not bad.empty:
        cbg = bad.index[0]
        raise UnbalancedBlock(
            str(cbg),
            f"expected one row per approach {layer_order}, "
            f"got {counts.loc[cbg, 'count']} rows",
        )

    if weights is not None:
        if set(rows["cbg_id"]) != set(weights.ids):
            raise ValueError("weights ids do not match the stacked cbg sample")
        cbg_ids = list(weights.ids)
    else:
        cbg_ids = sorted(set(rows["cbg_id"]))

    wide = rows.set_index(["cbg_id", "approach"]).sort_index()
    y_blocks = np.column_stack(
        [
            wide.loc[[(c, a) for c in cbg_ids], "y"].to_numpy(dtype=float)
            for a in layer_order
        ]
    )
    first = wide.xs(layer_order[0], level="approach").loc[cbg_ids]
    treat = first["redlined"].to_numpy(dtype=float)
    vary = rows.groupby("cbg_id")["redlined"].nunique()
    if (vary > 1).any():
        raise UnbalancedBlock(str(vary[vary > 1].index[0]), "redlined differs across approaches")
    covs = (
        first[list(covariate_names)].to_numpy(dtype=float)
        if covariate_names
        else np.empty((len(cbg_ids), 0))
    )
    return _StackedData(
        cbg_ids=cbg_ids,
        approaches=layer_order,
        y_blocks=y_blocks,
        treat=treat,
        covs=covs,
        zip_codes=first["zip_code"].to_numpy(),
        covariate_names=tuple(covariate_names),
        weights=weights,
    )


def _design(data: _StackedData, positions: np.ndarray, with_const: bool):
    """Layer-major stacked y and X for the cbgs at ``positions``."""
    n_layers = len(data.approaches)
    m = len(positions)
    treat = data.treat[positions]
    covs = data.covs[positions]
    y = np.concatenate([data.y_blocks[positions, layer] for layer in range(n_layers)])

    names: list[str] = (["const"] if with_const else []) + ["redlined"]
    names += [f"approach_{a}" for a in data.approaches[1:]]
    names += [f"redlined_x_{a}" for a in data.approaches[1:]]
    names += list(data.covariate_names)

    blocks = []
    for layer in range(n_layers):
        cols = []
        if with_const:
            cols.append(np.ones(m))
        cols.append(treat)
        for other in range(1, n_layers):
            cols.append(np.full(m, 1.0 if layer == other else 0.0))
        for other in range(1, n_layers):
            cols.append(treat if layer == other else np.zeros(m))
        if covs.shape[1]:
            cols.append(covs)
        blocks.append(np.column_stack(cols))
    X = np.vstack(blocks)
    return y, X, tuple(names)


def _core_fit(
    data: _StackedData,
    positions: np.ndarray,
    spec: str,
    draw_weights: WeightsMatrix | None,
    compute_vcov: bool,
):
    """Fit one stacked model; returns (coefs, names, vcov|None, rho|None, n)."""
    n_layers = len(data.approaches)
    if spec == "ZipFE":
        y, X, names = _design(data, positions, with_const=False)
        groups = np.tile(data.zip_codes[positions], n_layers)
        if compute_vcov:
            clusters = np.tile(np.arange(len(positions)), n_layers)
            est = FixedEffectsOLS(se_type="cluster").fit(X, y, groups, clusters=clusters)
        else:
            est = FixedEffectsOLS(se_type="classical").fit(X, y, groups)
        return est.coef_, names, (est.vcov_ if compute_vcov else None), None, len(y)
    if spec == "SAR":
        if draw_weights is None:
            raise ValueError("SAR stacked fit requires a weights matrix")
        y, X, names = _design(data, positions, with_const=True)
        est = SpatialLagML(compute_vcov=compute_vcov).fit(
            X, y, weights=draw_weights, n_layers=n_layers
        )
        return est.coef_, names, est.vcov_, est.rho_, len(y)
    raise ValueError(f"unknown stacked spec {spec!r}; use ZipFE or SAR")


@dataclass
class StackedFit:
    spec: str
    omitted: str
    approaches: tuple[str, ...]
    delta0: float
    eta: dict[str, float]
    theta: dict[str, float]
    totals: dict[str, float]
    se: dict[str, float]
    vcov: np.ndarray
    names: tuple[str, ...]
    rho: float | None
    n: int


def fit_stacked(
    rows: pd.DataFrame,
    spec: str,
    weights: WeightsMatrix | None = None,
    covariate_names: Sequence[str] = (),
    omitted: str = naming.AUTHORITATIVE,
) -> StackedFit:
    """Pooled fit with approach dummies and treatment interactions.

    Returns the baseline treatment effect (omitted approach), approach
    level shifts, interaction deviations, and totals formed by addition.
    """
    data = _prepare(rows, covariate_names, weights, omitted)
    positions = np.arange(len(data.cbg_ids))
    coefs, names, vcov, rho, n = _core_fit(data, positions, spec, data.weights, True)
    lookup = dict(zip(names, coefs))
    delta0 = float(lookup["redlined"])
    eta = {a: float(lookup[f"approach_{a}"]) for a in data.approaches[1:]}
    theta = {a: float(lookup[f"redlined_x_{a}"]) for a in data.approaches[1:]}
    totals = {data.approaches[0]: delta0}
    for a in data.approaches[1:]:
        totals[a] = delta0 + theta[a]
    se = {}
    if vcov is not None:
        diag = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        se_lookup = dict(zip(names, diag[: len(names)]))
        se["redlined"] = float(se_lookup["redlined"])
        for a in data.approaches[1:]:
            se[f"redlined_x_{a}"] = float(se_lookup[f"redlined_x_{a}"])
    return StackedFit(
        spec=spec,
        omitted=omitted,
        approaches=data.approaches,
        delta0=delta0,
        eta=eta,
        theta=theta,
        totals=totals,
        se=se,
        vcov=vcov,
        names=names,
        rho=rho,
        n=n,
    )


@dataclass
class BootstrapDistribution:
    """Empirical bootstrap draws of the approach-specific totals."""

    spec: str
    seed: int
    B: int
    approaches: tuple[str, ...]
    delta0_draws: np.ndarray
    theta_draws: np.ndarray  # (B_ok, n_layers - 1)
    draws: np.ndarray  # (B_ok, n_layers) totals; column 0 is the baseline
    failed: list[tuple[int, str]]

    @property
    def n_ok(self) -> int:
        return self.draws.shape[0]

    def means(self) -> dict[str, float]:
        return {a: float(self.draws[:, i].mean()) for i, a in enumerate(self.approaches)}

    def ci(self, approach: str) -> tuple[float, float]:
        i = self.approaches.index(approach)
        lo, hi = np.percentile(self.draws[:, i], CI_PERCENTILES)
        return float(lo), float(hi)

    def theta_ci(self, approach: str) -> tuple[float, float]:
        i = self.approaches.index(approach)
        if i == 0:
            raise ValueError("the omitted approach has no interaction")
        lo, hi = np.percentile(self.theta_draws[:, i - 1], CI_PERCENTILES)
        return float(lo), float(hi)

    def summary(self) -> dict:
        out = {"spec": self.spec, "seed": self.seed, "B": self.B, "n_ok": self.n_ok}
        for i, a in enumerate(self.approaches):
            lo, hi = self.ci(a)
            out[a] = {"mean": float(self.draws[:, i].mean()), "ci_low": lo, "ci_high": hi}
        return out


def cluster_bootstrap(
    rows: pd.DataFrame,
    spec: str,
    B: int = 500,
    seed: int = 0,
    weights: WeightsMatrix | None = None,
    covariate_names: Sequence[str] = (),
    omitted: str = naming.AUTHORITATIVE,
    resampler: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> BootstrapDistribution:
    """Nonparametric cbg-level cluster bootstrap of the stacked fit.

    Draw b resamples n cbgs with replacement (all of a cbg's stacked rows
    travel together; each drawn copy becomes its own cluster), refits,
    and records the baseline, the interactions, and their sums.  Draw b
    depends only on (seed, b), so execution order and parallel scheduling
    cannot change results.  Failed draws are recorded and excluded; more
    than 5% failures aborts with diagnostics.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    data = _prepare(rows, covariate_names, weights, omitted)
    n = len(data.cbg_ids)
    n_layers = len(data.approaches)

    delta0_draws = []
    theta_draws = []
    totals_draws = []
    failed: list[tuple[int, str]] = []
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence((seed, b)))
        positions = (
            resampler(rng, n) if resampler is not None else rng.integers(0, n, size=n)
        )
        positions = np.asarray(positions)
        try:
            if spec == "SAR":
                draw_w = data.weights.resample(
                    positions, [f"b{p}" for p in range(len(positions))]
                )
            else:
                draw_w = None
            coefs, names, _, _, _ = _core_fit(data, positions, spec, draw_w, False)
        except Exception as exc:  # noqa: BLE001 - failures are data, not bugs
            failed.append((b, f"{type(exc).__name__}: {exc}"))
            continue
        lookup = dict(zip(names, coefs))
        d0 = float(lookup["redlined"])
        th = [float(lookup[f"redlined_x_{a}"]) for a in data.approaches[1:]]
        delta0_draws.append(d0)
        theta_draws.append(th)
        totals_draws.append([d0] + [d0 + t for t in th])

    if len(failed) > MAX_FAILURE_SHARE * B:
        raise BootstrapFailure(
            f"{len(failed)}/{B} bootstrap draws failed; first errors: "
            + "; ".join(msg for _, msg in failed[:5])
        )
    return BootstrapDistribution(
        spec=spec,
        seed=seed,
        B=B,
        approaches=data.approaches,
        delta0_draws=np.asarray(delta0_draws),
        theta_draws=np.asarray(theta_draws).reshape(-1, n_layers - 1),
        draws=np.asarray(totals_draws).reshape(-1, n_layers),
        failed=failed,
    )


VERDICT_REJECTED = "Rejected"
VERDICT_NOT_REJECTED = "Equivalent-NotRejected"

# The interaction-nullity test is a *difference* test; not rejecting the
# null cannot affirm equivalence, so emitted verdicts carry this caveat.
EQUIVALENCE_CAVEAT = (
    "verdict is a difference test of the interaction (null: no deviation "
    "from the baseline approach); non-rejection does not demonstrate "
    "equivalence"
)


def equivalence_test(dist: BootstrapDistribution, approach: str) -> str:
    """Rejected iff the percentile 95% CI of the interaction excludes 0."""
    if dist.n_ok == 0:
        raise ValueError("empty bootstrap distribution")
    lo, hi = dist.theta_ci(approach)
    return VERDICT_REJECTED if (lo > 0.0 or hi < 0.0) else VERDICT_NOT_REJECTED
