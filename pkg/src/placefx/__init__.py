"""Street-view neighborhood indicators and place-based treatment effects.

The package turns structured street-view observations (elicited from a
vision-language endpoint or ingested from a pixel-segmentation baseline)
into standardized block-group indicators, then estimates and
equivalence-tests place-based treatment effects across measurement
approaches: pooled OLS, covariate adjustment, zip-code fixed effects,
a spatial-lag (SAR) maximum-likelihood model, and a stacked regression
with a block-group cluster bootstrap.
"""

__version__ = "0.1.0"

from .aggregate import build_panel, cbg_mean, standardize, sustainability_index
from .econ import (
    ClusterRobustOLS,
    FitResult,
    FixedEffectsOLS,
    ModelSpec,
    SpatialLagML,
    contrast_ladder,
    fit_fe,
    fit_ols,
    fit_sar,
)
from .quantfit import QuantileFit, QuantileRegressionLP, fit_quantile
from .spatial import WeightsMatrix, queen_weights, spatial_lag
from .stackinf import (
    BootstrapDistribution,
    cluster_bootstrap,
    equivalence_test,
    fit_stacked,
)

__all__ = [
    "BootstrapDistribution",
    "ClusterRobustOLS",
    "FitResult",
    "FixedEffectsOLS",
    "ModelSpec",
    "QuantileFit",
    "QuantileRegressionLP",
    "SpatialLagML",
    "WeightsMatrix",
    "build_panel",
    "cbg_mean",
    "cluster_bootstrap",
    "contrast_ladder",
    "equivalence_test",
    "fit_fe",
    "fit_ols",
    "fit_quantile",
    "fit_sar",
    "fit_stacked",
    "queen_weights",
    "spatial_lag",
    "standardize",
    "sustainability_index",
]
