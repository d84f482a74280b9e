"""Collapse tile-level predictions to standardized block-group panels.

Tile consensus values are averaged within a panorama, panoramas are
averaged within a block group weighted by their valid-tile counts, and
every outcome is standardized across the analysis sample before the
composite index Z(canopy) - Z(poverty) is formed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from . import naming
from .ingest import CbgRaw

log = logging.getLogger(__name__)

Z_CHECK_TOL = 1e-9


class EmptyInput(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class MissingApproachValue(KeyError):
    """A cbg lacks one approach's value.

    build_panel does not raise this: the cbg is excluded from every
    approach (keeping the three samples identical) and the exclusion is
    recorded in the returned metadata. The class exists for callers that
    want to fail hard on incomplete inputs.
    """

    def __init__(self, cbg_id: str, approach: str):
        self.cbg_id = cbg_id
        self.approach = approach
        super().__init__(f"cbg {cbg_id} has no {approach} value")


@dataclass(frozen=True)
class ApproachAggregate:
    """One approach's raw block-group outcome pair with its image weight."""

    poverty: float
    canopy: float
    weight_images: int


@dataclass(frozen=True)
class SampleSpec:
    """Which comparison sample to build and how to scope standardization.

    ``comparison`` may also be "all": keep every group (used for the
    fit-comparison analyses that run on the full common sample).
    """

    comparison: str
    standardization_scope: str = "estimation"  # or "full"

    def __post_init__(self):
        if self.comparison not in (*naming.COMPARISONS, "all"):
            raise ValueError(f"unknown comparison {self.comparison!r}")
        if self.standardization_scope not in ("estimation", "full"):
            raise ValueError(
                f"standardization_scope must be estimation|full, "
                f"got {self.standardization_scope!r}"
            )


def cbg_mean(tile_values: Sequence[tuple[float, int]]) -> float:
    """Weighted mean sum(w*v)/sum(w) over (value, tile-count) pairs."""
    pairs = [(v, w) for v, w in tile_values if v is not None]
    if not pairs:
        raise EmptyInput("no values to average")
    wsum = sum(w for _, w in pairs)
    if wsum <= 0:
        raise EmptyInput("weights sum to zero")
    return sum(v * w for v, w in pairs) / wsum


def standardize(values) -> np.ndarray:
    """z-scores with sample sd (n-1 divisor)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DegenerateVariance("need at least two values to standardize")
    sd = arr.std(ddof=1)
    if sd <= 0 or not np.isfinite(sd):
        raise DegenerateVariance(f"standard deviation {sd} is not positive")
    return (arr - arr.mean()) / sd


def sustainability_index(canopy_z, poverty_z) -> np.ndarray:
    canopy_z = np.asarray(canopy_z, dtype=float)
    poverty_z = np.asarray(poverty_z, dtype=float)
    if canopy_z.shape != poverty_z.shape:
        raise LengthMismatch(
            f"canopy has shape {canopy_z.shape}, poverty {poverty_z.shape}"
        )
    return canopy_z - poverty_z


def _comparison_groups(comparison: str) -> tuple[str, str | None]:
    if comparison == "all":
        return naming.HOLC_REDLINED, None
    return naming.HOLC_REDLINED, naming.COMPARISON_REFERENCE[comparison]


def build_panel(
    raw: Sequence[CbgRaw],
    mllm: Mapping[str, ApproachAggregate],
    seg: Mapping[str, ApproachAggregate],
    sample_spec: SampleSpec,
    kept_cbgs: set[str] | None = None,
) -> tuple[pd.DataFrame, dict]:
    """One standardized panel row per (cbg, approach) for a comparison sample.

    A cbg missing any approach's value is excluded from all approaches so
    the three samples stay identical; exclusions are reported in the
    returned metadata rather than raised.
    """
    treated, reference = _comparison_groups(sample_spec.comparison)
    excluded: list[dict] = []
    entries = []
    for rec in raw:
        if kept_cbgs is not None and rec.cbg_id not in kept_cbgs:
            continue
        missing = [
            name
            for name, table in ((naming.MLLM, mllm), (naming.SEGMENTATION, seg))
            if rec.cbg_id not in table
        ]
        if missing:
            for name in missing:
                excluded.append({"cbg_id": rec.cbg_id, "missing_approach": name})
            continue
        entries.append(rec)

    def in_sample(rec: CbgRaw) -> bool:
        return reference is None or rec.holc_group in (treated, reference)

    scope_entries = entries
    if sample_spec.standardization_scope == "estimation":
        scope_entries = [e for e in entries if in_sample(e)]
    sample = [e for e in entries if in_sample(e)]
    if len(sample) < 2:
        raise EmptyInput(
            f"comparison {sample_spec.comparison} selects {len(sample)} cbgs"
        )

    values = {
        naming.AUTHORITATIVE: lambda rec: (rec.acs_poverty, rec.geie_canopy),
        naming.MLLM: lambda rec: (mllm[rec.cbg_id].poverty, mllm[rec.cbg_id].canopy),
        naming.SEGMENTATION: lambda rec: (
            seg[rec.cbg_id].poverty,
            seg[rec.cbg_id].canopy,
        ),
    }

    # standardization moments come from the scope sample, z-scores are
    # emitted for the estimation sample
    moments: dict[tuple[str, str], tuple[float, float]] = {}
    for approach, getter in values.items():
        for idx, outcome in ((0, "poverty"), (1, "canopy")):
            vals = np.array([getter(rec)[idx] for rec in scope_entries], dtype=float)
            if vals.size < 2 or vals.std(ddof=1) <= 0:
                raise DegenerateVariance(
                    f"{approach} {outcome} has no variance in the scope sample"
                )
            moments[(approach, outcome)] = (vals.mean(), vals.std(ddof=1))

    rows = []
    for rec in sorted(sample, key=lambda r: r.cbg_id):
        weight = mllm[rec.cbg_id].weight_images
        for approach, getter in values.items():
            pov_raw, can_raw = getter(rec)
            pov_m, pov_s = moments[(approach, "poverty")]
            can_m, can_s = moments[(approach, "canopy")]
            pov_z = (pov_raw - pov_m) / pov_s
            can_z = (can_raw - can_m) / can_s
            row = {
                "cbg_id": rec.cbg_id,
                "approach": approach,
                "poverty_raw": pov_raw,
                "canopy_raw": can_raw,
                "poverty_z": pov_z,
                "canopy_z": can_z,
                "si_z": can_z - pov_z,
                "weight_images": weight,
                "redlined": 1 if rec.holc_group == treated else 0,
                "holc_group": rec.holc_group,
                "zip_code": rec.zip_code,
            }
            row.update(rec.covariates)
            rows.append(row)
    panel = pd.DataFrame(rows)

    if sample_spec.standardization_scope == "estimation":
        for approach in naming.APPROACHES:
            for col in ("poverty_z", "canopy_z"):
                z = panel.loc[panel["approach"] == approach, col].to_numpy()
                if abs(z.mean()) > Z_CHECK_TOL or abs(z.std(ddof=1) - 1.0) > Z_CHECK_TOL:
                    raise AssertionError(
                        f"standardization drifted for {approach}/{col}"
                    )

    if excluded:
        log.info(
            "excluded %d cbg/approach entries for missing values",
            len(excluded),
        )
    meta = {
        "comparison": sample_spec.comparison,
        "standardization_scope": sample_spec.standardization_scope,
        "n_cbgs": len(sample),
        "n_rows": len(panel),
        "n_treated": int(panel[panel["approach"] == naming.AUTHORITATIVE]["redlined"].sum()),
        "excluded": excluded,
        "moments": {
            f"{a}.{o}": {"mean": m, "sd": s} for (a, o), (m, s) in moments.items()
        },
    }
    return panel, meta


def group_summary(panel: pd.DataFrame, covariate_names: Sequence[str] = ()) -> pd.DataFrame:
    """Mean (sd) of raw outcomes per group and approach, plus covariates.

    Mirrors a summary-statistics table: one block of rows per holc group
    with per-approach outcome moments and cbg counts.
    """
    rows = []
    for group, gpanel in panel.groupby("holc_group"):
        n_cbgs = gpanel["cbg_id"].nunique()
        for approach, apanel in gpanel.groupby("approach"):
            row = {
                "holc_group": group,
                "approach": approach,
                "n_cbgs": n_cbgs,
                "poverty_mean": apanel["poverty_raw"].mean(),
                "poverty_sd": apanel["poverty_raw"].std(ddof=1),
                "canopy_mean": apanel["canopy_raw"].mean(),
                "canopy_sd": apanel["canopy_raw"].std(ddof=1),
            }
            for name in covariate_names:
                if name in apanel.columns:
                    row[f"{name}_mean"] = apanel[name].mean()
            rows.append(row)
    return pd.DataFrame(rows).sort_values(["holc_group", "approach"]).reset_index(drop=True)
