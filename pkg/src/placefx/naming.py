"""Shared categorical vocabulary for panels, models, and emitted tables."""

from __future__ import annotations

AUTHORITATIVE = "authoritative"
MLLM = "mllm"
SEGMENTATION = "segmentation"
APPROACHES = (AUTHORITATIVE, MLLM, SEGMENTATION)

OUTCOMES = ("poverty", "canopy", "si")

VARIANTS = ("Baseline", "Covariates", "ZipFE", "SAR")

VS_IDEAL = "vsIdeal"
VS_STABLE_DECLINING = "vsStableDeclining"
COMPARISONS = (VS_IDEAL, VS_STABLE_DECLINING)

HOLC_REDLINED = "Redlined"
HOLC_IDEAL = "Ideal"
HOLC_STABLE_DECLINING = "StableDeclining"
HOLC_UNASSIGNED = "Unassigned"
HOLC_GROUPS = (HOLC_REDLINED, HOLC_IDEAL, HOLC_STABLE_DECLINING, HOLC_UNASSIGNED)

# Reference group kept alongside the treated group under each comparison.
COMPARISON_REFERENCE = {
    VS_IDEAL: HOLC_IDEAL,
    VS_STABLE_DECLINING: HOLC_STABLE_DECLINING,
}

COVARIATE_NAMES = (
    "pop_density_ln",
    "dependency_rate",
    "linguistic_isolation",
    "black_share",
    "hispanic_share",
    "asian_share",
    "college_share",
)


def outcome_column(outcome: str) -> str:
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome {outcome!r}")
    return f"{outcome}_z"
