"""Deterministic endpoint double producing schema-valid replies.

Every reply is a pure function of (seed, image_ref, prompt_id, round):
two calls with the same key are byte-identical, and different rounds
jitter around a stable per-image latent scene profile.  The ``deprived``
profile draws poverty bands from {moderate, high}, ``affluent`` from
{very_low, low}, ``mixed`` spans both.  Replies always satisfy the full
validation contract, including the count echo and the zero-evidence
rule.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .chain import EndpointRequest
from .prompts import BANDS, CANOPY_TOKENS, ENV_TOKENS, extract_variables

PROFILES = ("affluent", "deprived", "mixed")

FACADE_VOCAB = (
    "peeling_paint",
    "boarded_window",
    "sagging_roof",
    "broken_fence",
    "cracked_stucco",
    "graffiti",
)
AFFLUENT_STRUCTURES = ("single_family_detached", "townhouse")
DEPRIVED_STRUCTURES = ("mobile_home", "apartment", "duplex", "single_family_detached")


def _rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence(words.tolist()))


def _grid_value(rng: np.random.Generator, band: str, center: float) -> float:
    """A legal two-decimal value strictly inside the band, near center."""
    lo, hi = BANDS[band]
    lo_c, hi_c = round(lo * 100) + 1, round(hi * 100) - 1
    cents = int(np.clip(round(center * 100) + rng.integers(-2, 3), lo_c, hi_c))
    return cents / 100.0


def _band_for(value: float) -> str:
    for name, (lo, hi) in BANDS.items():
        if lo < value <= hi:
            return name
    return "very_low"


class MockEndpointClient:
    """See :func:`mock_endpoint`."""

    def __init__(self, seed: int, profile: str):
        if profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        self.seed = seed
        self.profile = profile

    def _latents(self, image_ref: str) -> tuple[float, float]:
        rng = _rng(self.seed, image_ref, "latent")
        if self.profile == "affluent":
            deprivation = rng.uniform(0.02, 0.22)
            canopy = rng.uniform(0.12, 0.45)
        elif self.profile == "deprived":
            deprivation = rng.uniform(0.50, 0.78)
            canopy = rng.uniform(0.01, 0.18)
        else:
            deprivation = rng.uniform(0.05, 0.75)
            canopy = rng.uniform(0.03, 0.40)
        return deprivation, canopy

    def complete(self, request: EndpointRequest) -> str:
        deprivation, canopy = self._latents(request.image_ref)
        rng = _rng(self.seed, request.image_ref, request.prompt_id, request.round_index)
        if request.prompt_id == 1:
            reply = self._prompt1(rng, deprivation)
        elif request.prompt_id == 2:
            reply = self._prompt2(rng, deprivation, canopy)
        elif request.prompt_id == 3:
            reply = self._prompt3(rng, canopy, extract_variables(request.prompt_text))
        elif request.prompt_id == 4:
            reply = self._prompt4(
                rng, deprivation, extract_variables(request.prompt_text)
            )
        else:
            raise ValueError(f"unknown prompt_id {request.prompt_id}")
        return json.dumps(reply, sort_keys=True)

    def _prompt1(self, rng, deprivation) -> dict:
        pool = DEPRIVED_STRUCTURES if deprivation > 0.35 else AFFLUENT_STRUCTURES
        structure = str(rng.choice(pool))
        n = int(rng.binomial(len(FACADE_VOCAB), min(0.9, deprivation * 0.9)))
        tokens = [str(t) for t in rng.choice(FACADE_VOCAB, size=n, replace=False)]
        return {
            "structure_type": structure,
            "facade_indicators": tokens,
            "n_facade_indicators": len(tokens),
            "notes": "",
        }

    def _prompt2(self, rng, deprivation, canopy) -> dict:
        n_env = int(rng.binomial(6, min(0.9, deprivation * 0.85)))
        env = [str(t) for t in rng.choice(ENV_TOKENS, size=n_env, replace=False)]
        n_can = int(rng.binomial(len(CANOPY_TOKENS), min(0.95, canopy * 2.2)))
        can = [str(t) for t in rng.choice(CANOPY_TOKENS, size=n_can, replace=False)]
        return {
            "env_indicators": env,
            "n_env_indicators": len(env),
            "canopy_indicators": can,
            "n_canopy_indicators": len(can),
            "notes": "",
        }

    def _prompt3(self, rng, canopy, variables) -> dict:
        n_canopy = int(variables.get("n_canopy_indicators", 0))
        if n_canopy == 0:
            u = rng.random()
            if u < 0.55:
                return {"canopy_band": "very_low", "canopy_share_0_1": 0.0, "notes": ""}
            if u < 0.75:
                return {"canopy_band": "unknown", "canopy_share_0_1": None, "notes": ""}
            value = _grid_value(rng, "very_low", max(canopy * 0.5, 0.02))
            return {"canopy_band": "very_low", "canopy_share_0_1": value, "notes": ""}
        target = float(np.clip(canopy + rng.normal(0.0, 0.05), 0.01, 0.99))
        band = _band_for(target)
        value = _grid_value(rng, band, target)
        return {"canopy_band": band, "canopy_share_0_1": value, "notes": ""}

    def _prompt4(self, rng, deprivation, variables) -> dict:
        nf = int(variables.get("n_facade_indicators", 0))
        ne = int(variables.get("n_env_indicators", 0))
        counts = {"n_facade_indicators": nf, "n_env_indicators": ne}
        if nf == 0 and ne == 0 and rng.random() < 0.7:
            return {
                "poverty_band": "very_low",
                "poverty_proxy_0_1": 0.0,
                "evidence_counts": counts,
                "notes": "",
            }
        if self.profile == "affluent":
            band = str(rng.choice(("very_low", "low"), p=(0.8, 0.2)))
        elif self.profile == "deprived":
            band = str(rng.choice(("moderate", "high"), p=(0.55, 0.45)))
        else:
            target = float(np.clip(deprivation + rng.normal(0.0, 0.05), 0.01, 0.99))
            band = _band_for(target)
        lo, hi = BANDS[band]
        center = float(np.clip(deprivation, lo + 0.01, hi - 0.01))
        value = _grid_value(rng, band, center)
        return {
            "poverty_band": band,
            "poverty_proxy_0_1": value,
            "evidence_counts": counts,
            "notes": "",
        }


def mock_endpoint(seed: int, profile: str) -> MockEndpointClient:
    """Deterministic test double for the elicitation endpoint."""
    return MockEndpointClient(seed, profile)
