"""Response validation for the four-prompt chain.

The validators enforce the full reply contract: JSON-only output, token
whitelists, count consistency, calibration-band membership with open
endpoints, two-decimal rounding, the cutpoint ban, and the
zero-evidence rule for exact 0.00.  Enumerated string fields outside
their vocabulary raise UnknownToken; structural problems (missing or
mistyped fields, nullability, range, rounding) raise SchemaViolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

from .prompts import (
    BAND_NAMES,
    BANDS,
    CANOPY_TOKENS,
    CUTPOINTS,
    ENV_TOKENS,
    STRUCTURE_TYPES,
    UNKNOWN_BAND,
)

NOTES_MAX_CHARS = 100
_CUTPOINT_CENTS = {round(c * 100) for c in CUTPOINTS}


class ResponseValidationError(ValueError):
    """Base class; every reply defect is one of its subclasses."""


class NotJson(ResponseValidationError):
    pass


class SchemaViolation(ResponseValidationError):
    def __init__(self, fieldname: str, reason: str):
        self.fieldname = fieldname
        super().__init__(f"{fieldname}: {reason}")


class UnknownToken(ResponseValidationError):
    def __init__(self, token, fieldname: str):
        self.token = token
        self.fieldname = fieldname
        super().__init__(f"{fieldname}: token {token!r} not allowed")


class CountMismatch(ResponseValidationError):
    pass


class BandCutpoint(ResponseValidationError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"value {value} is a band cutpoint placeholder")


class BandValueMismatch(ResponseValidationError):
    def __init__(self, band: str, value: float):
        self.band = band
        self.value = value
        super().__init__(f"value {value} is not strictly inside band {band!r}")


class IllegalZero(ResponseValidationError):
    def __init__(self, counts: Mapping[str, int]):
        self.counts = dict(counts)
        super().__init__(f"exact 0.00 with nonzero evidence counts {self.counts}")


@dataclass(frozen=True)
class Prompt1Response:
    structure_type: str
    facade_indicators: tuple[str, ...]
    n_facade_indicators: int
    notes: str = ""


@dataclass(frozen=True)
class Prompt2Response:
    env_indicators: tuple[str, ...]
    n_env_indicators: int
    canopy_indicators: tuple[str, ...]
    n_canopy_indicators: int
    notes: str = ""


@dataclass(frozen=True)
class BandedEstimate:
    band: str
    value: float | None
    evidence_counts: Mapping[str, int] | None = None
    notes: str = ""


def _parse_object(raw_json: str) -> dict:
    try:
        obj = json.loads(raw_json)
    except (json.JSONDecodeError, TypeError) as exc:
        raise NotJson(f"reply is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise NotJson(f"reply must be a JSON object, got {type(obj).__name__}")
    return obj


def _require(obj: dict, fieldname: str):
    if fieldname not in obj:
        raise SchemaViolation(fieldname, "missing")
    return obj[fieldname]


def _check_int(value, fieldname: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(fieldname, f"must be an integer, got {value!r}")
    if value < 0:
        raise SchemaViolation(fieldname, f"must be >= 0, got {value}")
    return value


def _check_token_list(value, fieldname: str, whitelist=None) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise SchemaViolation(fieldname, f"must be a list, got {type(value).__name__}")
    tokens = []
    for item in value:
        if not isinstance(item, str) or not item:
            raise SchemaViolation(fieldname, f"list items must be nonempty strings")
        if whitelist is not None and item not in whitelist:
            raise UnknownToken(item, fieldname)
        tokens.append(item)
    return tuple(tokens)


def _check_notes(obj: dict) -> str:
    notes = obj.get("notes", "")
    if notes is None:
        return ""
    if not isinstance(notes, str):
        raise SchemaViolation("notes", "must be a string")
    if len(notes) > NOTES_MAX_CHARS:
        raise SchemaViolation("notes", f"{len(notes)} chars exceeds {NOTES_MAX_CHARS}")
    return notes


def _check_count(n: int, tokens: tuple, n_field: str, list_field: str) -> None:
    if n != len(tokens):
        raise CountMismatch(f"{n_field}={n} but {list_field} has {len(tokens)} items")


def _validate_prompt1(obj: dict) -> Prompt1Response:
    structure = _require(obj, "structure_type")
    if not isinstance(structure, str):
        raise SchemaViolation("structure_type", "must be a string")
    if structure not in STRUCTURE_TYPES:
        raise UnknownToken(structure, "structure_type")
    tokens = _check_token_list(_require(obj, "facade_indicators"), "facade_indicators")
    n = _check_int(_require(obj, "n_facade_indicators"), "n_facade_indicators")
    _check_count(n, tokens, "n_facade_indicators", "facade_indicators")
    return Prompt1Response(
        structure_type=structure,
        facade_indicators=tokens,
        n_facade_indicators=n,
        notes=_check_notes(obj),
    )


def _validate_prompt2(obj: dict) -> Prompt2Response:
    env = _check_token_list(_require(obj, "env_indicators"), "env_indicators", ENV_TOKENS)
    n_env = _check_int(_require(obj, "n_env_indicators"), "n_env_indicators")
    _check_count(n_env, env, "n_env_indicators", "env_indicators")
    canopy = _check_token_list(
        _require(obj, "canopy_indicators"), "canopy_indicators", CANOPY_TOKENS
    )
    n_canopy = _check_int(_require(obj, "n_canopy_indicators"), "n_canopy_indicators")
    _check_count(n_canopy, canopy, "n_canopy_indicators", "canopy_indicators")
    return Prompt2Response(
        env_indicators=env,
        n_env_indicators=n_env,
        canopy_indicators=canopy,
        n_canopy_indicators=n_canopy,
        notes=_check_notes(obj),
    )


def _check_banded_value(
    band: str,
    value,
    value_field: str,
    evidence: Mapping[str, int] | None,
) -> float | None:
    """The numeric rules shared by prompts 3 and 4.

    ``evidence`` holds the indicator counts governing the legality of an
    exact 0.00; None means the counts are unavailable (no chain context),
    in which case 0.00 is accepted at schema level.
    """
    if not isinstance(band, str):
        raise SchemaViolation("band", "must be a string")
    if band not in BAND_NAMES:
        raise UnknownToken(band, "band")
    if band == UNKNOWN_BAND:
        if value is not None:
            raise SchemaViolation(value_field, "must be null when the band is unknown")
        return None
    if value is None or isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(value_field, f"must be a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise SchemaViolation(value_field, f"{value} outside [0.00, 1.00]")
    cents = value * 100.0
    if abs(cents - round(cents)) > 1e-9:
        raise SchemaViolation(value_field, f"{value} is not rounded to two decimals")
    cents = int(round(cents))
    if cents in _CUTPOINT_CENTS:
        raise BandCutpoint(value)
    if cents == 0:
        if evidence is not None and any(v > 0 for v in evidence.values()):
            raise IllegalZero(evidence)
        if band != "very_low":
            raise BandValueMismatch(band, value)
        return 0.0
    lo, hi = BANDS[band]
    if not lo < value < hi:
        raise BandValueMismatch(band, value)
    return value


def _validate_prompt3(obj: dict, context: Mapping | None) -> BandedEstimate:
    band = _require(obj, "canopy_band")
    raw_value = _require(obj, "canopy_share_0_1")
    evidence = None
    if context is not None and "n_canopy_indicators" in context:
        evidence = {"n_canopy_indicators": int(context["n_canopy_indicators"])}
    value = _check_banded_value(band, raw_value, "canopy_share_0_1", evidence)
    return BandedEstimate(band=band, value=value, notes=_check_notes(obj))


def _validate_prompt4(obj: dict, context: Mapping | None) -> BandedEstimate:
    band = _require(obj, "poverty_band")
    raw_value = _require(obj, "poverty_proxy_0_1")
    counts_obj = _require(obj, "evidence_counts")
    if not isinstance(counts_obj, dict):
        raise SchemaViolation("evidence_counts", "must be an object")
    counts = {}
    for key in ("n_facade_indicators", "n_env_indicators"):
        if key not in counts_obj:
            raise SchemaViolation(f"evidence_counts.{key}", "missing")
        counts[key] = _check_int(counts_obj[key], f"evidence_counts.{key}")
    if context is not None:
        for key in counts:
            if key in context and int(context[key]) != counts[key]:
                raise CountMismatch(
                    f"evidence_counts.{key}={counts[key]} does not echo the "
                    f"provided variable {int(context[key])}"
                )
    value = _check_banded_value(band, raw_value, "poverty_proxy_0_1", counts)
    return BandedEstimate(
        band=band, value=value, evidence_counts=counts, notes=_check_notes(obj)
    )


def validate_response(prompt_id: int, raw_json: str, context: Mapping | None = None):
    """Validate one raw reply; returns the typed response object.

    ``context`` carries the variables that were injected into the prompt
    (the upstream indicator counts), which govern the zero-evidence rule
    for prompt 3 and the count-echo check for prompt 4.
    """
    obj = _parse_object(raw_json)
    if prompt_id == 1:
        return _validate_prompt1(obj)
    if prompt_id == 2:
        return _validate_prompt2(obj)
    if prompt_id == 3:
        return _validate_prompt3(obj, context)
    if prompt_id == 4:
        return _validate_prompt4(obj, context)
    raise ValueError(f"prompt_id must be 1..4, got {prompt_id}")
