"""The fixed four-prompt chain: texts, token whitelists, calibration bands.

Prompts 1 and 2 elicit auditable scene descriptions; prompts 3 and 4 map
those descriptions (injected as variables) to numeric indicator values.
Every prompt demands a single JSON object and two-decimal numerics
strictly inside a named calibration band.
"""

from __future__ import annotations

import json

STRUCTURE_TYPES = (
    "single_family_detached",
    "duplex",
    "mobile_home",
    "apartment",
    "townhouse",
    "mixed_use",
    "other",
    "unknown",
    "none_visible",
)

ENV_TOKENS = (
    "dirt_lot",
    "overgrowth",
    "debris",
    "landscaping_absent",
    "vehicle_damaged",
    "vehicle_abandoned",
    "very_old_vehicle",
    "driveway_broken",
    "cracked_sidewalk",
    "poor_lighting",
    "potholes",
    "window_bars",
    "perimeter_fence",
    "clutter_disrepair",
)

CANOPY_TOKENS = ("tree", "palm", "large_shrub")

# closed names, open numeric intervals; "unknown" pairs with a null value
BANDS = {
    "very_low": (0.00, 0.20),
    "low": (0.20, 0.40),
    "moderate": (0.40, 0.60),
    "high": (0.60, 0.80),
    "very_high": (0.80, 1.00),
}
UNKNOWN_BAND = "unknown"
BAND_NAMES = (*BANDS, UNKNOWN_BAND)

# interior cutpoints plus 1.00 are always rejected as placeholder values;
# exact 0.00 is governed by the zero-evidence rule instead
CUTPOINTS = (0.20, 0.40, 0.60, 0.80, 1.00)

PREAMBLE = """\
You are auditing a single street-level photograph to produce area-level
indicators. Use only visible, non-sensitive scene features: structures,
lots, road surfaces, vegetation, street furniture, lighting. Never infer
characteristics of identifiable people. Round every numeric output to
two decimals and keep it inside the stated range. Reply with exactly one
JSON object matching the requested schema and nothing else."""

_BAND_TEXT = """\
Pick one calibration band, then give a numeric value strictly inside it:
  very_low (0.00-0.20), low (0.20-0.40), moderate (0.40-0.60),
  high (0.60-0.80), very_high (0.80-1.00), or unknown.
Never return a band cutpoint (0.20, 0.40, 0.60, 0.80) or 1.00 as a
placeholder value."""

PROMPT_1 = f"""{PREAMBLE}

Step 1 of 4. Identify the primary residential structure type visible in
the scene, if any, and list facade-level maintenance indicators as short
snake_case tokens (visual cues only).

Allowed structure types (choose exactly one):
{json.dumps(list(STRUCTURE_TYPES))}

Answer with this JSON object:
{{
  "structure_type": "<one allowed value>",
  "facade_indicators": ["<zero or more tokens>"],
  "n_facade_indicators": <integer equal to the list length>,
  "notes": "<optional, at most 100 characters>"
}}"""

PROMPT_2 = f"""{PREAMBLE}

Step 2 of 4. Record neighborhood-scale environmental indicators
associated with lower infrastructure quality or maintenance, and whether
overhead canopy elements are present.

Allowed environmental indicator tokens (choose zero or more):
{json.dumps(list(ENV_TOKENS))}

Allowed canopy tokens (choose zero or more):
{json.dumps(list(CANOPY_TOKENS))}

Answer with this JSON object:
{{
  "env_indicators": ["<zero or more allowed tokens>"],
  "n_env_indicators": <integer equal to the list length>,
  "canopy_indicators": ["<zero or more allowed tokens>"],
  "n_canopy_indicators": <integer equal to the list length>,
  "notes": "<optional, at most 100 characters>"
}}"""

PROMPT_3_TEMPLATE = f"""{PREAMBLE}

Step 3 of 4. Using the variables below, estimate the local-scene share
of visible area covered by overhead canopy only (mature trees, palms,
large shrubs). Exclude grass, small bushes, flowerbeds, groundcover.

Variables: {{variables}}

{_BAND_TEXT}
Use exact 0.00 only if the scene unambiguously shows no overhead canopy
and n_canopy_indicators is 0. If information is insufficient, set the
band to "unknown" and the value to null.

Answer with this JSON object:
{{{{
  "canopy_band": "<band name>",
  "canopy_share_0_1": <float in [0.00, 1.00] or null>,
  "notes": "<optional, at most 100 characters>"
}}}}"""

PROMPT_4_TEMPLATE = f"""{PREAMBLE}

Step 4 of 4. Using the variables below, produce a local-scene,
area-level proxy for the share of households below the federal poverty
threshold. Use only visible built-environment cues; do not infer
person-level attributes.

Variables: {{variables}}

{_BAND_TEXT}
Use exact 0.00 only if no facade or environmental deprivation indicators
are present (n_facade_indicators is 0 and n_env_indicators is 0). If
information is insufficient, set the band to "unknown" and the value to
null.

Answer with this JSON object:
{{{{
  "poverty_band": "<band name>",
  "poverty_proxy_0_1": <float in [0.00, 1.00] or null>,
  "evidence_counts": {{{{
    "n_facade_indicators": <int>,
    "n_env_indicators": <int>
  }}}},
  "notes": "<optional, at most 100 characters>"
}}}}"""


def render_prompt(prompt_id: int, variables: dict | None = None) -> str:
    """Prompt text with chain variables serialized verbatim into steps 3/4."""
    if prompt_id == 1:
        return PROMPT_1
    if prompt_id == 2:
        return PROMPT_2
    payload = json.dumps(variables or {}, sort_keys=True)
    if prompt_id == 3:
        return PROMPT_3_TEMPLATE.format(variables=payload)
    if prompt_id == 4:
        return PROMPT_4_TEMPLATE.format(variables=payload)
    raise ValueError(f"prompt_id must be 1..4, got {prompt_id}")


def extract_variables(prompt_text: str) -> dict:
    """Parse the injected variables block back out of a step-3/4 prompt."""
    for line in prompt_text.splitlines():
        if line.startswith("Variables: "):
            return json.loads(line[len("Variables: "):])
    return {}
