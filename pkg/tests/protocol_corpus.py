"""Hand-written labeled reply corpus for the prompt-protocol suite.

Each case: (case_id, prompt_id, raw reply text, chain context or None,
expected verdict).  The verdict is "valid" or the name of the validation
error class that must be raised.  Labels follow the elicitation rules:
numeric values live strictly inside the declared band, band cutpoints
(0.20/0.40/0.60/0.80) and 1.00 are placeholder values and always
rejected, exact 0.00 is legal only with zero evidence counts, and
"unknown" pairs with null.
"""

CASES = [
    # --- valid replies -----------------------------------------------------
    ("valid_p1_basic", 1,
     '{"structure_type": "single_family_detached", "facade_indicators": '
     '["peeling_paint", "broken_fence"], "n_facade_indicators": 2, "notes": "ok"}',
     None, "valid"),
    ("valid_p1_none_visible", 1,
     '{"structure_type": "none_visible", "facade_indicators": [], '
     '"n_facade_indicators": 0}',
     None, "valid"),
    ("valid_p2_basic", 2,
     '{"env_indicators": ["debris", "potholes"], "n_env_indicators": 2, '
     '"canopy_indicators": ["tree"], "n_canopy_indicators": 1}',
     None, "valid"),
    ("valid_p2_empty", 2,
     '{"env_indicators": [], "n_env_indicators": 0, '
     '"canopy_indicators": [], "n_canopy_indicators": 0}',
     None, "valid"),
    ("valid_p3_low_inside", 3,
     '{"canopy_band": "low", "canopy_share_0_1": 0.31, "notes": ""}',
     {"n_canopy_indicators": 1}, "valid"),
    ("valid_p3_unknown_null", 3,
     '{"canopy_band": "unknown", "canopy_share_0_1": null}',
     {"n_canopy_indicators": 0}, "valid"),
    ("valid_p3_legal_zero", 3,
     '{"canopy_band": "very_low", "canopy_share_0_1": 0.00}',
     {"n_canopy_indicators": 0}, "valid"),
    ("valid_p3_zero_no_context", 3,
     '{"canopy_band": "very_low", "canopy_share_0_1": 0.0}',
     None, "valid"),
    ("valid_p3_high_no_context", 3,
     '{"canopy_band": "high", "canopy_share_0_1": 0.66}',
     None, "valid"),
    ("valid_p4_moderate", 4,
     '{"poverty_band": "moderate", "poverty_proxy_0_1": 0.47, "evidence_counts": '
     '{"n_facade_indicators": 2, "n_env_indicators": 3}}',
     {"n_facade_indicators": 2, "n_env_indicators": 3}, "valid"),
    ("valid_p4_legal_zero", 4,
     '{"poverty_band": "very_low", "poverty_proxy_0_1": 0.00, "evidence_counts": '
     '{"n_facade_indicators": 0, "n_env_indicators": 0}}',
     {"n_facade_indicators": 0, "n_env_indicators": 0}, "valid"),
    ("valid_p4_very_high", 4,
     '{"poverty_band": "very_high", "poverty_proxy_0_1": 0.99, "evidence_counts": '
     '{"n_facade_indicators": 4, "n_env_indicators": 5}}',
     None, "valid"),
    ("valid_p4_one_decimal", 4,
     '{"poverty_band": "moderate", "poverty_proxy_0_1": 0.5, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 1}}',
     None, "valid"),
    ("valid_p4_unknown_with_evidence", 4,
     '{"poverty_band": "unknown", "poverty_proxy_0_1": null, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 2}}',
     None, "valid"),

    # --- band cutpoints ----------------------------------------------------
    ("cutpoint_p3_020", 3,
     '{"canopy_band": "low", "canopy_share_0_1": 0.20}',
     {"n_canopy_indicators": 1}, "BandCutpoint"),
    ("cutpoint_p3_040", 3,
     '{"canopy_band": "low", "canopy_share_0_1": 0.40}',
     None, "BandCutpoint"),
    ("cutpoint_p4_060", 4,
     '{"poverty_band": "moderate", "poverty_proxy_0_1": 0.60, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 1}}',
     None, "BandCutpoint"),
    ("cutpoint_p4_080", 4,
     '{"poverty_band": "high", "poverty_proxy_0_1": 0.80, "evidence_counts": '
     '{"n_facade_indicators": 2, "n_env_indicators": 2}}',
     None, "BandCutpoint"),
    ("cutpoint_p3_100", 3,
     '{"canopy_band": "very_high", "canopy_share_0_1": 1.00}',
     None, "BandCutpoint"),
    ("cutpoint_p4_100", 4,
     '{"poverty_band": "very_high", "poverty_proxy_0_1": 1.0, "evidence_counts": '
     '{"n_facade_indicators": 3, "n_env_indicators": 4}}',
     None, "BandCutpoint"),

    # --- exact-zero rule ---------------------------------------------------
    ("illegal_zero_p4_env", 4,
     '{"poverty_band": "very_low", "poverty_proxy_0_1": 0.00, "evidence_counts": '
     '{"n_facade_indicators": 0, "n_env_indicators": 2}}',
     None, "IllegalZero"),
    ("illegal_zero_p4_facade", 4,
     '{"poverty_band": "very_low", "poverty_proxy_0_1": 0.0, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 0}}',
     None, "IllegalZero"),
    ("illegal_zero_p3_with_canopy", 3,
     '{"canopy_band": "very_low", "canopy_share_0_1": 0.00}',
     {"n_canopy_indicators": 2}, "IllegalZero"),
    ("zero_wrong_band_p4", 4,
     '{"poverty_band": "low", "poverty_proxy_0_1": 0.00, "evidence_counts": '
     '{"n_facade_indicators": 0, "n_env_indicators": 0}}',
     None, "BandValueMismatch"),

    # --- unknown-band nullability -------------------------------------------
    ("unknown_with_value_p3", 3,
     '{"canopy_band": "unknown", "canopy_share_0_1": 0.30}',
     None, "SchemaViolation"),
    ("unknown_with_zero_p4", 4,
     '{"poverty_band": "unknown", "poverty_proxy_0_1": 0.00, "evidence_counts": '
     '{"n_facade_indicators": 0, "n_env_indicators": 0}}',
     None, "SchemaViolation"),
    ("null_without_unknown_p3", 3,
     '{"canopy_band": "moderate", "canopy_share_0_1": null}',
     None, "SchemaViolation"),

    # --- token typos ---------------------------------------------------------
    ("typo_structure", 1,
     '{"structure_type": "single_family", "facade_indicators": [], '
     '"n_facade_indicators": 0}',
     None, "UnknownToken"),
    ("typo_structure_case", 1,
     '{"structure_type": "Apartment", "facade_indicators": [], '
     '"n_facade_indicators": 0}',
     None, "UnknownToken"),
    ("typo_env_token", 2,
     '{"env_indicators": ["dirt_lot", "overgrown"], "n_env_indicators": 2, '
     '"canopy_indicators": [], "n_canopy_indicators": 0}',
     None, "UnknownToken"),
    ("typo_canopy_token", 2,
     '{"env_indicators": [], "n_env_indicators": 0, '
     '"canopy_indicators": ["tree", "bush"], "n_canopy_indicators": 2}',
     None, "UnknownToken"),
    ("typo_band_name", 3,
     '{"canopy_band": "lowish", "canopy_share_0_1": 0.31}',
     None, "UnknownToken"),

    # --- count mismatches ----------------------------------------------------
    ("count_p1_over", 1,
     '{"structure_type": "duplex", "facade_indicators": ["peeling_paint", '
     '"graffiti"], "n_facade_indicators": 3}',
     None, "CountMismatch"),
    ("count_p1_under", 1,
     '{"structure_type": "duplex", "facade_indicators": [], '
     '"n_facade_indicators": 1}',
     None, "CountMismatch"),
    ("count_p2_env", 2,
     '{"env_indicators": ["debris"], "n_env_indicators": 2, '
     '"canopy_indicators": [], "n_canopy_indicators": 0}',
     None, "CountMismatch"),
    ("count_p2_canopy", 2,
     '{"env_indicators": [], "n_env_indicators": 0, '
     '"canopy_indicators": ["tree", "palm"], "n_canopy_indicators": 1}',
     None, "CountMismatch"),
    ("count_p4_echo", 4,
     '{"poverty_band": "moderate", "poverty_proxy_0_1": 0.45, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 2}}',
     {"n_facade_indicators": 2, "n_env_indicators": 2}, "CountMismatch"),

    # --- not JSON -------------------------------------------------------------
    ("notjson_prose", 1, "The house looks well kept, no JSON needed.", None, "NotJson"),
    ("notjson_truncated", 1, '{"structure_type": "apartment"', None, "NotJson"),
    ("notjson_array", 2, "[1, 2, 3]", None, "NotJson"),
    ("notjson_trailing", 3,
     '{"canopy_band": "low", "canopy_share_0_1": 0.31} thanks!', None, "NotJson"),

    # --- structural schema violations ------------------------------------------
    ("schema_p1_missing_count", 1,
     '{"structure_type": "apartment", "facade_indicators": []}',
     None, "SchemaViolation"),
    ("schema_p1_list_type", 1,
     '{"structure_type": "apartment", "facade_indicators": "peeling_paint", '
     '"n_facade_indicators": 1}',
     None, "SchemaViolation"),
    ("schema_p1_bool_count", 1,
     '{"structure_type": "apartment", "facade_indicators": [], '
     '"n_facade_indicators": true}',
     None, "SchemaViolation"),
    ("schema_p2_string_count", 2,
     '{"env_indicators": ["debris"], "n_env_indicators": "1", '
     '"canopy_indicators": [], "n_canopy_indicators": 0}',
     None, "SchemaViolation"),
    ("schema_p2_negative_count", 2,
     '{"env_indicators": [], "n_env_indicators": -1, '
     '"canopy_indicators": [], "n_canopy_indicators": 0}',
     None, "SchemaViolation"),
    ("schema_p1_long_notes", 1,
     '{"structure_type": "apartment", "facade_indicators": [], '
     '"n_facade_indicators": 0, "notes": "'
     + "x" * 120
     + '"}',
     None, "SchemaViolation"),
    ("schema_p4_missing_counts", 4,
     '{"poverty_band": "low", "poverty_proxy_0_1": 0.31}',
     None, "SchemaViolation"),
    ("schema_p4_partial_counts", 4,
     '{"poverty_band": "low", "poverty_proxy_0_1": 0.31, "evidence_counts": '
     '{"n_facade_indicators": 1}}',
     None, "SchemaViolation"),
    ("schema_p3_above_one", 3,
     '{"canopy_band": "very_high", "canopy_share_0_1": 1.2}',
     None, "SchemaViolation"),
    ("schema_p3_negative", 3,
     '{"canopy_band": "very_low", "canopy_share_0_1": -0.1}',
     None, "SchemaViolation"),
    ("schema_p3_three_decimals", 3,
     '{"canopy_band": "low", "canopy_share_0_1": 0.213}',
     None, "SchemaViolation"),
    ("schema_p4_three_decimals", 4,
     '{"poverty_band": "low", "poverty_proxy_0_1": 0.335, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 1}}',
     None, "SchemaViolation"),

    # --- value outside the declared band -----------------------------------------
    ("band_mismatch_p3_low", 3,
     '{"canopy_band": "low", "canopy_share_0_1": 0.45}',
     None, "BandValueMismatch"),
    ("band_mismatch_p3_high", 3,
     '{"canopy_band": "high", "canopy_share_0_1": 0.55}',
     None, "BandValueMismatch"),
    ("band_mismatch_p4_very_low", 4,
     '{"poverty_band": "very_low", "poverty_proxy_0_1": 0.25, "evidence_counts": '
     '{"n_facade_indicators": 1, "n_env_indicators": 0}}',
     None, "BandValueMismatch"),
]
