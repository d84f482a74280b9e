import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import box

from placefx import naming
from placefx.aggregate import (
    ApproachAggregate,
    DegenerateVariance,
    EmptyInput,
    LengthMismatch,
    SampleSpec,
    build_panel,
    cbg_mean,
    standardize,
    sustainability_index,
)
from placefx.ingest import CbgRaw


def test_cbg_mean_weighted_example():
    assert cbg_mean([(0.2, 4), (0.5, 2)]) == pytest.approx(0.30)


def test_cbg_mean_single_pano_identity():
    assert cbg_mean([(0.25, 4)]) == pytest.approx(0.25)


def test_cbg_mean_equal_weights():
    assert cbg_mean([(0.1, 3), (0.3, 3)]) == pytest.approx(0.2)


def test_cbg_mean_empty():
    with pytest.raises(EmptyInput):
        cbg_mean([])
    with pytest.raises(EmptyInput):
        cbg_mean([(None, 4)])


@given(st.lists(st.tuples(st.floats(-10, 10), st.integers(1, 9)), min_size=1, max_size=20))
def test_cbg_mean_stays_within_input_range(pairs):
    m = cbg_mean(pairs)
    values = [v for v, _ in pairs]
    assert min(values) - 1e-12 <= m <= max(values) + 1e-12


def test_standardize_simple():
    assert standardize([1, 2, 3]) == pytest.approx([-1, 0, 1])


def test_standardize_degenerate():
    with pytest.raises(DegenerateVariance):
        standardize([2.0, 2.0, 2.0])
    with pytest.raises(DegenerateVariance):
        standardize([1.0])


def test_standardize_idempotent():
    z = standardize([4.0, 9.0, 1.0, 7.0])
    assert standardize(z) == pytest.approx(z)


@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=25).filter(
        lambda v: np.std(v, ddof=1) > 1e-6
    ),
    st.floats(0.01, 100),
    st.floats(-100, 100),
)
def test_standardize_location_scale_invariance(values, a, b):
    base = standardize(values)
    shifted = standardize([a * v + b for v in values])
    assert shifted == pytest.approx(base, abs=1e-8)


def test_sustainability_index_componentwise():
    si = sustainability_index([1, 0, -1], [-1, 0, 1])
    assert si.tolist() == [2, 0, -2]


def test_sustainability_index_zero_and_antisymmetry():
    assert sustainability_index([0.0, 0.0], [0.0, 0.0]).tolist() == [0.0, 0.0]
    a = np.array([0.3, -1.2, 0.9])
    b = np.array([-0.4, 0.8, 0.1])
    assert sustainability_index(a, b) == pytest.approx(-sustainability_index(b, a))


def test_sustainability_index_length_mismatch():
    with pytest.raises(LengthMismatch):
        sustainability_index([1, 2], [1, 2, 3])


def _cbg(cbg_id, group, pov, can, zip_code="z1"):
    return CbgRaw(
        cbg_id=cbg_id,
        acs_poverty=pov,
        geie_canopy=can,
        covariates={"pop_density_ln": 2.0},
        holc_group=group,
        zip_code=zip_code,
        geometry=box(0, 0, 1, 1),
    )


def _approx_table(ids, scale=1.0, offset=0.0):
    rng = np.random.default_rng(7)
    return {
        cid: ApproachAggregate(
            poverty=offset + scale * rng.uniform(0.05, 0.6),
            canopy=offset + scale * rng.uniform(0.02, 0.3),
            weight_images=int(rng.integers(10, 30)),
        )
        for cid in ids
    }


def _raw_sample(n_treated=4, n_ideal=6, n_bc=8):
    rng = np.random.default_rng(11)
    out = []
    for i in range(n_treated):
        out.append(_cbg(f"d{i}", naming.HOLC_REDLINED, rng.uniform(0.4, 0.8),
                        rng.uniform(0.02, 0.1), zip_code=f"z{i % 2}"))
    for i in range(n_ideal):
        out.append(_cbg(f"a{i}", naming.HOLC_IDEAL, rng.uniform(0.05, 0.2),
                        rng.uniform(0.1, 0.2), zip_code=f"z{2 + i % 2}"))
    for i in range(n_bc):
        out.append(_cbg(f"b{i}", naming.HOLC_STABLE_DECLINING, rng.uniform(0.2, 0.5),
                        rng.uniform(0.05, 0.15), zip_code=f"z{4 + i % 2}"))
    return out


def test_build_panel_rows_and_standardization():
    raw = _raw_sample()
    ids = [r.cbg_id for r in raw]
    panel, meta = build_panel(
        raw, _approx_table(ids), _approx_table(ids, scale=0.8),
        SampleSpec(comparison=naming.VS_IDEAL),
    )
    n_cbgs = meta["n_cbgs"]
    assert len(panel) == 3 * n_cbgs
    for approach in naming.APPROACHES:
        z = panel.loc[panel.approach == approach, "poverty_z"]
        assert abs(z.mean()) < 1e-9
        assert abs(z.std(ddof=1) - 1) < 1e-9
    # si is recomputed, not stored independently
    assert panel["si_z"].to_numpy() == pytest.approx(
        (panel["canopy_z"] - panel["poverty_z"]).to_numpy()
    )


def test_build_panel_comparison_filter_semantics():
    raw = _raw_sample()
    ids = [r.cbg_id for r in raw]
    panel, _ = build_panel(
        raw, _approx_table(ids), _approx_table(ids),
        SampleSpec(comparison=naming.VS_IDEAL),
    )
    assert set(panel["holc_group"]) == {naming.HOLC_REDLINED, naming.HOLC_IDEAL}


def test_build_panel_common_sample_rule():
    raw = _raw_sample()
    ids = [r.cbg_id for r in raw]
    mllm = _approx_table(ids)
    seg = _approx_table(ids)
    seg.pop("a0")  # missing one approach value
    panel, meta = build_panel(raw, mllm, seg, SampleSpec(comparison=naming.VS_IDEAL))
    assert "a0" not in set(panel["cbg_id"])
    sets = {
        approach: frozenset(panel.loc[panel.approach == approach, "cbg_id"])
        for approach in naming.APPROACHES
    }
    assert len(set(sets.values())) == 1
    assert {"cbg_id": "a0", "missing_approach": naming.SEGMENTATION} in meta["excluded"]


def test_build_panel_full_scope_differs_from_estimation_scope():
    raw = _raw_sample()
    ids = [r.cbg_id for r in raw]
    mllm, seg = _approx_table(ids), _approx_table(ids)
    est, _ = build_panel(raw, mllm, seg,
                         SampleSpec(comparison=naming.VS_IDEAL, standardization_scope="estimation"))
    full, _ = build_panel(raw, mllm, seg,
                          SampleSpec(comparison=naming.VS_IDEAL, standardization_scope="full"))
    assert set(est["cbg_id"]) == set(full["cbg_id"])
    assert not np.allclose(
        est.sort_values(["approach", "cbg_id"])["poverty_z"].to_numpy(),
        full.sort_values(["approach", "cbg_id"])["poverty_z"].to_numpy(),
    )
