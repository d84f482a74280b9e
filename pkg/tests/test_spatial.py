import numpy as np
import pytest
from shapely.geometry import Point, box

from placefx.simgen import grid_geometries
from placefx.spatial import (
    InvalidGeometry,
    WeightsMatrix,
    queen_weights,
    spatial_lag,
)
from placefx.validation import DimensionMismatch


@pytest.fixture(scope="module")
def grid3():
    return queen_weights(grid_geometries(3, 3))


def test_queen_grid_degree_sequence(grid3):
    degrees = sorted(grid3.degrees().tolist())
    assert degrees == [3, 3, 3, 3, 5, 5, 5, 5, 8]


def test_queen_grid_center_has_eight_neighbors(grid3):
    nbrs = grid3.neighbors()
    center = grid3.ids[4]
    assert len(nbrs[center]) == 8
    corner = grid3.ids[0]
    assert len(nbrs[corner]) == 3


def test_row_sums_exactly_one_for_connected(grid3):
    sums = grid3.row_std.sum(axis=1)
    assert np.abs(sums - 1.0).max() < 1e-12


def test_disjoint_squares_are_islands():
    w = queen_weights({"a": box(0, 0, 1, 1), "b": box(2, 0, 3, 1)})
    assert w.islands == {"a", "b"}
    assert w.row_std.sum() == 0.0


def test_binary_symmetric_zero_diagonal(grid3):
    assert np.array_equal(grid3.binary, grid3.binary.T)
    assert np.all(np.diag(grid3.binary) == 0)


def test_invalid_geometry_rejected():
    with pytest.raises(InvalidGeometry):
        queen_weights({"a": Point(0, 0)})
    with pytest.raises(InvalidGeometry):
        queen_weights({"a": box(0, 0, 1, 1).boundary})


def test_relabeling_equivariance():
    geoms = grid_geometries(3, 4)
    w = queen_weights(geoms)
    ids = list(geoms)
    perm = [ids[i] for i in np.random.default_rng(4).permutation(len(ids))]
    w2 = queen_weights({cid: geoms[cid] for cid in perm})
    idx = [perm.index(cid) for cid in ids]
    assert np.array_equal(w2.binary[np.ix_(idx, idx)], w.binary)


def test_spectral_radius_is_one_with_edges():
    for dims in ((3, 3), (4, 6), (7, 7)):
        w = queen_weights(grid_geometries(*dims))
        assert abs(w.eigenvalues()[-1] - 1.0) < 1e-8


def test_eigen_logdet_matches_dense_determinant():
    w = queen_weights(grid_geometries(5, 5))
    eig = w.eigenvalues()
    lo, hi = w.rho_interval()
    rng = np.random.default_rng(0)
    for rho in rng.uniform(lo, hi, size=20):
        direct = np.linalg.slogdet(np.eye(w.n) - rho * w.row_std)[1]
        via_eig = np.sum(np.log1p(-rho * eig))
        assert abs(direct - via_eig) < 1e-8


def test_spatial_lag_constant_vector(grid3):
    y = np.full(grid3.n, 3.25)
    assert spatial_lag(grid3, y) == pytest.approx(y)


def test_spatial_lag_island_rows_zero():
    w = queen_weights({"a": box(0, 0, 1, 1), "b": box(2, 0, 3, 1)})
    assert spatial_lag(w, np.array([5.0, 7.0])).tolist() == [0.0, 0.0]


def test_spatial_lag_two_cycle_swaps():
    w = WeightsMatrix.from_neighbors(["a", "b"], {"a": ["b"], "b": ["a"]})
    assert spatial_lag(w, np.array([1.0, 3.0])).tolist() == [3.0, 1.0]


def test_spatial_lag_dimension_mismatch(grid3):
    with pytest.raises(DimensionMismatch):
        spatial_lag(grid3, np.ones(5))


def test_neighbors_json_round_trip(grid3):
    doc = grid3.to_json_dict()
    rebuilt = WeightsMatrix.from_neighbors(doc["ids"], doc["neighbors"])
    assert rebuilt.ids == grid3.ids
    assert np.array_equal(rebuilt.binary, grid3.binary)
    assert np.allclose(rebuilt.row_std, grid3.row_std)


def test_subset_restandardizes_rows(grid3):
    keep = [grid3.ids[i] for i in (0, 1, 4, 8)]
    sub = grid3.subset(keep)
    deg = sub.binary.sum(axis=1)
    live = deg > 0
    assert np.abs(sub.row_std[live].sum(axis=1) - 1.0).max() < 1e-12


def test_resample_copies_share_neighbors(grid3):
    positions = np.array([4, 4, 0, 8])
    w = grid3.resample(positions, ["r0", "r1", "r2", "r3"])
    # the two copies of the center are not each other's neighbors
    assert w.binary[0, 1] == 0
    # both center copies are adjacent to the corner copies
    assert w.binary[0, 2] == 1 and w.binary[1, 2] == 1
    assert np.array_equal(w.binary, w.binary.T)


def test_snap_tolerance_bridges_slivers():
    # a 1e-12 gap is within the default snap tolerance, a 0.1 gap is not
    w_close = queen_weights({"a": box(0, 0, 1, 1), "b": box(1 + 1e-12, 0, 2, 1)})
    assert w_close.binary[0, 1] == 1
    w_far = queen_weights({"a": box(0, 0, 1, 1), "b": box(1.1, 0, 2, 1)})
    assert w_far.binary[0, 1] == 0
