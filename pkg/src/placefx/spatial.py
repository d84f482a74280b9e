"""Queen-contiguity spatial weights and matrix services for the SAR model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from shapely import STRtree
from shapely.geometry.base import BaseGeometry

from .validation import DimensionMismatch

log = logging.getLogger(__name__)

DEFAULT_SNAP_TOL = 1e-9


class InvalidGeometry(ValueError):
    def __init__(self, cbg_id: str, reason: str):
        self.cbg_id = cbg_id
        super().__init__(f"invalid geometry for {cbg_id}: {reason}")


@dataclass
class WeightsMatrix:
    """Binary and row-standardized queen-contiguity weights.

    ``binary`` is symmetric with a zero diagonal; ``row_std`` divides each
    row by its degree, so rows sum to 1 for connected units and 0 for
    islands.  Eigenvalues of ``row_std`` are computed lazily and cached:
    they feed the SAR log-determinant and the feasible interval for the
    spatial-lag parameter.
    """

    ids: tuple[str, ...]
    binary: np.ndarray
    row_std: np.ndarray
    islands: frozenset[str]
    _eigvals: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return int(self.binary.sum()) // 2

    def degrees(self) -> np.ndarray:
        return self.binary.sum(axis=1)

    def eigenvalues(self) -> np.ndarray:
        """Real spectrum of the row-standardized matrix, ascending.

        With symmetric binary weights A and degree matrix D, D^-1 A is
        similar to D^-1/2 A D^-1/2 on the non-island block, so the
        spectrum is real and can be obtained with a symmetric solver.
        Island rows contribute zero eigenvalues.
        """
        if self._eigvals is None:
            deg = self.degrees()
            live = deg > 0
            if not live.any():
                eig = np.zeros(self.n)
            else:
                a = self.binary[np.ix_(live, live)]
                dinv_sqrt = 1.0 / np.sqrt(deg[live])
                sym = a * dinv_sqrt[:, None] * dinv_sqrt[None, :]
                eig = np.concatenate(
                    [np.linalg.eigvalsh(sym), np.zeros(int((~live).sum()))]
                )
            self._eigvals = np.sort(eig)
        return self._eigvals

    def rho_interval(self, margin: float = 1e-6) -> tuple[float, float]:
        """Open interval on which I - rho*W stays nonsingular."""
        eig = self.eigenvalues()
        lo = 1.0 / eig[0] if eig[0] < 0 else -1.0
        hi = 1.0 / eig[-1] if eig[-1] > 0 else 1.0
        return lo + margin, hi - margin

    def neighbors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for i, cid in enumerate(self.ids):
            row = np.flatnonzero(self.binary[i])
            out[cid] = [self.ids[j] for j in row]
        return out

    def to_json_dict(self) -> dict:
        return {"ids": list(self.ids), "neighbors": self.neighbors()}

    @classmethod
    def from_neighbors(cls, ids, neighbors: dict[str, list[str]]) -> "WeightsMatrix":
        ids = tuple(ids)
        index = {cid: i for i, cid in enumerate(ids)}
        binary = np.zeros((len(ids), len(ids)))
        for cid, nbrs in neighbors.items():
            for other in nbrs:
                binary[index[cid], index[other]] = 1.0
        if not np.array_equal(binary, binary.T):
            raise ValueError("neighbor lists are not symmetric")
        return _finish_weights(ids, binary)

    def subset(self, keep_ids) -> "WeightsMatrix":
        """Restrict to keep_ids (in the given order), re-standardizing rows."""
        index = {cid: i for i, cid in enumerate(self.ids)}
        missing = [cid for cid in keep_ids if cid not in index]
        if missing:
            raise KeyError(f"ids not in weights matrix: {missing[:5]}")
        rows = [index[cid] for cid in keep_ids]
        binary = self.binary[np.ix_(rows, rows)].copy()
        return _finish_weights(tuple(keep_ids), binary)

    def resample(self, positions: np.ndarray, new_ids) -> "WeightsMatrix":
        """Weights for a with-replacement resample of the original units.

        Row p of the result corresponds to original unit positions[p]; a
        pair of resampled rows is adjacent iff their originals were, so
        duplicated units share their original neighbor structure (copies
        of the same unit are not neighbors of each other, matching the
        zero diagonal).
        """
        binary = self.binary[np.ix_(positions, positions)].copy()
        np.fill_diagonal(binary, 0.0)
        # resamples routinely orphan units; not worth a warning per draw
        return _finish_weights(tuple(new_ids), binary, warn_islands=False)


def _finish_weights(
    ids: tuple[str, ...], binary: np.ndarray, warn_islands: bool = True
) -> WeightsMatrix:
    np.fill_diagonal(binary, 0.0)
    deg = binary.sum(axis=1)
    row_std = np.zeros_like(binary)
    live = deg > 0
    row_std[live] = binary[live] / deg[live, None]
    islands = frozenset(cid for cid, d in zip(ids, deg) if d == 0)
    if islands and warn_islands:
        # islands stay in the sample with zero rows: they behave like
        # unlagged observations in the SAR fit
        log.warning(
            "weights matrix has %d island(s) with no neighbors: %s",
            len(islands),
            sorted(islands)[:10],
        )
    return WeightsMatrix(ids=ids, binary=binary, row_std=row_std, islands=islands)


def queen_weights(geometries, snap_tol: float = DEFAULT_SNAP_TOL) -> WeightsMatrix:
    """Build queen-contiguity weights from a mapping cbg_id -> polygon.

    Two units are neighbors when their polygons come within ``snap_tol``
    of each other (sharing a vertex or an edge counts; the tolerance
    absorbs floating-point slivers in real boundary files).  Row order
    follows the order of the input mapping.
    """
    ids = tuple(geometries)
    geoms = []
    for cid in ids:
        geom = geometries[cid]
        if not isinstance(geom, BaseGeometry):
            raise InvalidGeometry(cid, f"not a geometry ({type(geom).__name__})")
        if geom.is_empty:
            raise InvalidGeometry(cid, "empty geometry")
        if geom.geom_type not in ("Polygon", "MultiPolygon"):
            raise InvalidGeometry(cid, f"unsupported type {geom.geom_type}")
        if not geom.is_valid:
            raise InvalidGeometry(cid, "self-intersecting or otherwise invalid")
        geoms.append(geom)

    n = len(ids)
    binary = np.zeros((n, n))
    if n > 1:
        tree = STRtree(geoms)
        left, right = tree.query(geoms, predicate="dwithin", distance=snap_tol)
        mask = left != right
        binary[left[mask], right[mask]] = 1.0
        binary = np.maximum(binary, binary.T)
    return _finish_weights(ids, binary)


def spatial_lag(weights: WeightsMatrix, y) -> np.ndarray:
    """Row-standardized lag W @ y (zero for islands)."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != weights.n:
        raise DimensionMismatch(
            f"y has {y.shape[0]} rows but weights cover {weights.n} units"
        )
    return weights.row_std @ y
