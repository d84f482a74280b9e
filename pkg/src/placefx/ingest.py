"""Readers and validators for all external inputs.

Everything downstream consumes the canonical records defined here:
panorama manifests (CSV), block-group outcomes and covariates (CSV plus
GeoJSON geometry), and per-panorama segmentation shares (CSV).  Loaders
are total over well-formed files; off-target-year rows are filtered, not
errors, and missing covariates become nulls to be resolved at model
build time.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from shapely.geometry import shape
from shapely.geometry.base import BaseGeometry

from . import naming

log = logging.getLogger(__name__)

VALID_HEADINGS = (0, 90, 180, 270)
MANIFEST_COLUMNS = ("pano_id", "cbg_id", "year", "heading", "valid", "image_ref")
SHARE_SUM_TOL = 1e-6


class IngestError(ValueError):
    pass


class MalformedRow(IngestError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateTile(IngestError):
    def __init__(self, pano_id: str, heading: int):
        self.pano_id = pano_id
        self.heading = heading
        super().__init__(f"panorama {pano_id} has two tiles at heading {heading}")


class MissingGeometry(IngestError):
    def __init__(self, cbg_id: str):
        self.cbg_id = cbg_id
        super().__init__(f"no geometry for cbg {cbg_id}")


class OutOfRangeFraction(IngestError):
    def __init__(self, fieldname: str, value: float):
        self.fieldname = fieldname
        self.value = value
        super().__init__(f"{fieldname}={value} outside [0, 1]")


class UnknownPanorama(IngestError):
    def __init__(self, pano_id: str):
        self.pano_id = pano_id
        super().__init__(f"segmentation row references unknown panorama {pano_id}")


@dataclass(frozen=True)
class TileRecord:
    heading: int
    valid: bool
    image_ref: str


@dataclass(frozen=True)
class PanoramaRecord:
    pano_id: str
    cbg_id: str
    capture_year: int
    tiles: tuple[TileRecord, ...]

    @property
    def n_valid_tiles(self) -> int:
        return sum(1 for t in self.tiles if t.valid)

    @property
    def valid_tiles(self) -> tuple[TileRecord, ...]:
        return tuple(t for t in self.tiles if t.valid)


@dataclass
class CbgRaw:
    cbg_id: str
    acs_poverty: float
    geie_canopy: float
    covariates: dict[str, float | None]
    holc_group: str
    zip_code: str
    geometry: BaseGeometry = field(repr=False)


@dataclass(frozen=True)
class SegmentationShares:
    pano_id: str
    class_shares: Mapping[str, float]
    canopy_share: float
    poverty_proxy: float


def _parse_bool(raw: str) -> bool | None:
    low = raw.strip().lower()
    if low in ("true", "1"):
        return True
    if low in ("false", "0"):
        return False
    return None


def load_manifest(path: str | Path, target_year: int = 2023) -> list[PanoramaRecord]:
    """Read a panorama manifest CSV and group rows into records.

    Rows whose capture year differs from ``target_year`` are dropped with
    a logged count.  A duplicated (pano_id, heading) pair raises
    DuplicateTile; anything unparseable raises MalformedRow with the
    offending line number.
    """
    path = Path(path)
    groups: dict[str, dict] = {}
    dropped_year = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(MANIFEST_COLUMNS) - set(reader.fieldnames):
            raise MalformedRow(1, f"header must contain {MANIFEST_COLUMNS}")
        for line_no, row in enumerate(reader, start=2):
            pano_id = (row.get("pano_id") or "").strip()
            cbg_id = (row.get("cbg_id") or "").strip()
            if not pano_id or not cbg_id:
                raise MalformedRow(line_no, "empty pano_id or cbg_id")
            try:
                year = int(row["year"])
                heading = int(row["heading"])
            except (KeyError, ValueError):
                raise MalformedRow(line_no, "year and heading must be integers") from None
            if heading not in VALID_HEADINGS:
                raise MalformedRow(line_no, f"heading {heading} not in {VALID_HEADINGS}")
            valid = _parse_bool(row.get("valid", ""))
            if valid is None:
                raise MalformedRow(line_no, f"valid flag {row.get('valid')!r} not boolean")
            if year != target_year:
                dropped_year += 1
                continue
            entry = groups.setdefault(
                pano_id, {"cbg_id": cbg_id, "year": year, "tiles": {}}
            )
            if entry["cbg_id"] != cbg_id:
                raise MalformedRow(
                    line_no, f"panorama {pano_id} assigned to two cbgs"
                )
            if heading in entry["tiles"]:
                raise DuplicateTile(pano_id, heading)
            entry["tiles"][heading] = TileRecord(
                heading=heading, valid=valid, image_ref=(row.get("image_ref") or "").strip()
            )
    if dropped_year:
        log.info("dropped %d manifest rows outside target year %d", dropped_year, target_year)
    records = [
        PanoramaRecord(
            pano_id=pid,
            cbg_id=entry["cbg_id"],
            capture_year=entry["year"],
            tiles=tuple(entry["tiles"][h] for h in sorted(entry["tiles"])),
        )
        for pid, entry in sorted(groups.items())
    ]
    return records


def write_manifest(records: Iterable[PanoramaRecord], path: str | Path) -> None:
    """Canonical manifest writer: sorted rows, lowercase booleans, LF endings."""
    rows = []
    for rec in sorted(records, key=lambda r: r.pano_id):
        for tile in rec.tiles:
            rows.append(
                (
                    rec.pano_id,
                    rec.cbg_id,
                    rec.capture_year,
                    tile.heading,
                    "true" if tile.valid else "false",
                    tile.image_ref,
                )
            )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        writer.writerows(rows)


def filter_cbgs(
    panos: Sequence[PanoramaRecord], min_images: int = 10
) -> tuple[set[str], set[str]]:
    """Split cbgs by whether their total valid-tile count reaches min_images."""
    if min_images < 1:
        raise ValueError("min_images must be >= 1")
    totals: dict[str, int] = {}
    for rec in panos:
        totals[rec.cbg_id] = totals.get(rec.cbg_id, 0) + rec.n_valid_tiles
    kept = {cbg for cbg, n in totals.items() if n >= min_images}
    dropped = set(totals) - kept
    return kept, dropped


def _parse_fraction(raw: str, fieldname: str, line_no: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(line_no, f"{fieldname} is not a number: {raw!r}") from None
    if not 0.0 <= value <= 1.0:
        raise OutOfRangeFraction(fieldname, value)
    return value


def load_geometries(path: str | Path) -> dict[str, BaseGeometry]:
    """GeoJSON FeatureCollection keyed by the cbg_id property."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    geoms: dict[str, BaseGeometry] = {}
    for feature in doc.get("features", []):
        props = feature.get("properties") or {}
        cbg_id = props.get("cbg_id")
        if cbg_id is None:
            continue
        geoms[str(cbg_id)] = shape(feature["geometry"])
    return geoms


def load_authoritative(
    path: str | Path,
    geometry_path: str | Path,
    canopy_path: str | Path | None = None,
    covariate_names: Sequence[str] = naming.COVARIATE_NAMES,
) -> list[CbgRaw]:
    """Load block-group outcomes, covariates, group labels, and geometry.

    ``path`` carries cbg_id, acs_poverty, holc_group, zip_code, and the
    covariate columns (blank cells become nulls).  Canopy may be a
    ``geie_canopy`` column in the same file or a separate two-column file
    passed as ``canopy_path``.  Geometry comes from the GeoJSON sidecar;
    a cbg without a feature raises MissingGeometry.
    """
    geoms = load_geometries(geometry_path)
    canopy_lookup: dict[str, float] | None = None
    if canopy_path is not None:
        canopy_lookup = {}
        with open(canopy_path, newline="", encoding="utf-8") as fh:
            for line_no, row in enumerate(csv.DictReader(fh), start=2):
                canopy_lookup[row["cbg_id"].strip()] = _parse_fraction(
                    row["geie_canopy"], "geie_canopy", line_no
                )

    out: list[CbgRaw] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for line_no, row in enumerate(reader, start=2):
            cbg_id = row["cbg_id"].strip()
            poverty = _parse_fraction(row["acs_poverty"], "acs_poverty", line_no)
            if canopy_lookup is not None:
                if cbg_id not in canopy_lookup:
                    raise MalformedRow(line_no, f"no canopy value for cbg {cbg_id}")
                canopy = canopy_lookup[cbg_id]
            else:
                canopy = _parse_fraction(row["geie_canopy"], "geie_canopy", line_no)
            holc = (row.get("holc_group") or naming.HOLC_UNASSIGNED).strip()
            if holc not in naming.HOLC_GROUPS:
                raise MalformedRow(line_no, f"unknown holc_group {holc!r}")
            covariates: dict[str, float | None] = {}
            for name in covariate_names:
                raw = (row.get(name) or "").strip()
                covariates[name] = float(raw) if raw else None
            if cbg_id not in geoms:
                raise MissingGeometry(cbg_id)
            out.append(
                CbgRaw(
                    cbg_id=cbg_id,
                    acs_poverty=poverty,
                    geie_canopy=canopy,
                    covariates=covariates,
                    holc_group=holc,
                    zip_code=(row.get("zip_code") or "").strip(),
                    geometry=geoms[cbg_id],
                )
            )
    out.sort(key=lambda r: r.cbg_id)
    return out


def load_segmentation(
    path: str | Path, known_panos: set[str]
) -> list[SegmentationShares]:
    """Per-panorama segmentation class shares.

    Class-share columns are prefixed ``share_``; each share must sit in
    [0, 1] and the shares of one panorama may not sum past 1 (within
    tolerance).  A pano_id absent from the manifest is rejected.
    """
    out: list[SegmentationShares] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        share_cols = [c for c in (reader.fieldnames or []) if c.startswith("share_")]
        for line_no, row in enumerate(reader, start=2):
            pano_id = row["pano_id"].strip()
            if pano_id not in known_panos:
                raise UnknownPanorama(pano_id)
            shares = {
                c[len("share_"):]: _parse_fraction(row[c], c, line_no)
                for c in share_cols
                if (row.get(c) or "").strip()
            }
            total = sum(shares.values())
            if total > 1.0 + SHARE_SUM_TOL:
                raise MalformedRow(line_no, f"class shares sum to {total:.6f} > 1")
            canopy = _parse_fraction(row["canopy_share"], "canopy_share", line_no)
            try:
                poverty = float(row["poverty_proxy"])
            except (KeyError, ValueError):
                raise MalformedRow(line_no, "poverty_proxy missing or non-numeric") from None
            out.append(
                SegmentationShares(
                    pano_id=pano_id,
                    class_shares=shares,
                    canopy_share=canopy,
                    poverty_proxy=poverty,
                )
            )
    out.sort(key=lambda r: r.pano_id)
    return out
