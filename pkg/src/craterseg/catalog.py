"""Crater catalogue model, geographic-to-pixel conversion, and ring-mask rasterization.

Catalogues are CSV files with header ``lon_deg,lat_deg,radius_km``. Ground
truth masks encode crater rims as one-pixel-thick circle outlines, matching
the ring templates used by the detector.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geo import GeoBounds, MosaicMeta, TileProjection

CATALOG_HEADER = ["lon_deg", "lat_deg", "radius_km"]
TRUTH_HEADER = ["tile_id", "x_px", "y_px", "r_px"]

MOON_RADIUS_KM = 1737.4


class CatalogParseError(ValueError):
    """Malformed catalogue file; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class CatalogEntry:
    """One catalogued crater: geographic centre and radius in kilometers."""

    lon_deg: float
    lat_deg: float
    radius_km: float

    def __post_init__(self) -> None:
        if self.radius_km <= 0:
            raise ValueError(f"radius_km must be positive, got {self.radius_km}")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"lat_deg out of [-90, 90]: {self.lat_deg}")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"lon_deg out of [-180, 180]: {self.lon_deg}")


@dataclass(frozen=True)
class PixelCrater:
    """Crater in tile pixel space: centre (x, y) and radius, all in pixels."""

    x_px: float
    y_px: float
    r_px: float

    def __post_init__(self) -> None:
        if self.r_px <= 0:
            raise ValueError(f"r_px must be positive, got {self.r_px}")


@dataclass
class Catalog:
    """A list of catalogue entries plus the body/mosaic they refer to."""

    entries: list[CatalogEntry]
    body_radius_km: float = MOON_RADIUS_KM
    source_meta: MosaicMeta | None = None

    def __post_init__(self) -> None:
        if self.body_radius_km <= 0:
            raise ValueError("body_radius_km must be positive")


def save_catalog(cat: Catalog, path: str | Path) -> None:
    """Write catalogue entries as CSV (full float precision, LF endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CATALOG_HEADER) + "\n")
        for e in cat.entries:
            fh.write(f"{e.lon_deg!r},{e.lat_deg!r},{e.radius_km!r}\n")


def load_catalog(
    path: str | Path,
    body_radius_km: float = MOON_RADIUS_KM,
    source_meta: MosaicMeta | None = None,
) -> Catalog:
    """Load a catalogue CSV; raises CatalogParseError on malformed rows."""
    entries: list[CatalogEntry] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CATALOG_HEADER:
            raise CatalogParseError(1, f"expected header {','.join(CATALOG_HEADER)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CatalogParseError(line_no, f"expected 3 fields, got {len(row)}")
            try:
                lon, lat, r = (float(v) for v in row)
            except ValueError as exc:
                raise CatalogParseError(line_no, f"non-numeric field in {row}") from exc
            if r <= 0:
                raise ValueError(f"radius_km must be positive, got {r} (line {line_no})")
            entries.append(CatalogEntry(lon, lat, r))
    return Catalog(entries=entries, body_radius_km=body_radius_km, source_meta=source_meta)


def to_tile_pixels(cat: Catalog, bounds: GeoBounds, meta: MosaicMeta) -> list[PixelCrater]:
    """Convert catalogue entries whose centres fall in ``bounds`` to tile pixels.

    Centres go through the orthographic tile projection; the radius converts
    at the tile-centre scale (radius_km * 1000 / meters_per_px).
    """
    proj = TileProjection.for_tile(meta, bounds)
    out: list[PixelCrater] = []
    for e in cat.entries:
        if not bounds.contains_point(e.lon_deg, e.lat_deg):
            continue
        x, y = proj.geo_to_pixel(e.lon_deg, e.lat_deg)
        r = e.radius_km * 1000.0 / meta.meters_per_px
        out.append(PixelCrater(x_px=x, y_px=y, r_px=r))
    return out


def rasterize_mask(
    craters: list[PixelCrater] | tuple[PixelCrater, ...],
    width: int,
    height: int,
    thickness: float = 1.0,
) -> np.ndarray:
    """Rasterize crater rims as circle outlines into a binary uint8 mask.

    Pixels whose centre lies within ``0.55 * thickness`` of a crater circle
    are 1; circles partially outside the grid are clipped. The 0.55 band
    (rather than 0.5) keeps the outline 8-connected and its pixel count
    tracking 2*pi*r even for lattice-aligned integer centres.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"mask dimensions must be positive, got {width}x{height}")
    mask = np.zeros((height, width), dtype=np.uint8)
    half = 0.55 * thickness
    for c in craters:
        x_lo = max(0, int(math.floor(c.x_px - c.r_px - half - 1)))
        x_hi = min(width, int(math.ceil(c.x_px + c.r_px + half + 2)))
        y_lo = max(0, int(math.floor(c.y_px - c.r_px - half - 1)))
        y_hi = min(height, int(math.ceil(c.y_px + c.r_px + half + 2)))
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        ys = np.arange(y_lo, y_hi, dtype=np.float64)[:, None]
        xs = np.arange(x_lo, x_hi, dtype=np.float64)[None, :]
        dist = np.hypot(xs - c.x_px, ys - c.y_px)
        mask[y_lo:y_hi, x_lo:x_hi] |= (np.abs(dist - c.r_px) <= half).astype(np.uint8)
    return mask


def write_truth_csv(path: str | Path, tiles: dict[str, list[PixelCrater]]) -> None:
    """Write per-tile pixel truth rows (``tile_id,x_px,y_px,r_px``)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(TRUTH_HEADER) + "\n")
        for tile_id, craters in tiles.items():
            for c in craters:
                fh.write(f"{tile_id},{c.x_px!r},{c.y_px!r},{c.r_px!r}\n")


def read_truth_csv(path: str | Path) -> dict[str, list[PixelCrater]]:
    """Read a per-tile truth CSV back into per-tile crater lists."""
    tiles: dict[str, list[PixelCrater]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRUTH_HEADER:
            raise CatalogParseError(1, f"expected header {','.join(TRUTH_HEADER)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CatalogParseError(line_no, f"expected 4 fields, got {len(row)}")
            tile_id = row[0]
            try:
                x, y, r = (float(v) for v in row[1:])
            except ValueError as exc:
                raise CatalogParseError(line_no, f"non-numeric field in {row}") from exc
            tiles.setdefault(tile_id, []).append(PixelCrater(x, y, r))
    return tiles
