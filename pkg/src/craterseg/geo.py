"""Geographic <-> pixel transforms for tile cropping and orthographic reprojection.

Source mosaics are Plate Carree (equirectangular): longitude and latitude map
linearly to pixel columns and rows. Tiles cropped at high latitude are
stretched horizontally by 1/cos(lat); reprojecting each tile through an
orthographic mapping centred on the tile removes that warp. The body is
modelled as a sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_DEG = math.pi / 180.0


def round_half_away(value: float) -> int:
    """Round to nearest integer, halves away from zero."""
    if value >= 0.0:
        return int(math.floor(value + 0.5))
    return int(math.ceil(value - 0.5))


@dataclass(frozen=True)
class GeoBounds:
    """Geographic rectangle in degrees; lon in [-180, 180], lat in [-90, 90]."""

    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float

    def __post_init__(self) -> None:
        if not self.lon_min < self.lon_max:
            raise ValueError(f"lon_min must be < lon_max, got [{self.lon_min}, {self.lon_max}]")
        if not self.lat_min < self.lat_max:
            raise ValueError(f"lat_min must be < lat_max, got [{self.lat_min}, {self.lat_max}]")
        if self.lon_min < -180.0 or self.lon_max > 180.0:
            raise ValueError(f"lon out of [-180, 180]: [{self.lon_min}, {self.lon_max}]")
        if self.lat_min < -90.0 or self.lat_max > 90.0:
            raise ValueError(f"lat out of [-90, 90]: [{self.lat_min}, {self.lat_max}]")

    @property
    def center_lon(self) -> float:
        return 0.5 * (self.lon_min + self.lon_max)

    @property
    def center_lat(self) -> float:
        return 0.5 * (self.lat_min + self.lat_max)

    @property
    def lon_span(self) -> float:
        return self.lon_max - self.lon_min

    @property
    def lat_span(self) -> float:
        return self.lat_max - self.lat_min

    def contains(self, other: GeoBounds) -> bool:
        return (
            other.lon_min >= self.lon_min
            and other.lon_max <= self.lon_max
            and other.lat_min >= self.lat_min
            and other.lat_max <= self.lat_max
        )

    def contains_point(self, lon: float, lat: float) -> bool:
        return self.lon_min <= lon <= self.lon_max and self.lat_min <= lat <= self.lat_max


@dataclass(frozen=True)
class MosaicMeta:
    """Pixel geometry of a Plate Carree mosaic.

    ``px_per_deg_x``/``px_per_deg_y`` are the horizontal/vertical raster
    resolutions; ``meters_per_px`` is the ground sampling distance at the
    scale the radius conversion uses.
    """

    width_px: int
    height_px: int
    bounds: GeoBounds
    px_per_deg_x: float
    px_per_deg_y: float
    meters_per_px: float

    def __post_init__(self) -> None:
        if min(self.width_px, self.height_px) <= 0:
            raise ValueError("mosaic dimensions must be positive")
        if self.px_per_deg_x <= 0 or self.px_per_deg_y <= 0 or self.meters_per_px <= 0:
            raise ValueError("resolutions must be positive")
        if not math.isclose(self.width_px, self.px_per_deg_x * self.bounds.lon_span, rel_tol=1e-9):
            raise ValueError("width_px inconsistent with px_per_deg_x and lon span")
        if not math.isclose(self.height_px, self.px_per_deg_y * self.bounds.lat_span, rel_tol=1e-9):
            raise ValueError("height_px inconsistent with px_per_deg_y and lat span")

    @classmethod
    def global_mosaic(cls, px_per_deg: float, meters_per_px: float) -> MosaicMeta:
        """Whole-body 2:1 mosaic with square pixels."""
        bounds = GeoBounds(-180.0, 180.0, -90.0, 90.0)
        return cls(
            width_px=round_half_away(px_per_deg * 360.0),
            height_px=round_half_away(px_per_deg * 180.0),
            bounds=bounds,
            px_per_deg_x=px_per_deg,
            px_per_deg_y=px_per_deg,
            meters_per_px=meters_per_px,
        )


@dataclass(frozen=True)
class PixelRect:
    """Pixel-coordinate crop limits: x1 <= x2 and y2 <= y1 (row 0 is the
    northern edge, so the y limit at lat_max is the smaller one)."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self) -> None:
        if self.x1 > self.x2:
            raise ValueError(f"x1 must be <= x2, got {self.x1} > {self.x2}")
        if self.y2 > self.y1:
            raise ValueError(f"y2 must be <= y1, got {self.y2} > {self.y1}")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y1 - self.y2


def bounds_to_pixels(src: MosaicMeta, out: GeoBounds) -> PixelRect:
    """Convert output geographic limits to pixel crop limits on the source mosaic.

    The horizontal limits scale by width/lon-span of the source; the vertical
    limits scale by height/lat-span, measured down from the northern edge.
    Results are rounded half-away-from-zero to integers.
    """
    src_b = src.bounds
    for edge in ("lon_min", "lon_max", "lat_min", "lat_max"):
        lo = edge.endswith("min")
        val = getattr(out, edge)
        if edge.startswith("lon"):
            bad = val < src_b.lon_min if lo else val > src_b.lon_max
        else:
            bad = val < src_b.lat_min if lo else val > src_b.lat_max
        if bad:
            raise ValueError(f"output bounds exceed source mosaic at edge {edge}: {val}")

    sx = src.width_px / src_b.lon_span
    sy = src.height_px / src_b.lat_span
    x1 = round_half_away(sx * (out.lon_min - src_b.lon_min))
    x2 = round_half_away(sx * (out.lon_max - src_b.lon_min))
    y1 = round_half_away(sy * (src_b.lat_max - out.lat_min))
    y2 = round_half_away(sy * (src_b.lat_max - out.lat_max))
    return PixelRect(x1=x1, y1=y1, x2=x2, y2=y2)


def crop_tile(mosaic: np.ndarray, rect: PixelRect) -> np.ndarray:
    """Copy the pixel rectangle ``rect`` out of a 2D mosaic array."""
    if mosaic.ndim != 2:
        raise ValueError(f"mosaic must be 2D, got shape {mosaic.shape}")
    h, w = mosaic.shape
    if rect.x1 < 0 or rect.y2 < 0 or rect.x2 > w or rect.y1 > h:
        raise ValueError(f"rect {rect} outside mosaic extent {w}x{h}")
    if rect.width == 0 or rect.height == 0:
        raise ValueError(f"zero-area crop rect: {rect}")
    return mosaic[rect.y2 : rect.y1, rect.x1 : rect.x2].copy()


def ortho_forward(lon, lat, center_lon: float, center_lat: float, radius: float = 1.0):
    """Forward orthographic projection of (lon, lat) degrees to plane coordinates.

    Accepts scalars or arrays. Points on the far hemisphere (angular distance
    from the projection centre beyond 90 degrees) raise ValueError.
    """
    lam = np.asarray(lon, dtype=np.float64) * _DEG
    phi = np.asarray(lat, dtype=np.float64) * _DEG
    lam0 = center_lon * _DEG
    phi1 = center_lat * _DEG

    cos_phi = np.cos(phi)
    sin_phi = np.sin(phi)
    cos_dlam = np.cos(lam - lam0)
    cos_c = math.sin(phi1) * sin_phi + math.cos(phi1) * cos_phi * cos_dlam
    if np.any(cos_c < -1e-12):
        raise ValueError(
            f"point on far hemisphere of projection centred at "
            f"({center_lon}, {center_lat})"
        )
    x = radius * cos_phi * np.sin(lam - lam0)
    y = radius * (math.cos(phi1) * sin_phi - math.sin(phi1) * cos_phi * cos_dlam)
    if np.ndim(lon) == 0 and np.ndim(lat) == 0:
        return float(x), float(y)
    return x, y


def ortho_inverse(x, y, center_lon: float, center_lat: float, radius: float = 1.0):
    """Inverse orthographic projection back to (lon, lat) degrees.

    Points outside the projection disk (hypot(x, y) > radius) raise ValueError.
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    rho2 = (xs / radius) ** 2 + (ys / radius) ** 2
    if np.any(rho2 > 1.0 + 1e-12):
        raise ValueError("point outside the orthographic projection disk")
    lon, lat = _ortho_inverse_unit(xs / radius, ys / radius, center_lon, center_lat)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(lon), float(lat)
    return lon, lat


def _ortho_inverse_unit(xu, yu, center_lon: float, center_lat: float):
    """Inverse mapping on the unit sphere; inputs assumed within the disk."""
    phi1 = center_lat * _DEG
    sin_phi1 = math.sin(phi1)
    cos_phi1 = math.cos(phi1)
    cos_c = np.sqrt(np.clip(1.0 - (xu * xu + yu * yu), 0.0, None))
    # sin(c)/rho == 1 on the unit sphere, so the usual rho factors cancel.
    lat = np.arcsin(np.clip(cos_c * sin_phi1 + yu * cos_phi1, -1.0, 1.0)) / _DEG
    lon = center_lon + np.arctan2(xu, cos_c * cos_phi1 - yu * sin_phi1) / _DEG
    return lon, lat


@dataclass(frozen=True)
class TileProjection:
    """Orthographic plane <-> pixel mapping for one tile.

    Pixel (x, y) has its centre at plane coordinates
    ``((x - (width-1)/2) / px_per_rad_x, ((height-1)/2 - y) / px_per_rad_y)``
    on the unit sphere, so the tile centre pixel sits at the projection
    centre and local scale at the centre matches the source raster.
    """

    center_lon: float
    center_lat: float
    px_per_rad_x: float
    px_per_rad_y: float
    width: int
    height: int

    @classmethod
    def for_tile(cls, meta: MosaicMeta, bounds: GeoBounds) -> TileProjection:
        rect = bounds_to_pixels(meta, bounds)
        return cls(
            center_lon=bounds.center_lon,
            center_lat=bounds.center_lat,
            px_per_rad_x=meta.px_per_deg_x / _DEG,
            px_per_rad_y=meta.px_per_deg_y / _DEG,
            width=rect.width,
            height=rect.height,
        )

    def geo_to_pixel(self, lon: float, lat: float) -> tuple[float, float]:
        px, py = ortho_forward(lon, lat, self.center_lon, self.center_lat, radius=1.0)
        x = 0.5 * (self.width - 1) + px * self.px_per_rad_x
        y = 0.5 * (self.height - 1) - py * self.px_per_rad_y
        return x, y

    def pixel_to_geo(self, x: float, y: float) -> tuple[float, float]:
        xu = (x - 0.5 * (self.width - 1)) / self.px_per_rad_x
        yu = (0.5 * (self.height - 1) - y) / self.px_per_rad_y
        return ortho_inverse(xu, yu, self.center_lon, self.center_lat, radius=1.0)


def _max_boundary_distance_deg(bounds: GeoBounds, n_samples: int = 64) -> float:
    """Largest angular distance from the bounds centre to its boundary."""
    lon0 = bounds.center_lon * _DEG
    lat0 = bounds.center_lat * _DEG
    t = np.linspace(0.0, 1.0, n_samples)
    lons = np.concatenate(
        [
            bounds.lon_min + t * bounds.lon_span,
            bounds.lon_min + t * bounds.lon_span,
            np.full(n_samples, bounds.lon_min),
            np.full(n_samples, bounds.lon_max),
        ]
    )
    lats = np.concatenate(
        [
            np.full(n_samples, bounds.lat_min),
            np.full(n_samples, bounds.lat_max),
            bounds.lat_min + t * bounds.lat_span,
            bounds.lat_min + t * bounds.lat_span,
        ]
    )
    cos_c = np.sin(lat0) * np.sin(lats * _DEG) + np.cos(lat0) * np.cos(lats * _DEG) * np.cos(
        lons * _DEG - lon0
    )
    return float(np.degrees(np.arccos(np.clip(cos_c.min(), -1.0, 1.0))))


def ortho_project_tile(tile: np.ndarray, meta: MosaicMeta, bounds: GeoBounds) -> np.ndarray:
    """Reproject a Plate Carree tile crop to an orthographic view of itself.

    The output has the same pixel dimensions; each output pixel is resampled
    bilinearly through the inverse orthographic mapping centred at the tile's
    geographic centre. Output pixels that map outside the source tile, or
    fall outside the valid projection disk, are zero.
    """
    tile = np.asarray(tile, dtype=np.float64)
    if tile.ndim != 2:
        raise ValueError(f"tile must be 2D, got shape {tile.shape}")
    rect = bounds_to_pixels(meta, bounds)
    h, w = tile.shape
    if (h, w) != (rect.height, rect.width):
        raise ValueError(
            f"tile shape {h}x{w} does not match bounds crop {rect.height}x{rect.width}"
        )
    if _max_boundary_distance_deg(bounds) >= 90.0:
        raise ValueError("tile bounds extend beyond the valid hemisphere of its centre")

    proj = TileProjection.for_tile(meta, bounds)
    xs = (np.arange(w, dtype=np.float64) - 0.5 * (w - 1)) / proj.px_per_rad_x
    ys = (0.5 * (h - 1) - np.arange(h, dtype=np.float64)) / proj.px_per_rad_y
    xu, yu = np.meshgrid(xs, ys)
    in_disk = xu * xu + yu * yu <= 1.0
    lon, lat = _ortho_inverse_unit(
        np.where(in_disk, xu, 0.0), np.where(in_disk, yu, 0.0), proj.center_lon, proj.center_lat
    )

    # Continuous source indices; pixel j is centred at lon_min + (j + 0.5)/ppd.
    sx = (lon - bounds.lon_min) * meta.px_per_deg_x - 0.5
    sy = (bounds.lat_max - lat) * meta.px_per_deg_y - 0.5

    # The source covers half a pixel beyond its outermost centres; clamp
    # samples inside that skirt to the edge value, zero-fill beyond it.
    inside = in_disk & (sx >= -0.5) & (sx <= w - 0.5) & (sy >= -0.5) & (sy <= h - 0.5)
    sxc = np.clip(sx, 0.0, w - 1.0)
    syc = np.clip(sy, 0.0, h - 1.0)
    x0 = np.clip(np.floor(sxc).astype(np.int64), 0, w - 2)
    y0 = np.clip(np.floor(syc).astype(np.int64), 0, h - 2)
    fx = sxc - x0
    fy = syc - y0
    val = (
        tile[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + tile[y0, x0 + 1] * fx * (1.0 - fy)
        + tile[y0 + 1, x0] * (1.0 - fx) * fy
        + tile[y0 + 1, x0 + 1] * fx * fy
    )
    return np.where(inside, val, 0.0)
