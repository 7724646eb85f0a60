"""Geographic/pixel transforms and orthographic reprojection."""

import numpy as np
import pytest

from craterseg.geo import (
    GeoBounds,
    MosaicMeta,
    PixelRect,
    TileProjection,
    bounds_to_pixels,
    crop_tile,
    ortho_forward,
    ortho_inverse,
    ortho_project_tile,
    round_half_away,
)


def meta_2px_per_deg() -> MosaicMeta:
    return MosaicMeta.global_mosaic(2.0, 100.0)


class TestBoundsToPixels:
    def test_quarter_tile(self):
        rect = bounds_to_pixels(meta_2px_per_deg(), GeoBounds(0, 90, 0, 45))
        assert (rect.x1, rect.x2) == (360, 540)
        assert (rect.y1, rect.y2) == (180, 90)

    def test_identity_crop(self):
        meta = meta_2px_per_deg()
        rect = bounds_to_pixels(meta, meta.bounds)
        assert (rect.x1, rect.x2) == (0, 720)
        assert (rect.y1, rect.y2) == (360, 0)

    def test_northwest_corner(self):
        rect = bounds_to_pixels(meta_2px_per_deg(), GeoBounds(-180, -90, 45, 90))
        assert (rect.x1, rect.x2) == (0, 180)
        assert (rect.y1, rect.y2) == (90, 0)

    @pytest.mark.parametrize(
        ("bounds", "edge"),
        [
            (GeoBounds(-60, 30, 10, 20), "lon_min"),
            (GeoBounds(-30, 60, 10, 20), "lon_max"),
            (GeoBounds(0, 30, -10, 20), "lat_min"),
            (GeoBounds(0, 30, 10, 40), "lat_max"),
        ],
    )
    def test_out_of_bounds_names_edge(self, bounds, edge):
        src = MosaicMeta(
            width_px=180,
            height_px=60,
            bounds=GeoBounds(-45, 45, -5, 25),
            px_per_deg_x=2.0,
            px_per_deg_y=2.0,
            meters_per_px=100.0,
        )
        with pytest.raises(ValueError, match=edge):
            bounds_to_pixels(src, bounds)

    def test_doubling_resolution_doubles_every_limit(self):
        out = GeoBounds(3.0, 47.0, -22.0, 11.0)
        r1 = bounds_to_pixels(MosaicMeta.global_mosaic(2.0, 100.0), out)
        r2 = bounds_to_pixels(MosaicMeta.global_mosaic(4.0, 100.0), out)
        assert (r2.x1, r2.y1, r2.x2, r2.y2) == (2 * r1.x1, 2 * r1.y1, 2 * r1.x2, 2 * r1.y2)

    def test_rounding_is_half_away_from_zero(self):
        assert round_half_away(1.5) == 2
        assert round_half_away(2.5) == 3
        assert round_half_away(-1.5) == -2
        assert round_half_away(0.4999) == 0
        # 1.5 px/deg puts the 15-degree edge at 22.5 px, which rounds up.
        src = MosaicMeta(
            width_px=540,
            height_px=270,
            bounds=GeoBounds(-180, 180, -90, 90),
            px_per_deg_x=1.5,
            px_per_deg_y=1.5,
            meters_per_px=100.0,
        )
        rect = bounds_to_pixels(src, GeoBounds(-180, -165, 75, 90))
        assert rect.x2 == 23


class TestCropTile:
    def test_full_extent_identity(self):
        rng = np.random.default_rng(0)
        mosaic = rng.random((360, 720))
        out = crop_tile(mosaic, PixelRect(x1=0, y1=360, x2=720, y2=0))
        assert np.array_equal(out, mosaic)
        out[0, 0] = -1.0
        assert mosaic[0, 0] != -1.0  # crop is a copy

    def test_constant_patch(self):
        mosaic = np.full((50, 80), 3.25)
        out = crop_tile(mosaic, PixelRect(x1=0, y1=10, x2=10, y2=0))
        assert out.shape == (10, 10)
        assert np.all(out == 3.25)

    def test_gradient_indexing(self):
        yy, xx = np.mgrid[0:360, 0:720]
        mosaic = (yy * 1000 + xx).astype(np.float64)
        rect = PixelRect(x1=360, y1=180, x2=540, y2=90)
        out = crop_tile(mosaic, rect)
        assert out.shape == (90, 180)
        assert np.array_equal(out, mosaic[90:180, 360:540])

    def test_zero_area_rect_rejected(self):
        mosaic = np.zeros((10, 10))
        with pytest.raises(ValueError, match="zero-area"):
            crop_tile(mosaic, PixelRect(x1=3, y1=5, x2=3, y2=2))

    def test_rect_outside_extent_rejected(self):
        mosaic = np.zeros((10, 10))
        with pytest.raises(ValueError, match="outside"):
            crop_tile(mosaic, PixelRect(x1=5, y1=12, x2=8, y2=2))


class TestOrthoForward:
    def test_center_maps_to_origin(self):
        assert ortho_forward(12.0, -7.0, 12.0, -7.0) == (0.0, 0.0)

    def test_limb_point(self):
        x, y = ortho_forward(90.0, 0.0, 0.0, 0.0, radius=1.0)
        assert x == pytest.approx(1.0, abs=1e-15)
        assert y == pytest.approx(0.0, abs=1e-15)

    def test_snyder_formula_values(self):
        # cos(10 deg) * sin(10 deg) and sin(10 deg), frozen from direct evaluation
        x, y = ortho_forward(10.0, 10.0, 0.0, 0.0, radius=1.0)
        assert x == pytest.approx(0.17101007166283433, abs=1e-12)
        assert y == pytest.approx(0.17364817766693033, abs=1e-12)

    def test_far_hemisphere_rejected(self):
        with pytest.raises(ValueError, match="far hemisphere"):
            ortho_forward(135.0, 0.0, -90.0, 0.0)

    def test_radius_scales_linearly(self):
        x1, y1 = ortho_forward(10.0, 20.0, 0.0, 0.0, radius=1.0)
        x2, y2 = ortho_forward(10.0, 20.0, 0.0, 0.0, radius=2.5)
        assert x2 == pytest.approx(2.5 * x1)
        assert y2 == pytest.approx(2.5 * y1)


class TestOrthoRoundTrip:
    def test_round_trip_interior_grid(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            lon0 = float(rng.uniform(-180, 180))
            lat0 = float(rng.uniform(-85, 85))
            worst = 0.0
            for dlon in np.linspace(-30, 30, 20):
                for dlat in np.linspace(-30, 30, 20):
                    lon = lon0 + dlon
                    lat = float(np.clip(lat0 + dlat, -89.0, 89.0))
                    x, y = ortho_forward(lon, lat, lon0, lat0)
                    lon2, lat2 = ortho_inverse(x, y, lon0, lat0)
                    dl = abs((lon2 - lon + 180.0) % 360.0 - 180.0)
                    worst = max(worst, dl, abs(lat2 - lat))
            assert worst < 1e-9

    def test_outside_disk_rejected(self):
        with pytest.raises(ValueError, match="disk"):
            ortho_inverse(1.2, 0.0, 0.0, 0.0)


class TestOrthoProjectTile:
    def small_meta(self):
        return MosaicMeta.global_mosaic(303.0, 100.0)

    def equatorial_bounds(self, n):
        span = n / 303.0
        return GeoBounds(-span / 2, span / 2, -span / 2, span / 2)

    def test_center_lines_unchanged(self):
        meta = self.small_meta()
        n = 64
        bounds = self.equatorial_bounds(n)
        yy, xx = np.mgrid[0:n, 0:n].astype(float)
        tile = 0.5 + 0.3 * np.sin(2 * np.pi * xx / 61.0) * np.cos(2 * np.pi * yy / 43.0)
        out = ortho_project_tile(tile, meta, bounds)
        mid = n // 2
        assert np.abs(out[mid] - tile[mid]).max() < 1e-6
        assert np.abs(out[:, mid] - tile[:, mid]).max() < 1e-6

    def test_constant_tile_stays_constant(self):
        meta = self.small_meta()
        n = 32
        out = ortho_project_tile(np.full((n, n), 0.7), meta, self.equatorial_bounds(n))
        assert np.allclose(out, 0.7, atol=1e-12)

    def test_value_range_invariant(self):
        meta = self.small_meta()
        n = 48
        rng = np.random.default_rng(5)
        tile = rng.uniform(0.2, 0.9, (n, n))
        out = ortho_project_tile(tile, meta, self.equatorial_bounds(n))
        assert out.min() >= 0.0
        assert out.max() <= tile.max() + 1e-12

    def test_shape_mismatch_rejected(self):
        meta = self.small_meta()
        with pytest.raises(ValueError, match="does not match"):
            ortho_project_tile(np.zeros((16, 16)), meta, self.equatorial_bounds(64))

    def test_hemisphere_overflow_rejected(self):
        meta = MosaicMeta.global_mosaic(1.0, 100.0)
        bounds = GeoBounds(-100.0, 100.0, -80.0, 80.0)
        tile = np.zeros((160, 200))
        with pytest.raises(ValueError, match="hemisphere"):
            ortho_project_tile(tile, meta, bounds)

    def test_high_latitude_ellipse_becomes_circular(self):
        # A circle of angular radius alpha at 60 deg latitude appears in the
        # Plate Carree source stretched by 1/cos(60) = 2 in longitude; the
        # reprojected ring should fit an ellipse with axis ratio close to 1.
        ppd = 4.0
        meta = MosaicMeta.global_mosaic(ppd, 100.0)
        n = 128
        span = n / ppd
        lat_c = 60.0
        bounds = GeoBounds(-span / 2, span / 2, lat_c - span / 2, lat_c + span / 2)
        alpha = 4.0
        tile = np.zeros((n, n))
        for th in np.linspace(0, 2 * np.pi, 4000, endpoint=False):
            lon = alpha / np.cos(np.radians(lat_c)) * np.cos(th)
            lat = lat_c + alpha * np.sin(th)
            xi = int(round((lon - bounds.lon_min) * ppd - 0.5))
            yi = int(round((bounds.lat_max - lat) * ppd - 0.5))
            if 0 <= xi < n and 0 <= yi < n:
                tile[yi, xi] = 1.0

        assert self._fit_axis_ratio(tile) > 1.8  # sanity: source is stretched
        out = ortho_project_tile(tile, meta, bounds)
        assert abs(self._fit_axis_ratio(out) - 1.0) < 0.1

    @staticmethod
    def _fit_axis_ratio(img: np.ndarray) -> float:
        """Least-squares conic fit a*x^2 + b*xy + c*y^2 = 1; returns axis ratio."""
        ys, xs = np.nonzero(img > 0.5)
        x = xs - xs.mean()
        y = ys - ys.mean()
        design = np.stack([x * x, x * y, y * y], axis=1)
        coef, *_ = np.linalg.lstsq(design, np.ones_like(x, dtype=float), rcond=None)
        a, b, c = coef
        ev = np.linalg.eigvalsh(np.array([[a, b / 2], [b / 2, c]]))
        return float(np.sqrt(ev[1] / ev[0]))


class TestTileProjection:
    def test_center_maps_to_center_pixel(self):
        meta = MosaicMeta.global_mosaic(2.0, 100.0)
        bounds = GeoBounds(10.0, 74.0, -16.0, 48.0)
        proj = TileProjection.for_tile(meta, bounds)
        x, y = proj.geo_to_pixel(bounds.center_lon, bounds.center_lat)
        assert x == pytest.approx((proj.width - 1) / 2, abs=1e-12)
        assert y == pytest.approx((proj.height - 1) / 2, abs=1e-12)

    def test_pixel_round_trip(self):
        meta = MosaicMeta.global_mosaic(2.0, 100.0)
        bounds = GeoBounds(10.0, 74.0, -16.0, 48.0)
        proj = TileProjection.for_tile(meta, bounds)
        for px, py in [(0.0, 0.0), (63.0, 12.0), (100.5, 90.25)]:
            lon, lat = proj.pixel_to_geo(px, py)
            x, y = proj.geo_to_pixel(lon, lat)
            assert x == pytest.approx(px, abs=1e-9)
            assert y == pytest.approx(py, abs=1e-9)


class TestValidation:
    def test_geobounds_invariants(self):
        with pytest.raises(ValueError):
            GeoBounds(10, 10, 0, 1)
        with pytest.raises(ValueError):
            GeoBounds(0, 1, 5, -5)
        with pytest.raises(ValueError):
            GeoBounds(-200, 0, 0, 1)
        with pytest.raises(ValueError):
            GeoBounds(0, 1, 0, 95)

    def test_mosaic_consistency(self):
        with pytest.raises(ValueError, match="width_px"):
            MosaicMeta(
                width_px=100,
                height_px=360,
                bounds=GeoBounds(-180, 180, -90, 90),
                px_per_deg_x=2.0,
                px_per_deg_y=2.0,
                meters_per_px=100.0,
            )

    def test_pixelrect_ordering(self):
        with pytest.raises(ValueError):
            PixelRect(x1=5, y1=0, x2=3, y2=0)
        with pytest.raises(ValueError):
            PixelRect(x1=0, y1=2, x2=3, y2=5)
