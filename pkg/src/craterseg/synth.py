"""Deterministic synthetic crater-field generator.

Produces image/mask/truth triples for two parameterized "bodies": a source
domain used for pretraining and a target domain used for fine-tuning. The two
domains share feature and label spaces but differ in crater frequency, size
distribution, contrast, and illumination, which is exactly the distribution
shift the transfer-learning experiment needs.

Rendering is intentionally simple: each crater adds a ring-shaped shading
term (bright crescent toward the sun azimuth, dark crescent opposite) with a
Gaussian radial falloff, then the whole tile gets Gaussian pixel noise and is
clamped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .catalog import PixelCrater, rasterize_mask, write_truth_csv
from .imageio import save_gray_png

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "dataset.txt"


@dataclass(frozen=True)
class BodyParams:
    """Knobs that make one synthetic body look unlike another."""

    crater_density: float = 6.0
    radius_min_px: float = 6.0
    radius_max_px: float = 20.0
    radius_powerlaw_exp: float = -2.0
    sun_azimuth_deg: float = 45.0
    sun_elevation_deg: float = 30.0
    albedo_noise_sigma: float = 0.04
    rim_contrast: float = 0.35

    def __post_init__(self) -> None:
        if self.crater_density <= 0:
            raise ValueError("crater_density must be positive")
        if self.radius_min_px < 3:
            raise ValueError(f"radius_min_px must be >= 3, got {self.radius_min_px}")
        if self.radius_max_px < self.radius_min_px:
            raise ValueError("radius_max_px must be >= radius_min_px")
        if self.rim_contrast <= 0:
            raise ValueError("rim_contrast must be positive")
        if self.albedo_noise_sigma < 0:
            raise ValueError("albedo_noise_sigma must be non-negative")


@dataclass
class SynthTile:
    """One generated tile: image in [0, 1], binary rim mask, and pixel truth."""

    image: np.ndarray
    mask: np.ndarray
    truth: list[PixelCrater]
    tile_id: str
    seed: int


def _sample_radii(rng: np.random.Generator, n: int, params: BodyParams) -> np.ndarray:
    """Truncated power-law radii via inverse-CDF sampling."""
    lo, hi = params.radius_min_px, params.radius_max_px
    u = rng.random(n)
    if lo == hi:
        return np.full(n, lo)
    a = params.radius_powerlaw_exp
    if a == -1.0:
        return lo * (hi / lo) ** u
    a1 = a + 1.0
    return (lo**a1 + u * (hi**a1 - lo**a1)) ** (1.0 / a1)


def generate_tile(params: BodyParams, size: int, seed: int, tile_id: str = "") -> SynthTile:
    """Render one tile deterministically from (params, size, seed)."""
    if size < 4 * params.radius_min_px:
        raise ValueError(f"tile size {size} too small for radius_min_px {params.radius_min_px}")
    if params.radius_max_px > size / 2:
        raise ValueError(f"radius_max_px {params.radius_max_px} exceeds half tile size {size}")

    rng = np.random.default_rng(seed)
    n = int(rng.poisson(params.crater_density))
    cx = rng.uniform(0.0, size, n)
    cy = rng.uniform(0.0, size, n)
    radii = _sample_radii(rng, n, params)

    img = np.full((size, size), 0.5, dtype=np.float64)
    az = math.radians(params.sun_azimuth_deg)
    shade_scale = params.rim_contrast * math.cos(math.radians(params.sun_elevation_deg))
    for x0, y0, r in zip(cx, cy, radii):
        sigma = max(1.0, 0.15 * r)
        reach = r + 3.0 * sigma
        x_lo = max(0, int(math.floor(x0 - reach)))
        x_hi = min(size, int(math.ceil(x0 + reach)) + 1)
        y_lo = max(0, int(math.floor(y0 - reach)))
        y_hi = min(size, int(math.ceil(y0 + reach)) + 1)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        xs = np.arange(x_lo, x_hi, dtype=np.float64)[None, :] - x0
        ys = np.arange(y_lo, y_hi, dtype=np.float64)[:, None] - y0
        dist = np.hypot(xs, ys)
        theta = np.arctan2(-ys, xs)
        ring = np.exp(-0.5 * ((dist - r) / sigma) ** 2)
        img[y_lo:y_hi, x_lo:x_hi] += shade_scale * ring * np.cos(theta - az)

    if params.albedo_noise_sigma > 0:
        img += rng.normal(0.0, params.albedo_noise_sigma, (size, size))
    img = np.clip(img, 0.0, 1.0).astype(np.float32)

    truth = [PixelCrater(float(x), float(y), float(r)) for x, y, r in zip(cx, cy, radii)]
    mask = rasterize_mask(truth, size, size)
    return SynthTile(image=img, mask=mask, truth=truth, tile_id=tile_id, seed=seed)


def tile_seed(master_seed: int, split_index: int, tile_index: int) -> int:
    """Derive a disjoint per-tile seed from the master seed."""
    ss = np.random.SeedSequence((master_seed, split_index, tile_index))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_dataset(
    params: BodyParams,
    n_train: int,
    n_val: int,
    n_test: int,
    size: int,
    seed: int,
    out_dir: str | Path,
) -> dict[str, list[SynthTile]]:
    """Generate train/val/test tile collections and write them to disk.

    Layout under ``out_dir``: ``<split>/<tile_id>.png`` (8-bit grayscale
    image), ``<split>/<tile_id>_mask.png`` (binary mask), a
    ``<split>_truth.csv`` per split, and a ``dataset.txt`` manifest recording
    every generation parameter.
    """
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for name, count in counts.items():
        if count <= 0:
            raise ValueError(f"n_{name} must be positive, got {count}")

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    splits: dict[str, list[SynthTile]] = {}
    for split_index, split in enumerate(SPLITS):
        split_dir = root / split
        split_dir.mkdir(exist_ok=True)
        tiles: list[SynthTile] = []
        truth: dict[str, list[PixelCrater]] = {}
        for i in range(counts[split]):
            tid = f"{split}_{i:05d}"
            tile = generate_tile(params, size, tile_seed(seed, split_index, i), tile_id=tid)
            save_gray_png(split_dir / f"{tid}.png", np.round(tile.image * 255.0).astype(np.uint8))
            save_gray_png(split_dir / f"{tid}_mask.png", tile.mask * 255)
            truth[tid] = tile.truth
            tiles.append(tile)
        write_truth_csv(root / f"{split}_truth.csv", truth)
        splits[split] = tiles

    with open(root / MANIFEST_NAME, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"size={size}\n")
        fh.write(f"seed={seed}\n")
        for name, count in counts.items():
            fh.write(f"n_{name}={count}\n")
        for f in fields(BodyParams):
            fh.write(f"{f.name}={getattr(params, f.name)!r}\n")
    return splits


def read_manifest(path: str | Path) -> dict[str, str]:
    """Parse a ``dataset.txt`` manifest back into a key -> value dict."""
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out
