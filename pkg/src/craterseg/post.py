"""Post-processing and evaluation: thresholding, ring template matching,
duplicate removal, catalogue matching, and precision/recall/F1.

The detector slides zero-mean normalized ring templates of every radius in
[r_min, r_max] over the binarized prediction; local maxima of the (x, y, r)
correlation volume above the match probability become detections. Two
detections are duplicates when both the normalized centre distance and the
normalized radius difference fall below their thresholds, and the same pair
of criteria decides detection-to-truth matches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.signal import fftconvolve

from .catalog import PixelCrater, rasterize_mask

DETECTIONS_HEADER = ["tile_id", "x_px", "y_px", "r_px", "score"]
METRICS_FIELDS = ["tp", "fp", "fn", "precision", "recall", "f1"]


@dataclass(frozen=True)
class PostParams:
    """Thresholds of the post-processing chain (template-matching defaults)."""

    threshold: float = 0.1
    r_min: int = 5
    r_max: int = 40
    match_prob: float = 0.5
    dedupe_xy: float = 1.8
    dedupe_r: float = 1.0
    ring_thickness: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 3 <= self.r_min <= self.r_max:
            raise ValueError(f"need 3 <= r_min <= r_max, got [{self.r_min}, {self.r_max}]")
        if not -1.0 <= self.match_prob <= 1.0:
            raise ValueError(f"match_prob must be in [-1, 1], got {self.match_prob}")
        if self.dedupe_xy <= 0 or self.dedupe_r <= 0:
            raise ValueError("dedupe thresholds must be positive")
        if self.ring_thickness < 1:
            raise ValueError("ring_thickness must be >= 1")


@dataclass(frozen=True)
class Detection:
    """A matched ring: pixel-space crater plus its correlation score."""

    crater: PixelCrater
    score: float


@dataclass(frozen=True)
class MatchReport:
    """Detection-vs-truth counts and the derived metrics."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> MatchReport:
        """Fill metrics from counts; an entirely empty report counts as perfect."""
        if tp == 0 and fp == 0 and fn == 0:
            return cls(0, 0, 0, 1.0, 1.0, 1.0)
        p = precision(tp, fp)
        r = recall(tp, fn)
        return cls(tp, fp, fn, p, r, f1(p, r))


def precision(tp: float, fp: float) -> float:
    """Matched detections over all detections; 0 when nothing was detected."""
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall(tp: float, fn: float) -> float:
    """Matched detections over all catalogued craters; 0 when truth is empty."""
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall."""
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def binarize(img: np.ndarray, threshold: float) -> np.ndarray:
    """Global thresholding: 1 where the value is strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return (np.asarray(img) > threshold).astype(np.uint8)


def make_ring_template(r: int, thickness: int = 1) -> np.ndarray:
    """Square patch with a one-valued circle annulus of radius ``r``."""
    if r < 1:
        raise ValueError(f"template radius must be >= 1, got {r}")
    size = 2 * r + 2 * thickness + 1
    center = float(r + thickness)
    ring = rasterize_mask([PixelCrater(center, center, float(r))], size, size, thickness)
    return ring.astype(np.float64)


def _zncc(img: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Zero-mean normalized cross-correlation, template centred per pixel."""
    t0 = template - template.mean()
    t_energy = float((t0 * t0).sum())
    if t_energy == 0.0:
        return np.zeros_like(img)
    n_t = template.size
    ones = np.ones_like(template)
    num = fftconvolve(img, t0[::-1, ::-1], mode="same")
    local_sum = fftconvolve(img, ones, mode="same")
    local_sq = fftconvolve(img * img, ones, mode="same")
    var = np.maximum(local_sq - local_sum * local_sum / n_t, 0.0)
    denom = np.sqrt(var * t_energy)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = num / denom
    score[~np.isfinite(score)] = 0.0
    return score


def template_match(binary: np.ndarray, params: PostParams) -> list[Detection]:
    """Detect rings in a binarized mask.

    Correlates a ring template for every radius in [r_min, r_max] (1 px
    steps), then keeps local maxima of the stacked (r, y, x) score volume
    that exceed ``match_prob``. Radii whose template does not fit in the
    image are skipped. Detections come back sorted by descending score.
    """
    img = np.asarray(binary, dtype=np.float64)
    h, w = img.shape
    radii = list(range(params.r_min, params.r_max + 1))
    volume = np.full((len(radii), h, w), -np.inf)
    any_radius = False
    for k, r in enumerate(radii):
        template = make_ring_template(r, params.ring_thickness)
        if template.shape[0] > h or template.shape[1] > w:
            continue
        volume[k] = _zncc(img, template)
        any_radius = True
    if not any_radius:
        return []

    local_max = maximum_filter(volume, size=3, mode="constant", cval=-np.inf)
    peaks = (volume >= local_max) & (volume > params.match_prob)
    ks, ys, xs = np.nonzero(peaks)
    dets = [
        Detection(
            crater=PixelCrater(float(x), float(y), float(radii[k])),
            score=float(volume[k, y, x]),
        )
        for k, y, x in zip(ks, ys, xs)
    ]
    dets.sort(key=_det_order)
    return dets


def _det_order(d: Detection):
    return (-d.score, d.crater.x_px, d.crater.y_px, d.crater.r_px)


def _pair_within(a: PixelCrater, b: PixelCrater, d_xy: float, d_r: float) -> bool:
    """Joint centre-distance and radius-difference criterion for a pair."""
    r_min = min(a.r_px, b.r_px)
    pos = ((a.x_px - b.x_px) ** 2 + (a.y_px - b.y_px) ** 2) / r_min**2
    rad = abs(a.r_px - b.r_px) / r_min
    return pos < d_xy and rad < d_r


def dedupe(dets: list[Detection], d_xy: float, d_r: float) -> list[Detection]:
    """Greedy duplicate removal in descending score order.

    A detection is dropped when it satisfies both closeness criteria against
    any already-kept detection; the survivor is always the higher-scoring
    one. The result preserves descending score order.
    """
    kept: list[Detection] = []
    for d in sorted(dets, key=_det_order):
        if not any(_pair_within(d.crater, k.crater, d_xy, d_r) for k in kept):
            kept.append(d)
    return kept


def match_to_truth(
    dets: list[Detection],
    truth: list[PixelCrater],
    d_xy: float,
    d_r: float,
) -> MatchReport:
    """Greedy one-to-one matching of detections against ground truth.

    Detections are visited in descending score order; each grabs the
    not-yet-matched truth crater with the smallest normalized centre
    distance among those passing both criteria. Unmatched detections are
    false positives; unmatched truth craters are false negatives.
    """
    unmatched = list(range(len(truth)))
    tp = 0
    for d in sorted(dets, key=_det_order):
        best_idx = -1
        best_pos = np.inf
        for idx in unmatched:
            t = truth[idx]
            r_min = min(d.crater.r_px, t.r_px)
            pos = ((t.x_px - d.crater.x_px) ** 2 + (t.y_px - d.crater.y_px) ** 2) / r_min**2
            rad = abs(t.r_px - d.crater.r_px) / r_min
            if pos < d_xy and rad < d_r and pos < best_pos:
                best_idx = idx
                best_pos = pos
        if best_idx >= 0:
            unmatched.remove(best_idx)
            tp += 1
    return MatchReport.from_counts(tp=tp, fp=len(dets) - tp, fn=len(unmatched))


def detect(mask: np.ndarray, params: PostParams) -> list[Detection]:
    """Full single-tile chain: binarize, template-match, dedupe."""
    dets = template_match(binarize(mask, params.threshold), params)
    return dedupe(dets, params.dedupe_xy, params.dedupe_r)


def evaluate_tiles(
    masks,
    truths,
    params: PostParams,
) -> MatchReport:
    """Run the detection chain per tile and aggregate counts across tiles."""
    masks = list(masks)
    truths = list(truths)
    tp = fp = fn = 0
    for mask, truth in zip(masks, truths, strict=True):
        report = match_to_truth(detect(mask, params), truth, params.dedupe_xy, params.dedupe_r)
        tp += report.tp
        fp += report.fp
        fn += report.fn
    return MatchReport.from_counts(tp, fp, fn)


def write_detections_csv(path: str | Path, per_tile: dict[str, list[Detection]]) -> None:
    """Write per-tile detections (``tile_id,x_px,y_px,r_px,score``)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(DETECTIONS_HEADER) + "\n")
        for tile_id, dets in per_tile.items():
            for d in dets:
                c = d.crater
                fh.write(f"{tile_id},{c.x_px!r},{c.y_px!r},{c.r_px!r},{d.score!r}\n")


def read_detections_csv(path: str | Path) -> dict[str, list[Detection]]:
    """Read a detections CSV back into per-tile lists."""
    per_tile: dict[str, list[Detection]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DETECTIONS_HEADER:
            raise ValueError(f"expected header {','.join(DETECTIONS_HEADER)}, got {header}")
        for row in reader:
            if not row:
                continue
            tile_id, x, y, r, score = row
            per_tile.setdefault(tile_id, []).append(
                Detection(crater=PixelCrater(float(x), float(y), float(r)), score=float(score))
            )
    return per_tile


def format_metrics(report: MatchReport) -> str:
    """Plain-text key=value rendering of a match report."""
    return (
        f"tp={report.tp}\n"
        f"fp={report.fp}\n"
        f"fn={report.fn}\n"
        f"precision={report.precision!r}\n"
        f"recall={report.recall!r}\n"
        f"f1={report.f1!r}\n"
    )


def metrics_csv_row(report: MatchReport) -> str:
    """The same report as one CSV row (with header) for aggregation."""
    values = [str(report.tp), str(report.fp), str(report.fn),
              repr(report.precision), repr(report.recall), repr(report.f1)]
    return ",".join(METRICS_FIELDS) + "\n" + ",".join(values) + "\n"


def write_metrics(report: MatchReport, txt_path: str | Path, csv_path: str | Path) -> None:
    Path(txt_path).write_text(format_metrics(report), encoding="utf-8")
    Path(csv_path).write_text(metrics_csv_row(report), encoding="utf-8")
