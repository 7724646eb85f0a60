"""Command-line orchestration of the full experiment.

Subcommands: ``synth``, ``train``, ``finetune``, ``predict``, ``post``,
``eval``, ``tl-experiment``. Global flags (before the subcommand):
``--config <path>``, ``--seed <int>``, ``--out <dir>``, ``--force``.

Exit codes: 0 success, 1 validation/config error, 2 I/O error, 3 numerical
abort (non-finite training loss).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import post as postmod
from .catalog import PixelCrater, rasterize_mask, read_truth_csv
from .config import RunConfig, apply_assignment, load_run_config
from .imageio import load_gray_png, save_gray_png, save_rgb_png
from .net import (
    CheckpointError,
    TrainingDivergedError,
    TrainReport,
    finetune,
    forward,
    init,
    load_weights,
    pixel_accuracy,
    predict_proba,
    save_weights,
    train,
)
from .synth import generate_dataset


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems to exit code 1
        raise ValueError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="craterseg", description="Crater detection experiment harness")
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", type=Path, help="override run.out_dir")
    p.add_argument("--force", action="store_true", help="allow overwriting checkpoints")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate the two synthetic body datasets")
    sub.add_parser("train", help="pretrain on the domain-A training split")

    f = sub.add_parser("finetune", help="fine-tune a checkpoint on domain-B tiles")
    f.add_argument("--size", type=int, required=True, help="number of domain-B tiles")
    f.add_argument("--checkpoint", type=Path, help="input checkpoint (default run.checkpoint)")

    pr = sub.add_parser("predict", help="probability masks, detections, and overlays")
    pr.add_argument("--checkpoint", type=Path, help="checkpoint (default run.checkpoint)")
    pr.add_argument("--tiles", type=Path, required=True, help="directory of tile PNGs")

    po = sub.add_parser("post", help="detect craters in saved probability masks")
    po.add_argument("--masks", type=Path, required=True, help="directory of *_prob.png masks")

    ev = sub.add_parser("eval", help="evaluate probability masks against truth")
    ev.add_argument("--masks", type=Path, required=True, help="directory of *_prob.png masks")
    ev.add_argument("--truth", type=Path, required=True, help="per-tile pixel truth CSV")

    sub.add_parser("tl-experiment", help="fine-tune at every configured size and evaluate")
    return p


def _guard_overwrite(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise ValueError(f"refusing to overwrite {path}; rerun with --force")


def _domain_seed(seed: int, domain_index: int) -> int:
    ss = np.random.SeedSequence((seed, 0xD0, domain_index))
    return int(ss.generate_state(1, np.uint64)[0])


def _load_tiles(split_dir: Path):
    """Load a split directory into (ids, images in [0,1], binary masks)."""
    if not split_dir.is_dir():
        raise FileNotFoundError(f"tile directory not found: {split_dir}")
    ids = sorted(
        p.stem for p in split_dir.glob("*.png")
        if not p.stem.endswith(("_mask", "_prob", "_overlay"))
    )
    if not ids:
        raise ValueError(f"no tile PNGs found under {split_dir}")
    images = np.stack([load_gray_png(split_dir / f"{t}.png") for t in ids])
    images = images.astype(np.float32) / 255.0
    mask_path = split_dir / f"{ids[0]}_mask.png"
    masks = None
    if mask_path.exists():
        masks = np.stack(
            [(load_gray_png(split_dir / f"{t}_mask.png") > 127) for t in ids]
        ).astype(np.float32)
    return ids, images, masks


def _load_prob_masks(masks_dir: Path):
    if not masks_dir.is_dir():
        raise FileNotFoundError(f"mask directory not found: {masks_dir}")
    ids = sorted(p.stem[: -len("_prob")] for p in masks_dir.glob("*_prob.png"))
    if not ids:
        raise ValueError(f"no *_prob.png masks found under {masks_dir}")
    masks = [load_gray_png(masks_dir / f"{t}_prob.png").astype(np.float64) / 255.0 for t in ids]
    return ids, masks


def _draw_overlay(image_u8: np.ndarray, dets: list[postmod.Detection]) -> np.ndarray:
    rgb = np.stack([image_u8] * 3, axis=-1).copy()
    h, w = image_u8.shape
    for d in dets:
        ring = rasterize_mask([d.crater], w, h).astype(bool)
        rgb[ring] = (255, 0, 0)
    return rgb


def _write_report(report: TrainReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_csv(), encoding="utf-8")


def cmd_synth(cfg: RunConfig) -> None:
    root = Path(cfg.dataset_root)
    size = cfg.tile_size
    b_pool = max(cfg.finetune_sizes)
    generate_dataset(
        cfg.body_a, cfg.n_pretrain, cfg.n_val, cfg.test_size, size,
        _domain_seed(cfg.seed, 0), root / "a",
    )
    generate_dataset(
        cfg.body_b, b_pool, cfg.n_val, cfg.test_size, size,
        _domain_seed(cfg.seed, 1), root / "b",
    )
    print(f"wrote domain A ({cfg.n_pretrain}/{cfg.n_val}/{cfg.test_size}) and "
          f"domain B ({b_pool}/{cfg.n_val}/{cfg.test_size}) under {root}")


def cmd_train(cfg: RunConfig, force: bool) -> None:
    ckpt = Path(cfg.checkpoint)
    _guard_overwrite(ckpt, force)
    root = Path(cfg.dataset_root) / "a"
    _, images, masks = _load_tiles(root / "train")
    _, val_images, val_masks = _load_tiles(root / "val")
    weights = init(cfg.unet, cfg.seed)
    weights, report = train(weights, cfg.unet, (images, masks), (val_images, val_masks), cfg.train)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights, ckpt)
    _write_report(report, Path(cfg.out_dir) / "train_report.csv")
    last = report.epochs[-1]
    print(f"saved {ckpt}; final train loss {last.train_loss:.4f}, "
          f"val loss {last.val_loss:.4f}")


def cmd_finetune(cfg: RunConfig, size: int, checkpoint: Path | None, force: bool) -> None:
    src = checkpoint or Path(cfg.checkpoint)
    weights = load_weights(src, cfg.unet)
    _, images, masks = _load_tiles(Path(cfg.dataset_root) / "b" / "train")
    if size > len(images):
        raise ValueError(f"requested {size} fine-tuning tiles, dataset has {len(images)}")
    out_ckpt = Path(cfg.out_dir) / f"finetune_{size}.ckpt"
    _guard_overwrite(out_ckpt, force)
    tuned, report = finetune(
        weights, cfg.unet, (images[:size], masks[:size]), cfg.train, epochs=cfg.finetune_epochs
    )
    out_ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_weights(tuned, out_ckpt)
    _write_report(report, Path(cfg.out_dir) / f"finetune_{size}_report.csv")
    print(f"saved {out_ckpt}")


def cmd_predict(cfg: RunConfig, checkpoint: Path | None, tiles_dir: Path) -> None:
    src = checkpoint or Path(cfg.checkpoint)
    weights = load_weights(src, cfg.unet)
    ids, images, _ = _load_tiles(tiles_dir)
    probs = predict_proba(weights, cfg.unet, images)

    out_root = Path(cfg.out_dir) / "predictions"
    out_root.mkdir(parents=True, exist_ok=True)
    per_tile: dict[str, list[postmod.Detection]] = {}
    for tid, prob in zip(ids, probs):
        save_gray_png(out_root / f"{tid}_prob.png", np.round(prob * 255.0).astype(np.uint8))
        per_tile[tid] = postmod.detect(prob, cfg.post)
    det_csv = out_root / "detections.csv"
    postmod.write_detections_csv(det_csv, per_tile)

    # Overlays are drawn from the CSV so the files cannot disagree.
    saved = postmod.read_detections_csv(det_csv)
    for tid, image in zip(ids, images):
        image_u8 = np.round(image * 255.0).astype(np.uint8)
        overlay = _draw_overlay(image_u8, saved.get(tid, []))
        save_rgb_png(out_root / f"{tid}_overlay.png", overlay)
    print(f"wrote {len(ids)} masks, overlays, and {det_csv}")


def cmd_post(cfg: RunConfig, masks_dir: Path) -> None:
    ids, masks = _load_prob_masks(masks_dir)
    per_tile = {tid: postmod.detect(mask, cfg.post) for tid, mask in zip(ids, masks)}
    out_csv = Path(cfg.out_dir) / "detections.csv"
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    postmod.write_detections_csv(out_csv, per_tile)
    n = sum(len(v) for v in per_tile.values())
    print(f"wrote {n} detections across {len(ids)} tiles to {out_csv}")


def cmd_eval(cfg: RunConfig, masks_dir: Path, truth_csv: Path) -> None:
    ids, masks = _load_prob_masks(masks_dir)
    truth = read_truth_csv(truth_csv)
    known = set(truth)
    extra = known - set(ids)
    if extra:
        raise ValueError(
            f"mismatched tile counts: truth lists {sorted(extra)[0]} with no mask "
            f"({len(ids)} masks vs {len(known)} truth tiles)"
        )
    truths = [truth.get(tid, []) for tid in ids]
    report = postmod.evaluate_tiles(masks, truths, cfg.post)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    postmod.write_metrics(report, out / "metrics.txt", out / "metrics.csv")
    print(postmod.format_metrics(report), end="")


def _test_set_metrics(cfg: RunConfig, weights, images, masks, truths):
    probs = predict_proba(weights, cfg.unet, images)
    logits = np.concatenate(
        [forward(weights, cfg.unet, images[lo : lo + 8]) for lo in range(0, len(images), 8)]
    )
    acc = pixel_accuracy(logits, masks.astype(np.float64))
    report = postmod.evaluate_tiles(list(probs), truths, cfg.post)
    return acc, report


def cmd_tl_experiment(cfg: RunConfig, force: bool) -> None:
    ckpt = Path(cfg.checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"pretrain checkpoint not found: {ckpt}")
    pretrained = load_weights(ckpt, cfg.unet)

    b_root = Path(cfg.dataset_root) / "b"
    _, pool_images, pool_masks = _load_tiles(b_root / "train")
    test_ids, test_images, test_masks = _load_tiles(b_root / "test")
    truth = read_truth_csv(Path(cfg.dataset_root) / "b" / "test_truth.csv")
    truths = [truth.get(tid, []) for tid in test_ids]

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "tl_results.csv"
    _guard_overwrite(results_path, force)

    rows = ["n,pixel_accuracy,precision,recall,f1"]
    acc, report = _test_set_metrics(cfg, pretrained, test_images, test_masks, truths)
    rows.append(f"0,{acc!r},{report.precision!r},{report.recall!r},{report.f1!r}")
    print(f"n=0 (no fine-tuning): accuracy {acc:.4f}, f1 {report.f1:.4f}")

    for n in cfg.finetune_sizes:
        if n > len(pool_images):
            raise ValueError(f"fine-tune size {n} exceeds domain-B pool of {len(pool_images)}")
        tuned, _ = finetune(
            pretrained, cfg.unet, (pool_images[:n], pool_masks[:n]),
            cfg.train, epochs=cfg.finetune_epochs,
        )
        save_weights(tuned, out / f"finetune_{n}.ckpt")
        acc, report = _test_set_metrics(cfg, tuned, test_images, test_masks, truths)
        rows.append(f"{n},{acc!r},{report.precision!r},{report.recall!r},{report.f1!r}")
        print(f"n={n}: accuracy {acc:.4f}, f1 {report.f1:.4f}")

    results_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {results_path}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_run_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            apply_assignment(cfg, "run.seed", str(args.seed))
        if args.out is not None:
            apply_assignment(cfg, "run.out_dir", str(args.out))

        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.force)
        elif args.command == "finetune":
            cmd_finetune(cfg, args.size, args.checkpoint, args.force)
        elif args.command == "predict":
            cmd_predict(cfg, args.checkpoint, args.tiles)
        elif args.command == "post":
            cmd_post(cfg, args.masks)
        elif args.command == "eval":
            cmd_eval(cfg, args.masks, args.truth)
        elif args.command == "tl-experiment":
            cmd_tl_experiment(cfg, args.force)
        else:  # pragma: no cover - argparse enforces the choices
            raise ValueError(f"unknown command {args.command!r}")
        return 0
    except TrainingDivergedError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except (ValueError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
