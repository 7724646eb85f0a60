"""Experiment configuration: defaults plus a flat key=value config file format.

Config files contain one ``section.key=value`` assignment per line, with
``#`` comments and blank lines ignored. Sections: ``run``, ``body_a``,
``body_b``, ``unet``, ``train``, ``post``. Example::

    run.seed=7
    run.n_pretrain=500
    body_b.sun_azimuth_deg=200
    train.learning_rate=1e-4
    post.r_max=40
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .net import TrainConfig, UNetConfig
from .post import PostParams
from .synth import BodyParams


def default_body_a() -> BodyParams:
    """Pretraining source body: sparse large sharp craters, morning light."""
    return BodyParams(
        crater_density=6.0,
        radius_min_px=6.0,
        radius_max_px=20.0,
        radius_powerlaw_exp=-2.0,
        sun_azimuth_deg=45.0,
        sun_elevation_deg=30.0,
        albedo_noise_sigma=0.04,
        rim_contrast=0.35,
    )


def default_body_b() -> BodyParams:
    """Transfer target body: denser smaller fainter craters, different sun."""
    return BodyParams(
        crater_density=10.0,
        radius_min_px=5.0,
        radius_max_px=14.0,
        radius_powerlaw_exp=-2.0,
        sun_azimuth_deg=200.0,
        sun_elevation_deg=45.0,
        albedo_noise_sigma=0.08,
        rim_contrast=0.18,
    )


@dataclass
class RunConfig:
    """Everything one experiment run needs; desk-scale defaults."""

    dataset_root: str = "data"
    out_dir: str = "out"
    checkpoint: str = "out/pretrain.ckpt"
    seed: int = 0
    n_pretrain: int = 500
    n_val: int = 50
    test_size: int = 200
    finetune_epochs: int = 10
    finetune_sizes: tuple[int, ...] = (25, 100, 400)
    body_a: BodyParams = field(default_factory=default_body_a)
    body_b: BodyParams = field(default_factory=default_body_b)
    unet: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    post: PostParams = field(default_factory=PostParams)

    def __post_init__(self) -> None:
        sizes = tuple(self.finetune_sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"finetune_sizes must be strictly increasing, got {sizes}")
        if min(self.n_pretrain, self.n_val, self.test_size) <= 0:
            raise ValueError("dataset split sizes must be positive")

    @property
    def tile_size(self) -> int:
        return self.unet.input_size


def _coerce(name: str, current, raw: str):
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ValueError(f"{name}: expected an integer, got {raw!r}") from exc
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ValueError(f"{name}: expected a number, got {raw!r}") from exc
    if isinstance(current, tuple):
        try:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        except ValueError as exc:
            raise ValueError(f"{name}: expected comma-separated integers, got {raw!r}") from exc
    return raw


def apply_assignment(cfg: RunConfig, key: str, raw: str) -> None:
    """Apply one dotted ``section.field=value`` assignment to ``cfg``."""
    section, _, name = key.partition(".")
    if not name:
        raise ValueError(f"config key {key!r} is missing its section prefix")
    if section == "run":
        if not hasattr(cfg, name) or name in ("body_a", "body_b", "unet", "train", "post"):
            raise ValueError(f"unknown config key: {key}")
        setattr(cfg, name, _coerce(key, getattr(cfg, name), raw))
        return
    if section in ("body_a", "body_b", "unet", "train", "post"):
        sub = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(sub)}
        if name not in names:
            raise ValueError(f"unknown config key: {key}")
        value = _coerce(key, getattr(sub, name), raw)
        setattr(cfg, section, dataclasses.replace(sub, **{name: value}))
        return
    raise ValueError(f"unknown config section: {section!r} in key {key}")


def load_run_config(path: str | Path) -> RunConfig:
    """Parse a flat key=value config file into a RunConfig."""
    cfg = RunConfig()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        try:
            apply_assignment(cfg, key.strip(), raw.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{line_no}: {exc}") from exc
    # Re-validate cross-field invariants after all assignments.
    cfg.__post_init__()
    return cfg


def format_run_config(cfg: RunConfig) -> str:
    """Render a RunConfig back into the flat key=value format."""
    lines: list[str] = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in ("body_a", "body_b", "unet", "train", "post"):
            for sub in dataclasses.fields(value):
                raw = getattr(value, sub.name)
                if isinstance(raw, tuple):
                    raw = ",".join(str(v) for v in raw)
                lines.append(f"{f.name}.{sub.name}={raw}")
        else:
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"run.{f.name}={value}")
    return "\n".join(lines) + "\n"
