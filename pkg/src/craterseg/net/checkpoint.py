"""Binary checkpoint format for network weights and optimizer state.

Layout:

* ASCII header line ``UNETW1``
* manifest: tensor count (u32 LE); per tensor: name length (u32 LE), UTF-8
  name bytes, rank (u32 LE), dims (rank x u32 LE)
* raw tensor data: float32 little-endian, C order, in manifest order
* trailing u64 LE checksum: the total float count written

Optimizer moments are stored as extra tensors under ``opt/m/...`` and
``opt/v/...`` plus a scalar ``opt/step``. Round-tripping a file is bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import UNetConfig, Weights, tensor_shapes

MAGIC = b"UNETW1\n"


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CorruptHeaderError(CheckpointError):
    """Bad magic or unparseable manifest."""


class TruncatedCheckpointError(CheckpointError):
    """File ends before the manifest-declared data, or the checksum disagrees."""


class ShapeMismatchError(CheckpointError):
    """Stored tensors are incompatible with the requested configuration."""


def _flatten(weights: Weights) -> dict[str, np.ndarray]:
    out = dict(weights.tensors)
    if weights.opt_m is not None and weights.opt_v is not None:
        for name, arr in weights.opt_m.items():
            out[f"opt/m/{name}"] = arr
        for name, arr in weights.opt_v.items():
            out[f"opt/v/{name}"] = arr
        out["opt/step"] = np.array([weights.step], dtype=np.float32)
    return out


def save_weights(weights: Weights, path: str | Path) -> None:
    """Serialize weights (and optimizer state, if present) to ``path``."""
    tensors = _flatten(weights)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        total = 0
        for arr in tensors.values():
            data = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(data.tobytes())
            total += data.size
        fh.write(struct.pack("<Q", total))


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedCheckpointError(f"file ends inside {what} ({len(data)}/{count} bytes)")
    return data


def load_weights(path: str | Path, config: UNetConfig | None = None) -> Weights:
    """Load a checkpoint; optionally validate shapes against ``config``.

    Raises CorruptHeaderError, TruncatedCheckpointError, or
    ShapeMismatchError depending on what is wrong with the file.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CorruptHeaderError(f"bad magic {magic!r}, expected {MAGIC!r}")
        try:
            (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
            manifest: list[tuple[str, tuple[int, ...]]] = []
            for _ in range(count):
                (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
                name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
                (rank,) = struct.unpack("<I", _read_exact(fh, 4, "tensor rank"))
                dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "tensor dims"))
                manifest.append((name, tuple(int(d) for d in dims)))
        except (struct.error, UnicodeDecodeError) as exc:
            raise CorruptHeaderError(f"unparseable manifest: {exc}") from exc

        tensors: dict[str, np.ndarray] = {}
        total = 0
        for name, shape in manifest:
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(fh, 4 * n, f"data of tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            total += n
        (declared,) = struct.unpack("<Q", _read_exact(fh, 8, "trailing checksum"))
        if declared != total:
            raise TruncatedCheckpointError(
                f"checksum mismatch: file declares {declared} floats, read {total}"
            )

    model = {k: v for k, v in tensors.items() if not k.startswith("opt/")}
    opt_m = {k[len("opt/m/"):]: v for k, v in tensors.items() if k.startswith("opt/m/")}
    opt_v = {k[len("opt/v/"):]: v for k, v in tensors.items() if k.startswith("opt/v/")}
    step = int(tensors["opt/step"][0]) if "opt/step" in tensors else 0

    if config is not None:
        expected = tensor_shapes(config)
        for name, shape in expected.items():
            if name not in model:
                raise ShapeMismatchError(f"checkpoint is missing tensor {name} {shape}")
            if model[name].shape != shape:
                raise ShapeMismatchError(
                    f"tensor {name} has shape {model[name].shape}, config expects {shape}"
                )
        extra = set(model) - set(expected)
        if extra:
            raise ShapeMismatchError(f"checkpoint has unexpected tensor {sorted(extra)[0]}")
        dtype = config.np_dtype
        model = {k: v.astype(dtype, copy=False) for k, v in model.items()}
        opt_m = {k: v.astype(dtype, copy=False) for k, v in opt_m.items()}
        opt_v = {k: v.astype(dtype, copy=False) for k, v in opt_v.items()}

    return Weights(
        tensors=model,
        opt_m=opt_m or None,
        opt_v=opt_v or None,
        step=step,
    )
