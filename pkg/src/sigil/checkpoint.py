"""Model checkpointing: a versioned single-file container holding the
architecture descriptor and every parameter tensor as raw little-endian
float64 bytes. Round-trips are bit-exact and the file bytes themselves
are deterministic (no timestamps), so re-runs can be compared directly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ModelSpec, SigilModel, initialize

__all__ = ["CheckpointError", "save_model", "load_model", "check_compatible"]

_MAGIC = b"SIGILCKPT"
_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint."""


def save_model(model: SigilModel, path) -> None:
    params = model.parameters()
    header = {
        "version": _VERSION,
        "spec": {
            "n": model.spec.n,
            "view_dims": list(model.spec.view_dims),
            "hidden": model.spec.hidden,
            "clusters": list(model.spec.clusters),
            "augment_adjacency": model.spec.augment_adjacency,
            "mixture_decode": model.spec.mixture_decode,
            "tied_unpooling": model.spec.tied_unpooling,
        },
        "params": [
            {"name": p.name, "shape": list(p.tensor.shape)} for p in params
        ],
    }
    head = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        for p in params:
            fh.write(np.ascontiguousarray(p.tensor.value, dtype="<f8").tobytes())
    tmp.replace(path)  # atomic; an interrupted save never clobbers the old file


def load_model(path) -> SigilModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    if not blob.startswith(_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    off = len(_MAGIC)
    if len(blob) < off + 8:
        raise CheckpointError(f"{path}: truncated header")
    head_len = int.from_bytes(blob[off : off + 8], "little")
    off += 8
    if len(blob) < off + head_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[off : off + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: corrupt header: {err}") from err
    off += head_len
    if header.get("version") != _VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {header.get('version')} is not "
            f"supported (expected {_VERSION})"
        )
    spec = ModelSpec(
        n=header["spec"]["n"],
        view_dims=tuple(header["spec"]["view_dims"]),
        hidden=header["spec"]["hidden"],
        clusters=tuple(header["spec"]["clusters"]),
        augment_adjacency=header["spec"]["augment_adjacency"],
        mixture_decode=header["spec"]["mixture_decode"],
        tied_unpooling=header["spec"]["tied_unpooling"],
    )
    model = initialize(spec, seed=0)
    params = model.parameters()
    recorded = header["params"]
    if [p.name for p in params] != [r["name"] for r in recorded]:
        raise CheckpointError(f"{path}: parameter layout does not match descriptor")
    for p, rec in zip(params, recorded):
        shape = tuple(rec["shape"])
        if tuple(p.tensor.shape) != shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {p.name}: {shape} vs {p.tensor.shape}"
            )
        count = shape[0] * shape[1] * 8
        if len(blob) < off + count:
            raise CheckpointError(f"{path}: truncated parameter data for {p.name}")
        p.tensor.value = (
            np.frombuffer(blob[off : off + count], dtype="<f8")
            .reshape(shape)
            .copy()
        )
        off += count
    if off != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after parameter data")
    return model


def check_compatible(model: SigilModel, n: int, view_dims: tuple[int, ...]) -> None:
    """Raise if a checkpointed model cannot score the given graph shape."""
    if model.spec.n != n or model.spec.view_dims != view_dims:
        raise CheckpointError(
            f"checkpoint was trained for n={model.spec.n}, view dims "
            f"{model.spec.view_dims}; graph has n={n}, dims {view_dims}"
        )
