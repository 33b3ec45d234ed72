"""Portable directory format for ragged tensors and PARAFAC2 models.

A tensor directory holds ``meta.json`` and one raw little-endian float64 file
per slice (``slice_0000.bin`` ...), each row-major with ``I * J_k`` values.
A model directory holds ``A.bin``, ``B_0000.bin`` ..., ``C.bin`` and a
``meta.json`` that also records the rank ``R``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import DimensionError, Parafac2Model, RaggedTensor

__all__ = ["save_tensor", "load_tensor", "save_model", "load_model", "write_json"]

_DTYPE = np.dtype("<f8")


def write_json(path, obj):
    """Write ``obj`` as indented, key-sorted JSON (stable bytes for identical input)."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_matrix(path, M):
    np.ascontiguousarray(M, dtype=_DTYPE).tofile(path)


def _read_matrix(path, rows, cols):
    values = np.fromfile(path, dtype=_DTYPE)
    if values.size != rows * cols:
        raise DimensionError(f"{path} holds {values.size} values, expected {rows}x{cols}")
    return values.reshape(rows, cols).astype(np.float64)


def _read_meta(directory):
    meta = json.loads((Path(directory) / "meta.json").read_text())
    if meta.get("order", "row-major") != "row-major" or meta.get("dtype", "f64le") != "f64le":
        raise ValueError(f"unsupported layout in {directory}: {meta.get('order')}/{meta.get('dtype')}")
    if len(meta["J"]) != meta["K"]:
        raise DimensionError("meta.json: len(J) != K")
    return meta


def save_tensor(directory, tensor: RaggedTensor):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"I": tensor.I, "J": tensor.J, "K": tensor.K, "order": "row-major", "dtype": "f64le"}
    write_json(directory / "meta.json", meta)
    for k, X in enumerate(tensor):
        _write_matrix(directory / f"slice_{k:04d}.bin", X)


def load_tensor(directory) -> RaggedTensor:
    directory = Path(directory)
    meta = _read_meta(directory)
    return RaggedTensor(
        [_read_matrix(directory / f"slice_{k:04d}.bin", meta["I"], J) for k, J in enumerate(meta["J"])]
    )


def save_model(directory, model: Parafac2Model, extra: dict | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    I, J, K = model.shape
    meta = {"I": I, "J": J, "K": K, "R": model.rank, "order": "row-major", "dtype": "f64le"}
    if extra:
        meta.update(extra)
    write_json(directory / "meta.json", meta)
    _write_matrix(directory / "A.bin", model.A)
    _write_matrix(directory / "C.bin", model.C)
    for k, Bk in enumerate(model.B):
        _write_matrix(directory / f"B_{k:04d}.bin", Bk)


def load_model(directory) -> Parafac2Model:
    directory = Path(directory)
    meta = _read_meta(directory)
    R = meta["R"]
    A = _read_matrix(directory / "A.bin", meta["I"], R)
    C = _read_matrix(directory / "C.bin", meta["K"], R)
    B = [_read_matrix(directory / f"B_{k:04d}.bin", J, R) for k, J in enumerate(meta["J"])]
    return Parafac2Model(A, B, C)
