"""Flat parameter vectors and the kernels every aggregation rule reduces to."""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .errors import DimensionError, NumericError

CHECKPOINT_MAGIC = "fedsim-params v1"


def as_vector(values, name: str = "params") -> np.ndarray:
    """Return ``values`` as a 1-d float64 array, validating finiteness."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-d vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise NumericError(f"{name} contains non-finite entries")
    return vec


def weighted_sum(models: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Elementwise ``sum_j weights[j] * models[j]``.

    Accumulation runs in list order so the result is bit-reproducible for a
    given client ordering.
    """
    if len(models) == 0:
        raise DimensionError("weighted_sum needs at least one model")
    if len(models) != len(weights):
        raise DimensionError(f"{len(models)} models but {len(weights)} weights")
    vecs = [as_vector(m, f"models[{j}]") for j, m in enumerate(models)]
    length = vecs[0].size
    for j, v in enumerate(vecs):
        if v.size != length:
            raise DimensionError(f"models[{j}] has length {v.size}, expected {length}")
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise NumericError("weights contain non-finite entries")

    with np.errstate(over="ignore", invalid="ignore"):
        out = w[0] * vecs[0]
        for j in range(1, len(vecs)):
            out = out + w[j] * vecs[j]
    if not np.all(np.isfinite(out)):
        raise NumericError("weighted_sum produced non-finite entries")
    return out


def l2_distance(a, b) -> float:
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.size != b.size:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def save_checkpoint(path: str | os.PathLike, params) -> None:
    """Write ``params`` as a text header followed by little-endian float64s."""
    vec = as_vector(params)
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {vec.size}\n".encode("ascii"))
        fh.write(vec.astype("<f8").tobytes())


def load_checkpoint(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        payload = fh.read()
    prefix, _, length = header.rpartition(" ")
    if prefix != CHECKPOINT_MAGIC or not length.isdigit():
        raise DimensionError(f"{path}: not a fedsim checkpoint (header {header!r})")
    n = int(length)
    if len(payload) != 8 * n:
        raise DimensionError(f"{path}: expected {8 * n} payload bytes, found {len(payload)}")
    return as_vector(np.frombuffer(payload, dtype="<f8").astype(np.float64))
