"""Upsampling of the LR-HSI onto the HR grid for the encoder's y-branch."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import map_coordinates

from hsfuse.config import UpsampleMethod
from hsfuse.degradation import check_cube
from hsfuse.errors import ArgumentError
from hsfuse.types import HyperCube


def _source_coordinates(n: int, r: int) -> NDArray[np.float64]:
    """Half-pixel-center source coordinate of each of the ``n * r`` output samples, clamped."""
    coords = (np.arange(n * r) + 0.5) / r - 0.5
    return np.clip(coords, 0, n - 1)


def upsample_bilinear(x: HyperCube, r: int) -> HyperCube:
    check_cube(x)
    if r < 1:
        raise ArgumentError(f"ratio must be >= 1, got {r}")
    if r == 1:
        return x.copy()

    bands, height, width = x.shape
    rows = _source_coordinates(height, r)
    cols = _source_coordinates(width, r)
    grid = np.meshgrid(rows, cols, indexing="ij")
    out = np.empty((bands, height * r, width * r), dtype=x.dtype)
    for band in range(bands):
        out[band] = map_coordinates(x[band], grid, order=1, mode="nearest")
    return out


def upsample_nearest(x: HyperCube, r: int) -> HyperCube:
    check_cube(x)
    if r < 1:
        raise ArgumentError(f"ratio must be >= 1, got {r}")

    _, height, width = x.shape
    rows = np.rint(_source_coordinates(height, r)).astype(np.intp)
    cols = np.rint(_source_coordinates(width, r)).astype(np.intp)
    return x[:, rows[:, None], cols[None, :]]


def upsample(x: HyperCube, r: int, method: UpsampleMethod | str = UpsampleMethod.BILINEAR) -> HyperCube:
    method = UpsampleMethod(method)
    if method == UpsampleMethod.NEAREST:
        return upsample_nearest(x, r)
    return upsample_bilinear(x, r)
