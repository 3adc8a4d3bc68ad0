"""Type definitions for hsfuse."""

from __future__ import annotations

from typing import TypeAlias, TypedDict

import numpy as np
from numpy.typing import NDArray

# Dense real storage for every matrix and vector symbol
DenseArray: TypeAlias = NDArray[np.floating]
# (bands, height, width), band-major then row-major
HyperCube: TypeAlias = NDArray[np.floating]
# (k, k) with k odd
BlurKernel: TypeAlias = NDArray[np.floating]
# (N_b, N_B), nonnegative rows summing to one
SrfMatrix: TypeAlias = NDArray[np.floating]


class MetricsPayload(TypedDict):
    """JSON form of a metrics report."""

    rmse: float
    psnr_db: float
    sam_deg: float
    ergas: float
    uiqi: float
    per_band_psnr: list[float]
    sorted_per_pixel_sam: list[float]


class ManifestPayload(TypedDict, total=False):
    """JSON form of a run manifest."""

    tool: str
    version: str
    command: str
    argv: list[str]
    flags: dict[str, object]
    seeds: dict[str, int]
    precision: str
    inputs: dict[str, str]
    outputs: list[str]
    parameter_count: int


class LayerSpec(TypedDict):
    """One fully connected layer of the fusion network."""

    name: str
    n_out: int
    n_in: int
