"""Full-reference quality measures for fused hyperspectral cubes."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsfuse.errors import ArgumentError, DimensionError
from hsfuse.types import HyperCube, MetricsPayload

NORM_EPSILON = 1e-12
UIQI_WINDOW = 32
UIQI_MIN_WINDOW = 2


def _pair(ref: HyperCube, test: HyperCube) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.ndim != 3 or ref.shape != test.shape:
        raise DimensionError(f"cubes must share a (bands, height, width) shape, got {ref.shape} and {test.shape}")
    return ref, test


def rmse(ref: HyperCube, test: HyperCube) -> float:
    ref, test = _pair(ref, test)
    return math.sqrt(float(np.mean((ref - test) ** 2)))


def psnr(ref: HyperCube, test: HyperCube) -> tuple[float, list[float]]:
    """Mean and per-band PSNR in dB, using each reference band's maximum as peak."""
    ref, test = _pair(ref, test)
    mse = np.mean((ref - test) ** 2, axis=(1, 2))
    peak = ref.max(axis=(1, 2))

    per_band: list[float] = []
    for band_mse, band_peak in zip(mse, peak):
        if band_mse == 0:
            per_band.append(math.inf)
        elif band_peak <= 0:
            per_band.append(-math.inf)
        else:
            per_band.append(10 * math.log10(band_peak ** 2 / band_mse))

    finite = [value for value in per_band if math.isfinite(value)]
    if finite:
        return float(np.mean(finite)), per_band
    if all(value == math.inf for value in per_band):
        return math.inf, per_band
    return -math.inf, per_band


def sam(ref: HyperCube, test: HyperCube) -> tuple[float, list[float]]:
    """Mean spectral angle in degrees and the ascending per-pixel angles."""
    ref, test = _pair(ref, test)
    bands = ref.shape[0]
    x = ref.reshape(bands, -1)
    y = test.reshape(bands, -1)
    norm_x = np.linalg.norm(x, axis=0)
    norm_y = np.linalg.norm(y, axis=0)
    # identical spectra are exactly 0 degrees, whatever arccos rounding says
    valid = (norm_x >= NORM_EPSILON) & (norm_y >= NORM_EPSILON) & np.any(x != y, axis=0)

    cosine = np.ones(x.shape[1])
    cosine[valid] = np.sum(x[:, valid] * y[:, valid], axis=0) / (norm_x[valid] * norm_y[valid])
    angles = np.where(valid, np.degrees(np.arccos(np.clip(cosine, -1, 1))), 0.0)
    return float(np.mean(angles)), sorted(angles.tolist())


def ergas(ref: HyperCube, test: HyperCube, r: int) -> float:
    if r < 1:
        raise ArgumentError(f"ratio must be >= 1, got {r}")
    ref, test = _pair(ref, test)
    band_rmse = np.sqrt(np.mean((ref - test) ** 2, axis=(1, 2)))
    band_mean = ref.mean(axis=(1, 2))
    keep = np.abs(band_mean) >= NORM_EPSILON
    if not keep.any():
        return 0.0
    ratios = (band_rmse[keep] / band_mean[keep]) ** 2
    return float(100.0 / r * math.sqrt(ratios.mean()))


def _window_starts(dim: int) -> list[int]:
    starts = list(range(0, dim, UIQI_WINDOW))
    return [start for start in starts if dim - start >= UIQI_MIN_WINDOW]


def _quality_index(x: NDArray, y: NDArray) -> float | None:
    """Q of one window, or None when the denominator vanishes."""
    n = x.size
    if np.array_equal(x, y) and np.ptp(x) > 0:
        return 1.0
    mu_x, mu_y = x.mean(), y.mean()
    var_x = np.sum((x - mu_x) ** 2) / (n - 1)
    var_y = np.sum((y - mu_y) ** 2) / (n - 1)
    cov = np.sum((x - mu_x) * (y - mu_y)) / (n - 1)
    denominator = (var_x + var_y) * (mu_x ** 2 + mu_y ** 2)
    if denominator < NORM_EPSILON:
        return None
    return float(4 * cov * mu_x * mu_y / denominator)


def uiqi(ref: HyperCube, test: HyperCube) -> float:
    """Universal image quality index over 32x32 windows with stride 32, averaged over bands."""
    ref, test = _pair(ref, test)
    _, height, width = ref.shape
    if height < UIQI_MIN_WINDOW or width < UIQI_MIN_WINDOW:
        raise ArgumentError(f"UIQI needs at least a {UIQI_MIN_WINDOW}x{UIQI_MIN_WINDOW} image, got {height}x{width}")

    scores = []
    for x_band, y_band in zip(ref, test):
        kept: list[float] = []
        all_equal = True
        for row in _window_starts(height):
            for col in _window_starts(width):
                x = x_band[row:row + UIQI_WINDOW, col:col + UIQI_WINDOW]
                y = y_band[row:row + UIQI_WINDOW, col:col + UIQI_WINDOW]
                q = _quality_index(x, y)
                if q is None:
                    all_equal = all_equal and bool(np.array_equal(x, y))
                else:
                    kept.append(q)
        if kept:
            scores.append(float(np.mean(kept)))
        else:
            scores.append(1.0 if all_equal else 0.0)
    return float(np.mean(scores))


@dataclass
class MetricsReport:
    rmse: float
    psnr_db: float
    sam_deg: float
    ergas: float
    uiqi: float
    per_band_psnr: list[float] = field(default_factory=list)
    sorted_per_pixel_sam: list[float] = field(default_factory=list)

    def to_dict(self) -> MetricsPayload:
        return MetricsPayload(**asdict(self))  # type: ignore[typeddict-item]

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("RMSE", self.rmse),
            ("PSNR", self.psnr_db),
            ("SAM", self.sam_deg),
            ("ERGAS", self.ergas),
            ("UIQI", self.uiqi),
        ]


def evaluate(ref: HyperCube, test: HyperCube, r: int) -> MetricsReport:
    psnr_db, per_band = psnr(ref, test)
    sam_deg, per_pixel = sam(ref, test)
    return MetricsReport(
        rmse=rmse(ref, test),
        psnr_db=psnr_db,
        sam_deg=sam_deg,
        ergas=ergas(ref, test, r),
        uiqi=uiqi(ref, test),
        per_band_psnr=per_band,
        sorted_per_pixel_sam=per_pixel,
    )
