"""Readers and writers for cubes (HSC), kernels (KRN), SRF matrices and CSV reports.

HSC layout: the 4-byte magic ``HSC1``, then bands, height and width as
little-endian uint32, then ``bands * height * width`` little-endian float32
values, band-major then row-major.
"""

from __future__ import annotations

import csv
import logging
import struct
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from hsfuse.errors import FormatError
from hsfuse.types import BlurKernel, HyperCube, SrfMatrix

logger = logging.getLogger(__name__)

HSC_MAGIC = b"HSC1"
HSC_HEADER = struct.Struct("<4sIII")
HSC_DTYPE = np.dtype("<f4")

SRF_ROW_TOLERANCE = 1e-6
SRF_RENORMALIZE_LIMIT = 1e-3


def save_cube(path: str | Path, cube: HyperCube) -> None:
    cube = np.asarray(cube)
    if cube.ndim != 3:
        raise FormatError(f"HSC cubes are 3-D, got shape {cube.shape}")
    if not np.all(np.isfinite(cube)):
        raise FormatError("refusing to write non-finite values to an HSC cube")
    bands, height, width = cube.shape
    with open(path, "wb") as f:
        f.write(HSC_HEADER.pack(HSC_MAGIC, bands, height, width))
        f.write(np.ascontiguousarray(cube, dtype=HSC_DTYPE).tobytes())


def load_cube(path: str | Path, dtype: np.dtype | type = np.float64) -> HyperCube:
    raw = Path(path).read_bytes()
    if len(raw) < HSC_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} of {HSC_HEADER.size} bytes)")
    magic, bands, height, width = HSC_HEADER.unpack_from(raw)
    if magic != HSC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {HSC_MAGIC!r}")

    expected = HSC_DTYPE.itemsize * bands * height * width
    payload = raw[HSC_HEADER.size:]
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    if min(bands, height, width) < 1:
        raise FormatError(f"{path}: empty cube {bands}x{height}x{width}")

    cube = np.frombuffer(payload, dtype=HSC_DTYPE).reshape(bands, height, width)
    if not np.all(np.isfinite(cube)):
        raise FormatError(f"{path}: payload holds non-finite values")
    return cube.astype(dtype)


def save_kernel(path: str | Path, kernel: BlurKernel) -> None:
    kernel = np.asarray(kernel, dtype=np.float64)
    lines = [str(kernel.shape[0])]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in kernel)
    Path(path).write_text("\n".join(lines) + "\n")


def load_kernel(path: str | Path) -> BlurKernel:
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty kernel file")
    try:
        k = int(lines[0])
        rows = [[float(v) for v in line.split()] for line in lines[1:]]
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    if k < 1 or k % 2 == 0:
        raise FormatError(f"{path}: kernel size must be odd, got {k}")
    if len(rows) != k or any(len(row) != k for row in rows):
        raise FormatError(f"{path}: expected {k} rows of {k} values")
    kernel = np.array(rows)
    if not np.all(np.isfinite(kernel)):
        raise FormatError(f"{path}: kernel holds non-finite values")
    if np.any(kernel < 0) or np.any(kernel > 1):
        raise FormatError(f"{path}: kernel weights must lie in [0, 1]")
    return kernel


def save_srf(path: str | Path, R: SrfMatrix) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in np.asarray(R, dtype=np.float64):
            writer.writerow(repr(float(v)) for v in row)


def load_srf(path: str | Path) -> SrfMatrix:
    """Parse an SRF CSV; rows off by at most 1e-3 are renormalized with a warning."""
    try:
        with open(path, newline="") as f:
            rows = [[float(v) for v in row] for row in csv.reader(f) if row]
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    if not rows or any(len(row) != len(rows[0]) for row in rows):
        raise FormatError(f"{path}: SRF rows must be non-empty and equally long")

    R = np.array(rows)
    if not np.all(np.isfinite(R)):
        raise FormatError(f"{path}: SRF holds non-finite values")
    if np.any(R < 0):
        raise FormatError(f"{path}: SRF weights must be nonnegative")
    sums = R.sum(axis=1)
    deviation = np.abs(sums - 1)
    if np.any(deviation > SRF_RENORMALIZE_LIMIT):
        raise FormatError(f"{path}: SRF row sums {sums.tolist()} are not 1")
    if np.any(deviation > SRF_ROW_TOLERANCE):
        logger.warning("%s: renormalizing SRF rows (max deviation %.2e)", path, deviation.max())
        R = R / sums[:, None]
    return R


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def write_loss_csv(path: str | Path, losses: Sequence[float], rates: Sequence[float] | None = None) -> None:
    rates = rates if rates is not None else [float("nan")] * len(losses)
    write_csv(
        path,
        ("iteration", "learning_rate", "loss"),
        ((i, repr(rate), repr(loss)) for i, (rate, loss) in enumerate(zip(rates, losses), start=1)),
    )


def write_per_band_psnr(path: str | Path, per_band: Sequence[float]) -> None:
    write_csv(path, ("band", "psnr_db"), enumerate(per_band))


def write_per_pixel_sam(path: str | Path, sorted_sam: Sequence[float]) -> None:
    write_csv(path, ("rank", "sam_deg"), enumerate(sorted_sam))


def read_csv_rows(path: str | Path) -> list[list[str]]:
    with open(path, newline="") as f:
        return [row for row in csv.reader(f)]
