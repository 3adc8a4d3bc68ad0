"""Degradation operators (blur, decimation, spectral response) and the Wald simulator.

The blur is a shift-invariant odd-sized kernel applied band by band with the
same edge-repeating mirror padding the differentiable convolution uses, so
simulated observations and the training losses agree exactly.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy.signal.windows import gaussian

from hsfuse.autodiff import correlate_symmetric, subsample_array
from hsfuse.config import SimConfig
from hsfuse.errors import ArgumentError, DimensionError
from hsfuse.types import BlurKernel, HyperCube, SrfMatrix

logger = logging.getLogger(__name__)


def check_cube(x: NDArray, name: str = "cube") -> None:
    if x.ndim != 3 or min(x.shape) < 1:
        raise DimensionError(f"{name} must be a non-empty (bands, height, width) array, got {x.shape}")


def make_gaussian_kernel(size: int, sigma: float) -> BlurKernel:
    """Isotropic Gaussian sampled at integer offsets from the center, summing to one."""
    if size < 1 or size % 2 == 0:
        raise ArgumentError(f"kernel size must be odd, got {size}")
    if not sigma > 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    window = gaussian(size, std=sigma, sym=True)
    kernel = np.outer(window, window)
    return kernel / kernel.sum()


def scale_to_unit(x: HyperCube) -> HyperCube:
    """Global min-max rescaling into [0, 1]; a constant cube maps to zeros."""
    check_cube(x)
    low, high = float(x.min()), float(x.max())
    if high == low:
        return np.zeros_like(x)
    return np.clip((x - low) / (high - low), 0, 1)


def apply_psf(x: HyperCube, kernel: BlurKernel) -> HyperCube:
    check_cube(x)
    return correlate_symmetric(x, np.asarray(kernel, dtype=x.dtype))


def downsample(x: HyperCube, r: int, offset: int) -> HyperCube:
    check_cube(x)
    return subsample_array(x, r, offset)


def apply_srf(x: HyperCube, R: SrfMatrix) -> HyperCube:
    check_cube(x)
    if R.ndim != 2 or R.shape[1] != x.shape[0]:
        raise DimensionError(f"SRF with shape {R.shape} cannot mix {x.shape[0]} bands")
    bands, height, width = x.shape
    mixed = np.asarray(R, dtype=x.dtype) @ x.reshape(bands, height * width)
    return mixed.reshape(R.shape[0], height, width)


def make_box_srf(n_in: int, n_out: int) -> SrfMatrix:
    """Average contiguous band groups; the remainder goes to the first groups."""
    if not 1 <= n_out <= n_in:
        raise ArgumentError(f"box SRF needs 1 <= n_out <= n_in, got n_in={n_in}, n_out={n_out}")
    base, extra = divmod(n_in, n_out)
    srf = np.zeros((n_out, n_in))
    start = 0
    for row in range(n_out):
        width = base + (1 if row < extra else 0)
        srf[row, start:start + width] = 1.0 / width
        start += width
    return srf


def noise_for_snr(x: HyperCube, snr_db: float, rng: np.random.Generator) -> NDArray:
    """Zero-mean Gaussian noise at ``snr_db`` relative to the cube's global mean square."""
    signal_power = float(np.mean(np.square(x, dtype=np.float64)))
    sigma = math.sqrt(signal_power / 10 ** (snr_db / 10))
    return rng.normal(0.0, sigma, size=x.shape).astype(x.dtype)


def add_noise_snr(x: HyperCube, snr_db: float, seed: int | np.random.SeedSequence) -> HyperCube:
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    if not snr_db > 0:
        raise ArgumentError(f"SNR must be positive or inf, got {snr_db}")
    rng = np.random.default_rng(seed)
    return np.clip(x + noise_for_snr(x, snr_db, rng), 0, 1)


def simulate_wald(ref: HyperCube, cfg: SimConfig, srf: SrfMatrix) -> tuple[HyperCube, HyperCube]:
    """Blur, decimate and add noise for the LR-HSI; mix bands and add noise for the HR-MSI."""
    cfg.validate()
    check_cube(ref, "reference")
    if ref.shape[1] % cfg.ratio or ref.shape[2] % cfg.ratio:
        raise DimensionError(f"reference size {ref.shape[1:]} is not divisible by ratio {cfg.ratio}")

    hsi_seed, msi_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    kernel = make_gaussian_kernel(cfg.kernel_size, cfg.sigma)
    blurred = downsample(apply_psf(ref, kernel), cfg.ratio, cfg.resolved_offset)
    lr_hsi = add_noise_snr(blurred, cfg.snr_hsi, hsi_seed)
    hr_msi = add_noise_snr(apply_srf(ref, srf), cfg.snr_msi, msi_seed)

    logger.info(
        "Simulated LR-HSI %s and HR-MSI %s (ratio %d, kernel %d, sigma %.2f, SNR %s/%s dB)",
        lr_hsi.shape, hr_msi.shape, cfg.ratio, cfg.kernel_size, cfg.sigma, cfg.snr_hsi, cfg.snr_msi,
    )
    return lr_hsi, hr_msi
