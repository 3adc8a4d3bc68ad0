"""Blind estimation of the blur kernel and spectral response from the two observations.

Both degradations map their observation onto the common LR multispectral
grid: the MSI is blurred and decimated, the HSI is spectrally mixed. The
kernel and SRF are fitted by Adam on the L1 gap between the two, with a
projection onto the feasible set after every step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsfuse.autodiff import (
    AdamState,
    DiffValue,
    adam_step,
    clamp01,
    constant,
    conv2d_perband,
    l1_loss,
    matmul,
    reshape,
    subsample,
)
from hsfuse.config import BlindConfig
from hsfuse.degradation import check_cube, make_box_srf, make_gaussian_kernel
from hsfuse.errors import DimensionError
from hsfuse.trainer import get_memory_usage
from hsfuse.types import BlurKernel, HyperCube, SrfMatrix

logger = logging.getLogger(__name__)


@dataclass
class BlindResult:
    kernel: BlurKernel
    R: SrfMatrix
    loss_history: list[float] = field(default_factory=list)
    best_loss: float = float("inf")
    best_iteration: int = 0

    @property
    def kernel_normalized(self) -> BlurKernel:
        total = self.kernel.sum()
        if total <= 0:
            return np.full_like(self.kernel, 1.0 / self.kernel.size)
        return self.kernel / total


def init_blind(k: int, n_b: int, n_B: int, seed: int = 0) -> tuple[BlurKernel, SrfMatrix]:
    """Broad Gaussian kernel and box SRF; both lie inside the feasible set.

    ``seed`` is unused; the initialization is deterministic.
    """
    del seed
    return make_gaussian_kernel(k, k / 4), make_box_srf(n_B, n_b)


def project_feasible(kernel: NDArray, R: NDArray) -> None:
    """Clip the kernel to [0, 1]; make R nonnegative with unit row sums, in place."""
    np.clip(kernel, 0, 1, out=kernel)
    np.maximum(R, 0, out=R)
    sums = R.sum(axis=1)
    empty = sums <= 0
    R[empty] = 1.0 / R.shape[1]
    R[~empty] /= sums[~empty, None]


def _check_pair(msi: HyperCube, hsi: HyperCube, ratio: int, kernel_size: int) -> None:
    check_cube(msi, "HR-MSI")
    check_cube(hsi, "LR-HSI")
    _, H, W = msi.shape
    _, h, w = hsi.shape
    if (H, W) != (ratio * h, ratio * w):
        raise DimensionError(f"MSI size {H}x{W} is not {ratio} x the HSI size {h}x{w}")
    if kernel_size > min(H, W):
        raise DimensionError(f"kernel size {kernel_size} exceeds MSI size {H}x{W}")


def blind_loss_graph(
    kernel: DiffValue,
    R: DiffValue,
    msi: HyperCube,
    hsi: HyperCube,
    ratio: int,
    offset: int,
) -> DiffValue:
    n_B, h, w = hsi.shape
    dtype = kernel.value.dtype
    z_bar = clamp01(subsample(conv2d_perband(constant(msi, dtype), kernel), ratio, offset))
    mixed = matmul(R, constant(hsi.reshape(n_B, h * w), dtype))
    y_bar = clamp01(reshape(mixed, (R.shape[0], h, w)))
    return l1_loss(z_bar, y_bar)


def blind_loss(
    kernel: BlurKernel,
    R: SrfMatrix,
    msi: HyperCube,
    hsi: HyperCube,
    ratio: int,
    offset: int,
) -> float:
    """L1 gap between the degraded MSI and the spectrally mixed HSI at a given pair."""
    _check_pair(msi, hsi, ratio, kernel.shape[0])
    return blind_loss_graph(constant(kernel), constant(R), msi, hsi, ratio, offset).item()


def estimate_degradation(
    msi: HyperCube,
    hsi: HyperCube,
    cfg: BlindConfig,
    dtype: np.dtype | type = np.float64,
) -> BlindResult:
    """Fit kernel and SRF; returns the feasible iterate with the lowest loss."""
    cfg.validate()
    _check_pair(msi, hsi, cfg.ratio, cfg.kernel_size)
    if msi.shape[0] > hsi.shape[0]:
        logger.warning("MSI has more bands (%d) than the HSI (%d)", msi.shape[0], hsi.shape[0])
    dtype = np.dtype(dtype)
    offset = cfg.resolved_offset
    msi = msi.astype(dtype, copy=False)
    hsi = hsi.astype(dtype, copy=False)

    kernel0, R0 = init_blind(cfg.kernel_size, msi.shape[0], hsi.shape[0], cfg.seed)
    kernel = DiffValue(kernel0.astype(dtype), requires_grad=True)
    R = DiffValue(R0.astype(dtype), requires_grad=True)
    state = AdamState()
    result = BlindResult(kernel=kernel.value.copy(), R=R.value.copy())

    started = time.time()
    for iteration in range(1, cfg.iterations + 1):
        loss = blind_loss_graph(kernel, R, msi, hsi, cfg.ratio, offset)
        value = loss.item()
        result.loss_history.append(value)
        if value < result.best_loss:
            result.best_loss = value
            result.best_iteration = iteration
            result.kernel = kernel.value.copy()
            result.R = R.value.copy()

        loss.backward()
        adam_step([kernel, R], state, cfg.learning_rate)
        project_feasible(kernel.value, R.value)

        if cfg.log_every and iteration % cfg.log_every == 0:
            logger.info("blind iter %5d  loss %.6f", iteration, value)

    final = blind_loss_graph(kernel, R, msi, hsi, cfg.ratio, offset).item()
    if final < result.best_loss:
        result.best_loss = final
        result.best_iteration = cfg.iterations + 1
        result.kernel = kernel.value.copy()
        result.R = R.value.copy()

    rss_gb, _ = get_memory_usage()
    logger.info(
        "Blind estimation finished in %.1fs: best loss %.6f at iteration %d (RAM %.2f GB)",
        time.time() - started, result.best_loss, result.best_iteration, rss_gb,
    )
    return result
