"""Patch-based training of the fusion network and full-image inference."""

from __future__ import annotations

import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsfuse.autodiff import AdamState, adam_step, constant, scale
from hsfuse.config import MiaeConfig
from hsfuse.degradation import check_cube
from hsfuse.errors import DimensionError
from hsfuse.interpolation import upsample
from hsfuse.network import (
    MiaeParams,
    PatchPlan,
    batch_loss,
    decode,
    encode,
    init_params,
    lr_schedule,
    make_patch_plan,
    project_decoder,
)
from hsfuse.types import BlurKernel, HyperCube, SrfMatrix

logger = logging.getLogger(__name__)

BYTES_PER_GB = 1024 ** 3


def get_memory_usage() -> tuple[float, float]:
    try:
        import psutil
        process = psutil.Process(os.getpid())
        mem_info = process.memory_info()
        rss_gb = mem_info.rss / BYTES_PER_GB
        percent = process.memory_percent()
        return rss_gb, percent
    except ImportError:
        try:
            import resource
            # ru_maxrss is in kilobytes on Linux and bytes on macOS
            unit = 1 if sys.platform == "darwin" else 1024
            rss_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * unit / BYTES_PER_GB
            return rss_gb, 0.0
        except Exception:
            return 0.0, 0.0


@dataclass
class TrainResult:
    fused: HyperCube
    params: MiaeParams
    loss_history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)


def resolve_ratio(lr_hsi: HyperCube, hr_msi: HyperCube) -> int:
    """Integer spatial ratio between the two observations."""
    check_cube(lr_hsi, "LR-HSI")
    check_cube(hr_msi, "HR-MSI")
    _, h, w = lr_hsi.shape
    _, H, W = hr_msi.shape
    if H % h or W % w or H // h != W // w:
        raise DimensionError(f"HR-MSI size {H}x{W} is not an integer multiple of LR-HSI size {h}x{w}")
    return H // h


def extract_patches(cube: NDArray, origins: list[tuple[int, int]], size: int, step: int = 1) -> NDArray:
    """Stack the patches at ``origins`` (HR coordinates) as (bands, n, size/step, size/step)."""
    side = size // step
    return np.stack(
        [cube[:, row // step:row // step + side, col // step:col // step + side] for row, col in origins],
        axis=1,
    )


def fuse_image(
    params: MiaeParams,
    hr_msi: HyperCube,
    y_up: HyperCube,
    cfg: MiaeConfig | None = None,
) -> HyperCube:
    """Encode and decode every pixel in raster order."""
    cfg = cfg or MiaeConfig()
    n_b, height, width = hr_msi.shape
    n_B = y_up.shape[0]
    if y_up.shape[1:] != (height, width):
        raise DimensionError(f"upsampled HSI {y_up.shape} does not match MSI grid {hr_msi.shape}")

    frozen = params.detached()
    dtype = frozen.A.value.dtype
    z_cols = hr_msi.reshape(n_b, height * width)
    y_cols = y_up.reshape(n_B, height * width)
    fused = np.empty((n_B, height * width), dtype=dtype)
    for start in range(0, height * width, cfg.inference_chunk):
        stop = min(start + cfg.inference_chunk, height * width)
        s = encode(constant(z_cols[:, start:stop], dtype), constant(y_cols[:, start:stop], dtype), frozen, cfg)
        fused[:, start:stop] = decode(s, frozen.A).value
    return fused.reshape(n_B, height, width)


def train(
    lr_hsi: HyperCube,
    hr_msi: HyperCube,
    kernel: BlurKernel,
    R: SrfMatrix,
    cfg: MiaeConfig,
    offset: int | None = None,
    dtype: np.dtype | type = np.float64,
) -> TrainResult:
    """Train on randomly sampled patches with Adam, then fuse the full image."""
    dtype = np.dtype(dtype)
    r = resolve_ratio(lr_hsi, hr_msi)
    offset = r // 2 if offset is None else offset
    n_B = lr_hsi.shape[0]
    n_b, height, width = hr_msi.shape
    if R.shape != (n_b, n_B):
        raise DimensionError(f"SRF shape {R.shape} does not map {n_B} HSI bands to {n_b} MSI bands")
    cfg.validate(n_B, n_b, height, width, r, kernel.shape[0])

    lr_hsi = lr_hsi.astype(dtype, copy=False)
    hr_msi = hr_msi.astype(dtype, copy=False)
    kernel = np.asarray(kernel, dtype=dtype)
    R = np.asarray(R, dtype=dtype)
    y_up = upsample(lr_hsi, r, cfg.upsample)

    plan: PatchPlan = make_patch_plan(height, width, cfg.patch, cfg.stride, r)
    init_seed, sample_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init_params(cfg, n_B, n_b, init_seed, dtype)
    leaves = params.leaves()
    sampler = np.random.default_rng(sample_seed)
    state = AdamState()

    logger.info(
        "Training J=%d K=%d (%d parameters) on %d patches of %dx%d, %d iterations",
        cfg.rank, cfg.stages, params.count(), len(plan), cfg.patch, cfg.patch, cfg.iterations,
    )
    result = TrainResult(fused=np.empty(0), params=params)
    started = time.time()
    for iteration in range(1, cfg.iterations + 1):
        rate = lr_schedule(iteration, cfg.learning_rate, cfg.decay_start, cfg.decay_span)
        picks = sampler.integers(len(plan), size=cfg.batch)
        origins = [plan.origins[i] for i in picks]
        loss = scale(
            batch_loss(
                extract_patches(hr_msi, origins, cfg.patch),
                extract_patches(y_up, origins, cfg.patch),
                extract_patches(lr_hsi, origins, cfg.patch, step=r),
                params,
                kernel,
                R,
                r,
                offset,
                cfg,
            ),
            1.0 / cfg.batch,
        )
        loss.backward()
        adam_step(leaves, state, rate)
        project_decoder(params)

        result.loss_history.append(loss.item())
        result.lr_history.append(rate)
        if cfg.log_every and iteration % cfg.log_every == 0:
            logger.info("iter %5d  lr %.3e  loss %.6f", iteration, rate, loss.item())

    result.fused = fuse_image(params, hr_msi, y_up, cfg)
    rss_gb, _ = get_memory_usage()
    logger.info("Training finished in %.1fs (RAM %.2f GB)", time.time() - started, rss_gb)
    return result
