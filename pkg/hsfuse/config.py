"""Configuration for hsfuse runs."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from hsfuse.errors import ArgumentError


class Precision(str, Enum):
    FLOAT64 = "float64"
    FLOAT32 = "float32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.value)


class UpsampleMethod(str, Enum):
    BILINEAR = "bilinear"
    NEAREST = "nearest"


@dataclass
class SimConfig:
    ratio: int = 8
    kernel_size: int = 15
    sigma: float = 3.4
    snr_hsi: float = 30.0
    snr_msi: float = 40.0
    offset: int | None = None
    seed: int = 0

    @property
    def resolved_offset(self) -> int:
        return self.ratio // 2 if self.offset is None else self.offset

    def validate(self) -> None:
        if self.ratio < 1:
            raise ArgumentError(f"ratio must be >= 1, got {self.ratio}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ArgumentError(f"kernel size must be odd, got {self.kernel_size}")
        if not self.sigma > 0:
            raise ArgumentError(f"sigma must be positive, got {self.sigma}")
        for name, snr in (("snr_hsi", self.snr_hsi), ("snr_msi", self.snr_msi)):
            if not (snr > 0 or math.isinf(snr)):
                raise ArgumentError(f"{name} must be positive or inf, got {snr}")
        if not 0 <= self.resolved_offset < self.ratio:
            raise ArgumentError(f"offset must lie in [0, {self.ratio}), got {self.resolved_offset}")


@dataclass
class MiaeConfig:
    rank: int = 80
    stages: int = 3
    leaky_slope: float = 0.01
    iterations: int = 10_000
    batch: int = 25
    patch: int = 40
    stride: int = 24
    learning_rate: float = 5e-3
    decay_start: int = 1000
    decay_span: int = 9000
    upsample: UpsampleMethod = UpsampleMethod.BILINEAR
    seed: int = 0
    log_every: int = 100
    inference_chunk: int = 65_536

    def validate(
        self,
        n_B: int,
        n_b: int,
        height: int,
        width: int,
        ratio: int,
        kernel_size: int,
    ) -> None:
        if not 1 <= self.rank < min(n_B, height * width):
            raise ArgumentError(
                f"rank must satisfy 1 <= J < min(N_B, N_H*N_W) = {min(n_B, height * width)}, "
                f"got {self.rank}"
            )
        if self.stages < 1:
            raise ArgumentError(f"stages must be >= 1, got {self.stages}")
        if not 0 < self.leaky_slope < 1:
            raise ArgumentError(f"leaky slope must lie in (0, 1), got {self.leaky_slope}")
        if self.iterations < 0 or self.batch < 1:
            raise ArgumentError("iterations must be >= 0 and batch >= 1")
        if self.patch % ratio or self.stride % ratio:
            raise ArgumentError(
                f"patch ({self.patch}) and stride ({self.stride}) must be multiples of ratio {ratio}"
            )
        if self.stride < ratio:
            raise ArgumentError(f"stride must be at least one LR pixel ({ratio}), got {self.stride}")
        if self.patch > min(height, width):
            raise ArgumentError(f"patch {self.patch} exceeds image size {height}x{width}")
        if self.patch <= 2 * (kernel_size // 2):
            raise ArgumentError(
                f"patch {self.patch} must exceed the kernel footprint {2 * (kernel_size // 2)}"
            )
        if self.patch // ratio < 3:
            raise ArgumentError("patch must span at least 3 LR pixels per side")
        if n_b < 1:
            raise ArgumentError("MSI must have at least one band")
        if self.decay_span < 1 or self.inference_chunk < 1:
            raise ArgumentError("decay span and inference chunk must be positive")


@dataclass
class BlindConfig:
    kernel_size: int = 15
    ratio: int = 8
    offset: int | None = None
    iterations: int = 5000
    learning_rate: float = 5e-5
    seed: int = 0
    log_every: int = 500

    @property
    def resolved_offset(self) -> int:
        return self.ratio // 2 if self.offset is None else self.offset

    def validate(self) -> None:
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ArgumentError(f"kernel size must be odd, got {self.kernel_size}")
        if self.ratio < 1:
            raise ArgumentError(f"ratio must be >= 1, got {self.ratio}")
        if not 0 <= self.resolved_offset < self.ratio:
            raise ArgumentError(f"offset must lie in [0, {self.ratio}), got {self.resolved_offset}")
        if self.iterations < 0 or not self.learning_rate > 0:
            raise ArgumentError("iterations must be >= 0 and learning rate positive")


@dataclass
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    miae: MiaeConfig = field(default_factory=MiaeConfig)
    blind: BlindConfig = field(default_factory=BlindConfig)
    precision: Precision = Precision.FLOAT64
    verbose: bool = False

    @property
    def dtype(self) -> np.dtype:
        return self.precision.dtype

    @classmethod
    def from_env(cls) -> "Config":
        config = cls()

        if verbose := os.environ.get("HSFUSE_VERBOSE"):
            config.verbose = verbose.lower() in ("1", "true", "yes")

        if precision := os.environ.get("HSFUSE_PRECISION"):
            try:
                config.precision = Precision(precision.lower())
            except ValueError:
                pass  # Keep default if invalid value
        return config
