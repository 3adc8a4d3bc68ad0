"""The model-inspired autoencoder: unrolled encoder, NMF decoder and patch losses.

Pixels are columns. The encoder maps each pixel's MSI spectrum ``z`` and
upsampled LR-HSI spectrum ``y_up`` to a latent abundance vector ``s`` in
``[0, 1]^J``; the decoder mixes it with the spectral matrix ``A``. Columns
never interact, so a batch of pixels gives the same latent vectors as one
pixel at a time, up to rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsfuse.autodiff import (
    DEFAULT_LEAKY_SLOPE,
    DiffValue,
    add,
    clamp01,
    concat,
    constant,
    conv2d_perband,
    crop,
    fully_connected,
    l1_loss,
    leaky_relu,
    matmul,
    reshape,
    subsample,
)
from hsfuse.config import MiaeConfig
from hsfuse.errors import ArgumentError, DimensionError
from hsfuse.types import BlurKernel, LayerSpec, SrfMatrix

logger = logging.getLogger(__name__)

# LR pixels discarded on each side of the Y-term
BOUNDARY_DISCARD = 1


@dataclass
class Layer:
    name: str
    weight: DiffValue
    bias: DiffValue

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: DiffValue) -> DiffValue:
        return fully_connected(x, self.weight, self.bias)


@dataclass
class MiaeParams:
    """Trainable parameters: encoder layers and the decoder spectral matrix ``A``."""

    A: DiffValue
    theta_z: Layer
    theta_y: tuple[Layer, Layer]
    # stages 2..K
    theta_s: list[Layer] = field(default_factory=list)
    # stages 1..K
    combiners: list[Layer] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def stages(self) -> int:
        return len(self.combiners)

    def layers(self) -> list[Layer]:
        return [self.theta_z, *self.theta_y, *self.theta_s, *self.combiners]

    def leaves(self) -> list[DiffValue]:
        values: list[DiffValue] = []
        for layer in self.layers():
            values.extend((layer.weight, layer.bias))
        values.append(self.A)
        return values

    def inventory(self) -> list[LayerSpec]:
        specs = [LayerSpec(name=layer.name, n_out=layer.n_out, n_in=layer.n_in) for layer in self.layers()]
        specs.append(LayerSpec(name="A", n_out=self.A.shape[0], n_in=self.A.shape[1]))
        return specs

    def count(self) -> int:
        return sum(leaf.value.size for leaf in self.leaves())

    def detached(self) -> "MiaeParams":
        """Constant view of the same values, for inference without graph bookkeeping."""

        def freeze(layer: Layer) -> Layer:
            return Layer(layer.name, constant(layer.weight.value), constant(layer.bias.value))

        return MiaeParams(
            A=constant(self.A.value),
            theta_z=freeze(self.theta_z),
            theta_y=(freeze(self.theta_y[0]), freeze(self.theta_y[1])),
            theta_s=[freeze(layer) for layer in self.theta_s],
            combiners=[freeze(layer) for layer in self.combiners],
        )


def _dense(name: str, n_out: int, n_in: int, rng: np.random.Generator, dtype: np.dtype) -> Layer:
    bound = 1.0 / math.sqrt(n_in)
    weight = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)
    return Layer(
        name,
        DiffValue(weight, requires_grad=True),
        DiffValue(np.zeros(n_out, dtype=dtype), requires_grad=True),
    )


def init_params(
    cfg: MiaeConfig,
    n_B: int,
    n_b: int,
    seed: int | np.random.SeedSequence,
    dtype: np.dtype | type = np.float64,
) -> MiaeParams:
    """Uniform fan-in initialization of every layer, zero biases, ``A`` uniform on [0, 1)."""
    if cfg.rank < 1 or cfg.stages < 1 or n_B < 1 or n_b < 1:
        raise ArgumentError(f"invalid network size: J={cfg.rank}, K={cfg.stages}, N_B={n_B}, N_b={n_b}")
    dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    J = cfg.rank

    theta_z = _dense("theta_z", J, n_b, rng, dtype)
    theta_y = (_dense("theta_y.1", J, n_B, rng, dtype), _dense("theta_y.2", J, J, rng, dtype))
    combiners = [_dense("theta.1", J, 2 * J, rng, dtype)]
    theta_s = []
    for k in range(2, cfg.stages + 1):
        theta_s.append(_dense(f"theta_s.{k}", J, J, rng, dtype))
        combiners.append(_dense(f"theta.{k}", J, 3 * J, rng, dtype))
    A = DiffValue(rng.uniform(0.0, 1.0, size=(n_B, J)).astype(dtype), requires_grad=True)

    return MiaeParams(A=A, theta_z=theta_z, theta_y=theta_y, theta_s=theta_s, combiners=combiners)


def encode(z: DiffValue, y_up: DiffValue, params: MiaeParams, cfg: MiaeConfig | None = None) -> DiffValue:
    """Unrolled K-stage encoder; returns latent vectors clamped to [0, 1]."""
    slope = cfg.leaky_slope if cfg is not None else DEFAULT_LEAKY_SLOPE
    if z.shape[0] != params.theta_z.n_in or y_up.shape[0] != params.theta_y[0].n_in:
        raise DimensionError(
            f"encoder expects {params.theta_z.n_in} MSI and {params.theta_y[0].n_in} HSI bands, "
            f"got {z.shape[0]} and {y_up.shape[0]}"
        )
    if z.shape[1:] != y_up.shape[1:]:
        raise DimensionError(f"z {z.shape} and y_up {y_up.shape} hold different pixel counts")

    u_z = leaky_relu(params.theta_z(z), slope)
    u_y = leaky_relu(params.theta_y[1](leaky_relu(params.theta_y[0](y_up), slope)), slope)

    s = leaky_relu(params.combiners[0](concat([u_z, u_y])), slope)
    for theta_s, combiner in zip(params.theta_s, params.combiners[1:]):
        step = leaky_relu(theta_s(s), slope)
        s = leaky_relu(combiner(concat([step, u_z, u_y])), slope)
    return clamp01(s)


def decode(s: DiffValue, A: DiffValue) -> DiffValue:
    return clamp01(matmul(clamp01(A), clamp01(s)))


def project_decoder(params: MiaeParams) -> None:
    """Clip ``A`` into [0, 1] in place; entries on a bound still receive gradient."""
    np.clip(params.A.value, 0, 1, out=params.A.value)


@dataclass(frozen=True)
class PatchPlan:
    """HR-grid origins (row, col) of the training patches."""

    origins: list[tuple[int, int]]
    size: int

    def __len__(self) -> int:
        return len(self.origins)


def _axis_origins(dim: int, p: int, s: int) -> list[int]:
    if p > dim:
        raise ArgumentError(f"patch size {p} exceeds image dimension {dim}")
    origins = list(range(0, dim - p + 1, s))
    if origins[-1] + p < dim:
        origins.append(dim - p)
    return origins


def make_patch_plan(height: int, width: int, p: int, s: int, r: int) -> PatchPlan:
    if p < 1 or s < 1 or p % r or s % r:
        raise ArgumentError(f"patch {p} and stride {s} must be positive multiples of ratio {r}")
    rows = _axis_origins(height, p, s)
    cols = _axis_origins(width, p, s)
    return PatchPlan(origins=[(row, col) for row in rows for col in cols], size=p)


def lr_schedule(iteration: int, base: float, decay_start: int = 1000, decay_span: int = 9000) -> float:
    """Constant for ``decay_start`` iterations, then linear decay to zero over ``decay_span``."""
    if iteration < 1:
        raise ArgumentError(f"iteration counts from 1, got {iteration}")
    factor = 1.0 - max(0, iteration - decay_start) / decay_span
    return base * max(factor, 0.0)


def reconstruction_loss(
    x_hat: DiffValue,
    z_patches: NDArray,
    y_patches: NDArray,
    kernel: BlurKernel,
    R: SrfMatrix,
    r: int,
    offset: int,
) -> DiffValue:
    """Loss of a stack of reconstructed patches against both observations.

    ``x_hat`` holds one column per HR pixel, ordered (patch, row, col);
    ``z_patches`` is (N_b, n, p, p) and ``y_patches`` is (N_B, n, p/r, p/r).
    The Z-term covers every pixel; the Y-term drops the outer LR ring, which
    the blur mixes with padding.
    """
    n_b, n, p, _ = z_patches.shape
    n_B = y_patches.shape[0]
    q = y_patches.shape[2]
    if p % r or q != p // r or y_patches.shape[1] != n or x_hat.shape != (n_B, n * p * p):
        raise DimensionError(
            f"inconsistent patch stack: x_hat {x_hat.shape}, z {z_patches.shape}, y {y_patches.shape}, r={r}"
        )
    if q < 2 * BOUNDARY_DISCARD + 1:
        raise ArgumentError(f"patch spans {q} LR pixels; at least {2 * BOUNDARY_DISCARD + 1} are needed")
    dtype = x_hat.value.dtype

    z_hat = clamp01(matmul(constant(R, dtype), x_hat))
    z_term = l1_loss(z_hat, constant(z_patches.reshape(n_b, n * p * p), dtype))

    cube = reshape(x_hat, (n_B * n, p, p))
    y_hat = clamp01(subsample(conv2d_perband(cube, constant(kernel, dtype)), r, offset))
    y_ref = y_patches.reshape(n_B * n, q, q)[:, BOUNDARY_DISCARD:q - BOUNDARY_DISCARD, BOUNDARY_DISCARD:q - BOUNDARY_DISCARD]
    y_term = l1_loss(crop(y_hat, BOUNDARY_DISCARD), constant(y_ref, dtype))
    return add(z_term, y_term)


def batch_loss(
    z_patches: NDArray,
    yup_patches: NDArray,
    y_patches: NDArray,
    params: MiaeParams,
    kernel: BlurKernel,
    R: SrfMatrix,
    r: int,
    offset: int,
    cfg: MiaeConfig | None = None,
) -> DiffValue:
    """Summed patch loss over a stack of patches laid out (bands, n, height, width)."""
    n_b, n, p, _ = z_patches.shape
    n_B = yup_patches.shape[0]
    if yup_patches.shape[1:] != (n, p, p):
        raise DimensionError(f"MSI patches {z_patches.shape} and upsampled patches {yup_patches.shape} differ")
    dtype = params.A.value.dtype
    z_cols = constant(z_patches.reshape(n_b, n * p * p), dtype)
    y_cols = constant(yup_patches.reshape(n_B, n * p * p), dtype)
    x_hat = decode(encode(z_cols, y_cols, params, cfg), params.A)
    return reconstruction_loss(x_hat, z_patches, y_patches, kernel, R, r, offset)


def patch_loss(
    z_patch: NDArray,
    yup_patch: NDArray,
    y_patch_lr: NDArray,
    params: MiaeParams,
    kernel: BlurKernel,
    R: SrfMatrix,
    r: int,
    offset: int,
    cfg: MiaeConfig | None = None,
) -> DiffValue:
    return batch_loss(
        z_patch[:, None],
        yup_patch[:, None],
        y_patch_lr[:, None],
        params,
        kernel,
        R,
        r,
        offset,
        cfg,
    )
