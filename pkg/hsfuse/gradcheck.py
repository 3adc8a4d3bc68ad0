"""Finite-difference verification of every differentiable op and the fusion loss."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from hsfuse import autodiff as ad
from hsfuse.autodiff import DiffValue
from hsfuse.config import MiaeConfig
from hsfuse.degradation import apply_psf, apply_srf, downsample, make_box_srf, make_gaussian_kernel
from hsfuse.interpolation import upsample_bilinear
from hsfuse.network import init_params, patch_loss

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
PASS_THRESHOLD = 1e-4
RELATIVE_FLOOR = 1e-3


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < PASS_THRESHOLD


def _same_branches(a: list[NDArray], b: list[NDArray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(
    build: Callable[[], DiffValue],
    params: Sequence[DiffValue],
    eps: float = DEFAULT_EPS,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> CheckResult:
    """Compare analytic gradients of ``build()`` with central differences.

    ``build`` must rebuild the loss from the current values of ``params``.
    Coordinates whose perturbation changes the branch taken by any
    non-smooth op are skipped.
    """
    for p in params:
        p.zero_grad()
    with ad.record_branches() as base:
        loss = build()
    loss.backward()
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.value.size)]
    if max_coords is not None and len(coords) > max_coords:
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(picks)]

    worst = 0.0
    checked = skipped = 0
    for i, j in coords:
        flat = params[i].value.reshape(-1)
        original = flat[j]
        flat[j] = original + eps
        with ad.record_branches() as plus:
            f_plus = build().item()
        flat[j] = original - eps
        with ad.record_branches() as minus:
            f_minus = build().item()
        flat[j] = original

        if not (_same_branches(base, plus) and _same_branches(base, minus)):
            skipped += 1
            continue
        numeric = (f_plus - f_minus) / (2 * eps)
        a = float(analytic[i].reshape(-1)[j])
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), RELATIVE_FLOOR))
        checked += 1

    return CheckResult(name="", max_rel_error=worst, checked=checked, skipped=skipped)


def _projection(out: DiffValue, weights: NDArray) -> DiffValue:
    """Random linear functional of ``out``; reduces any value to a scalar."""
    flat = ad.reshape(out, (out.value.size,))
    return ad.matmul(ad.constant(weights[None, :]), flat)


def _cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], DiffValue], list[DiffValue]]]:
    def normal(*shape: int) -> DiffValue:
        return ad.leaf(rng.normal(size=shape))

    def weights(n: int) -> NDArray:
        return rng.normal(size=n)

    cases: list[tuple[str, Callable[[], DiffValue], list[DiffValue]]] = []

    x, W, b = normal(7), normal(5, 7), normal(5)
    w_fc = weights(5)
    cases.append(("fully_connected", lambda: _projection(ad.fully_connected(x, W, b), w_fc), [x, W, b]))

    xc, W1, b1, W2, b2 = normal(6, 3), normal(4, 6), normal(4), normal(2, 4), normal(2)
    w_chain = weights(6)
    cases.append((
        "fully_connected_chain",
        lambda: _projection(ad.fully_connected(ad.fully_connected(xc, W1, b1), W2, b2), w_chain),
        [xc, W1, b1, W2, b2],
    ))

    M, X = normal(4, 6), normal(6, 3)
    w_mm = weights(12)
    cases.append(("matmul", lambda: _projection(ad.matmul(M, X), w_mm), [M, X]))

    xl = normal(20)
    w_leaky = weights(20)
    cases.append(("leaky_relu", lambda: _projection(ad.leaky_relu(xl, 0.01), w_leaky), [xl]))

    xk = ad.leaf(rng.uniform(-0.5, 1.5, size=20))
    w_clamp = weights(20)
    cases.append(("clamp01", lambda: _projection(ad.clamp01(xk), w_clamp), [xk]))

    c1, c2 = normal(3, 4), normal(2, 4)
    w_cat = weights(20)
    cases.append(("concat", lambda: _projection(ad.concat([c1, c2]), w_cat), [c1, c2]))

    img, kern = normal(2, 7, 7), normal(3, 3)
    w_conv = weights(98)
    cases.append(("conv2d_perband", lambda: _projection(ad.conv2d_perband(img, kern), w_conv), [img, kern]))

    sub = normal(2, 6, 6)
    w_sub = weights(8)
    cases.append(("subsample", lambda: _projection(ad.subsample(sub, 3, 1), w_sub), [sub]))

    cr = normal(2, 6, 6)
    w_crop = weights(32)
    cases.append(("crop", lambda: _projection(ad.crop(cr, 1), w_crop), [cr]))

    rs = normal(2, 3, 4)
    w_rs = weights(24)
    cases.append(("reshape", lambda: _projection(ad.reshape(rs, (6, 4)), w_rs), [rs]))

    s1, s2 = normal(3, 4), normal(3, 4)
    w_add = weights(12)
    cases.append(("add", lambda: _projection(ad.add(s1, s2), w_add), [s1, s2]))
    cases.append(("scale", lambda: _projection(ad.scale(s1, -2.5), w_add), [s1]))

    la, lb = normal(3, 4), normal(3, 4)
    cases.append(("l1_loss", lambda: ad.l1_loss(la, lb), [la, lb]))

    cases.append(_miae_case(rng))
    return cases


def _miae_case(rng: np.random.Generator) -> tuple[str, Callable[[], DiffValue], list[DiffValue]]:
    """Full patch loss on an 8-band 16x16 toy with a smooth random scene."""
    n_B, n_b, r = 8, 3, 4
    base = rng.uniform(0.2, 0.8, size=(n_B, 4, 4))
    scene = np.clip(upsample_bilinear(base, 4), 0, 1)
    kernel = make_gaussian_kernel(5, 1.0)
    R = make_box_srf(n_B, n_b)
    lr = downsample(apply_psf(scene, kernel), r, r // 2)
    msi = apply_srf(scene, R)
    y_up = upsample_bilinear(lr, r)

    cfg = MiaeConfig(rank=4, stages=3)
    params = init_params(cfg, n_B, n_b, seed=int(rng.integers(2**31)))
    return (
        "miae_loss",
        lambda: patch_loss(msi, y_up, lr, params, kernel, R, r, r // 2, cfg),
        params.leaves(),
    )


def run_suite(seed: int = 0, eps: float = DEFAULT_EPS, corrupt_op: str | None = None) -> list[CheckResult]:
    """Check every op type and the fusion loss; ``corrupt_op`` scales one backward rule."""
    rng = np.random.default_rng(seed)
    results = []
    fault = ad.inject_grad_fault(corrupt_op, 1.5) if corrupt_op else nullcontext()
    with fault:
        for name, build, params in _cases(rng):
            max_coords = 20 if name == "miae_loss" else None
            result = grad_check(build, params, eps=eps, max_coords=max_coords, rng=rng)
            result.name = name
            logger.debug("%s: max rel err %.3e (%d checked, %d skipped)", name, result.max_rel_error, result.checked, result.skipped)
            results.append(result)
    return results
