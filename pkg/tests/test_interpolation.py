"""Tests for the interpolation module."""

from __future__ import annotations

import numpy as np
import pytest

from hsfuse.degradation import downsample
from hsfuse.errors import ArgumentError
from hsfuse.interpolation import upsample, upsample_bilinear, upsample_nearest


def bilinear_oracle(band: np.ndarray, r: int) -> np.ndarray:
    """Half-pixel-center bilinear interpolation evaluated pixel by pixel."""
    h, w = band.shape
    out = np.empty((h * r, w * r))
    for i in range(h * r):
        for j in range(w * r):
            y = min(max((i + 0.5) / r - 0.5, 0.0), h - 1)
            x = min(max((j + 0.5) / r - 0.5, 0.0), w - 1)
            y0, x0 = min(int(np.floor(y)), h - 1), min(int(np.floor(x)), w - 1)
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = (
                band[y0, x0] * (1 - dy) * (1 - dx)
                + band[y0, x1] * (1 - dy) * dx
                + band[y1, x0] * dy * (1 - dx)
                + band[y1, x1] * dy * dx
            )
    return out


class TestBilinear:
    """Tests for upsample_bilinear."""

    def test_identity(self, rng: np.random.Generator) -> None:
        """r=1 returns a copy."""
        x = rng.uniform(size=(2, 3, 3))
        np.testing.assert_array_equal(upsample_bilinear(x, 1), x)

    def test_constant(self) -> None:
        """A constant band stays constant, with an exact mean."""
        out = upsample_bilinear(np.full((1, 3, 3), 0.5), 4)
        assert out.shape == (1, 12, 12)
        np.testing.assert_allclose(out, 0.5, atol=1e-15)
        assert abs(out.mean() - 0.5) < 1e-15

    def test_matches_formula(self) -> None:
        """[[0,1],[2,3]] at r=2 agrees with the half-pixel formula at all 16 positions."""
        band = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = upsample_bilinear(band[None], 2)[0]
        np.testing.assert_allclose(out, bilinear_oracle(band, 2), atol=1e-12)
        assert out[0, 0] == 0.0
        assert out[1, 1] == pytest.approx(0.75)

    def test_random_matches_formula(self, rng: np.random.Generator) -> None:
        """A random band at r=3 agrees with the oracle."""
        band = rng.uniform(size=(4, 5))
        np.testing.assert_allclose(upsample_bilinear(band[None], 3)[0], bilinear_oracle(band, 3), atol=1e-12)

    def test_unit_range(self, rng: np.random.Generator) -> None:
        """Outputs of [0, 1] inputs stay in [0, 1]."""
        out = upsample_bilinear(rng.uniform(size=(2, 4, 4)), 4)
        assert out.min() >= 0 and out.max() <= 1

    def test_constant_round_trip(self) -> None:
        """Centered decimation of an upsampled constant returns the constant."""
        x = np.full((1, 4, 4), 0.3)
        np.testing.assert_allclose(downsample(upsample_bilinear(x, 3), 3, 1), x, atol=1e-15)

    def test_invalid_ratio(self) -> None:
        """r < 1 raises ArgumentError."""
        with pytest.raises(ArgumentError):
            upsample_bilinear(np.ones((1, 2, 2)), 0)


class TestNearest:
    """Tests for upsample_nearest."""

    def test_identity(self, rng: np.random.Generator) -> None:
        """r=1 is the identity."""
        x = rng.uniform(size=(2, 3, 3))
        np.testing.assert_array_equal(upsample_nearest(x, 1), x)

    def test_single_pixel(self) -> None:
        """One pixel fills a 3x3 block."""
        np.testing.assert_array_equal(upsample_nearest(np.array([[[0.7]]]), 3), np.full((1, 3, 3), 0.7))

    def test_values_come_from_input(self, rng: np.random.Generator) -> None:
        """Every output value is one of the input values."""
        x = rng.uniform(size=(1, 3, 4))
        out = upsample_nearest(x, 4)
        assert out.shape == (1, 12, 16)
        assert set(np.unique(out)) <= set(x.ravel())


class TestDispatch:
    """Tests for the method switch."""

    def test_by_name(self, rng: np.random.Generator) -> None:
        """Method names select the implementation."""
        x = rng.uniform(size=(1, 2, 2))
        np.testing.assert_array_equal(upsample(x, 2, "nearest"), upsample_nearest(x, 2))
        np.testing.assert_array_equal(upsample(x, 2, "bilinear"), upsample_bilinear(x, 2))

    def test_unknown_method(self) -> None:
        """Unknown names raise ValueError."""
        with pytest.raises(ValueError):
            upsample(np.ones((1, 2, 2)), 2, "bicubic")
