"""Tests for the quality metrics."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hsfuse.errors import ArgumentError, DimensionError
from hsfuse.metrics import MetricsReport, ergas, evaluate, psnr, rmse, sam, uiqi


# Brute-force references written straight from the formulas, one element at a time.

def oracle_rmse(ref: np.ndarray, test: np.ndarray) -> float:
    total, count = 0.0, 0
    for b in range(ref.shape[0]):
        for i in range(ref.shape[1]):
            for j in range(ref.shape[2]):
                total += (ref[b, i, j] - test[b, i, j]) ** 2
                count += 1
    return math.sqrt(total / count)


def oracle_band_mse(ref: np.ndarray, test: np.ndarray, b: int) -> float:
    values = [(ref[b, i, j] - test[b, i, j]) ** 2 for i in range(ref.shape[1]) for j in range(ref.shape[2])]
    return sum(values) / len(values)


def oracle_psnr(ref: np.ndarray, test: np.ndarray) -> float:
    bands = []
    for b in range(ref.shape[0]):
        peak = max(ref[b].ravel())
        bands.append(10 * math.log10(peak ** 2 / oracle_band_mse(ref, test, b)))
    return sum(bands) / len(bands)


def oracle_sam(ref: np.ndarray, test: np.ndarray) -> float:
    angles = []
    for i in range(ref.shape[1]):
        for j in range(ref.shape[2]):
            x, y = ref[:, i, j], test[:, i, j]
            dot = sum(a * b for a, b in zip(x, y))
            nx, ny = math.sqrt(sum(a * a for a in x)), math.sqrt(sum(b * b for b in y))
            angles.append(math.degrees(math.acos(max(-1.0, min(1.0, dot / (nx * ny))))))
    return sum(angles) / len(angles)


def oracle_ergas(ref: np.ndarray, test: np.ndarray, r: int) -> float:
    terms = []
    for b in range(ref.shape[0]):
        mean = sum(ref[b].ravel()) / ref[b].size
        terms.append(oracle_band_mse(ref, test, b) / mean ** 2)
    return 100 / r * math.sqrt(sum(terms) / len(terms))


def oracle_q(x: list[float], y: list[float]) -> float:
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / (n - 1)
    vy = sum((b - my) ** 2 for b in y) / (n - 1)
    cxy = sum((a - mx) * (b - my) for a, b in zip(x, y)) / (n - 1)
    return 4 * cxy * mx * my / ((vx + vy) * (mx ** 2 + my ** 2))


def oracle_uiqi(ref: np.ndarray, test: np.ndarray, window: int = 32) -> float:
    scores = []
    _, height, width = ref.shape
    for b in range(ref.shape[0]):
        qs = []
        for top in range(0, height, window):
            for left in range(0, width, window):
                rows = range(top, min(top + window, height))
                cols = range(left, min(left + window, width))
                if len(rows) < 2 or len(cols) < 2:
                    continue
                x = [ref[b, i, j] for i in rows for j in cols]
                y = [test[b, i, j] for i in rows for j in cols]
                qs.append(oracle_q(x, y))
        scores.append(sum(qs) / len(qs))
    return sum(scores) / len(scores)


class TestRmse:
    """Tests for rmse."""

    def test_identical(self, rng: np.random.Generator) -> None:
        """Identical cubes give 0."""
        x = rng.uniform(size=(3, 4, 4))
        assert rmse(x, x) == 0.0

    def test_ones_and_zeros(self) -> None:
        """All ones against all zeros gives 1."""
        assert rmse(np.ones((2, 3, 3)), np.zeros((2, 3, 3))) == 1.0

    def test_two_values(self) -> None:
        """Differences 0.3 and -0.4 give sqrt(0.125)."""
        ref = np.array([0.3, 0.0]).reshape(2, 1, 1)
        test = np.array([0.0, 0.4]).reshape(2, 1, 1)
        assert rmse(ref, test) == pytest.approx(math.sqrt(0.125), abs=1e-15)

    def test_shape_mismatch(self) -> None:
        """Different shapes raise DimensionError."""
        with pytest.raises(DimensionError):
            rmse(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))


class TestPsnr:
    """Tests for psnr."""

    def test_identical(self, rng: np.random.Generator) -> None:
        """Identical cubes give +inf for the mean and every band."""
        x = rng.uniform(size=(3, 4, 4))
        mean, per_band = psnr(x, x)
        assert mean == math.inf
        assert per_band == [math.inf] * 3

    def test_twenty_db(self) -> None:
        """Peak 1 and MSE 0.01 give 20 dB."""
        ref = np.zeros((1, 2, 2))
        ref[0, 0, 0] = 1.0
        test = ref + 0.1
        mean, _ = psnr(ref, test)
        assert mean == pytest.approx(20.0, abs=1e-12)

    def test_mean_of_bands(self, rng: np.random.Generator) -> None:
        """The mean is the average of the per-band values."""
        ref, test = rng.uniform(size=(3, 5, 5)), rng.uniform(size=(3, 5, 5))
        mean, per_band = psnr(ref, test)
        assert len(per_band) == 3
        assert mean == pytest.approx(sum(per_band) / 3, abs=1e-12)

    def test_exact_band_excluded(self, rng: np.random.Generator) -> None:
        """An exact band is +inf and left out of the mean of the others."""
        ref = rng.uniform(size=(2, 4, 4))
        test = ref.copy()
        test[1] += 0.05
        mean, per_band = psnr(ref, test)
        assert per_band[0] == math.inf
        assert mean == per_band[1]

    def test_zero_peak_band(self) -> None:
        """A band whose reference is all zero reports -inf and is excluded."""
        ref = np.zeros((2, 2, 2))
        ref[1] = 0.5
        test = ref + 0.1
        mean, per_band = psnr(ref, test)
        assert per_band[0] == -math.inf
        assert mean == per_band[1]

    def test_decreases_with_noise(self, rng: np.random.Generator) -> None:
        """Stronger noise gives strictly lower PSNR."""
        ref = rng.uniform(size=(2, 16, 16))
        noise = rng.normal(size=ref.shape)
        values = [psnr(ref, ref + sigma * noise)[0] for sigma in (0.01, 0.05, 0.2)]
        assert values[0] > values[1] > values[2]


class TestSam:
    """Tests for sam."""

    def test_identical(self, rng: np.random.Generator) -> None:
        """Identical cubes give exactly 0 degrees."""
        x = rng.uniform(size=(3, 4, 4))
        mean, per_pixel = sam(x, x)
        assert mean == 0.0
        assert per_pixel == [0.0] * 16

    def test_orthogonal(self) -> None:
        """(1, 0) against (0, 1) is 90 degrees."""
        mean, _ = sam(np.array([1.0, 0.0]).reshape(2, 1, 1), np.array([0.0, 1.0]).reshape(2, 1, 1))
        assert mean == pytest.approx(90.0, abs=1e-12)

    def test_scale_invariant(self, rng: np.random.Generator) -> None:
        """Positive per-pixel scaling does not change the angle."""
        assert sam(np.ones((2, 1, 1)), np.full((2, 1, 1), 2.0))[0] == pytest.approx(0.0, abs=1e-5)
        ref, test = rng.uniform(0.1, 1, size=(4, 3, 3)), rng.uniform(0.1, 1, size=(4, 3, 3))
        scales = rng.uniform(0.5, 2.0, size=(1, 3, 3))
        assert sam(ref, test * scales)[0] == pytest.approx(sam(ref, test)[0], abs=1e-9)

    def test_zero_norm_pixels(self) -> None:
        """Pixels with a zero spectrum contribute 0."""
        ref = np.zeros((2, 1, 2))
        ref[:, 0, 1] = [1.0, 0.0]
        test = np.zeros((2, 1, 2))
        test[:, 0, 1] = [0.0, 1.0]
        mean, per_pixel = sam(ref, test)
        assert per_pixel == [0.0, pytest.approx(90.0)]
        assert mean == pytest.approx(45.0)

    def test_sorted(self, rng: np.random.Generator) -> None:
        """Per-pixel angles come back in ascending order."""
        _, per_pixel = sam(rng.uniform(size=(3, 4, 4)), rng.uniform(size=(3, 4, 4)))
        assert per_pixel == sorted(per_pixel)


class TestErgas:
    """Tests for ergas."""

    def test_identical(self, rng: np.random.Generator) -> None:
        """Identical cubes give 0."""
        x = rng.uniform(size=(3, 4, 4))
        assert ergas(x, x, 4) == 0.0

    def test_single_band(self) -> None:
        """Mean 0.5, RMSE 0.05, r=4 gives 2.5."""
        ref = np.full((1, 2, 2), 0.5)
        test = ref + 0.05
        assert ergas(ref, test, 4) == pytest.approx(2.5, abs=1e-12)

    def test_equal_ratios(self) -> None:
        """Bands with the same relative error give (100 / r) times that ratio."""
        ref = np.stack([np.full((2, 2), 0.2), np.full((2, 2), 0.8)])
        test = ref * 1.1
        assert ergas(ref, test, 2) == pytest.approx(50 * 0.1, abs=1e-12)

    def test_asymmetric(self, rng: np.random.Generator) -> None:
        """Swapping the arguments changes the value."""
        a, b = rng.uniform(size=(2, 4, 4)), rng.uniform(size=(2, 4, 4))
        assert ergas(a, b, 4) != pytest.approx(ergas(b, a, 4))

    def test_zero_mean_band_excluded(self) -> None:
        """A zero-mean reference band is skipped; all skipped gives 0."""
        ref = np.stack([np.zeros((2, 2)), np.full((2, 2), 0.5)])
        test = ref + 0.05
        assert ergas(ref, test, 4) == pytest.approx(2.5, abs=1e-12)
        assert ergas(np.zeros((1, 2, 2)), np.ones((1, 2, 2)), 4) == 0.0


class TestUiqi:
    """Tests for uiqi."""

    def test_identical(self, rng: np.random.Generator) -> None:
        """Identical non-constant cubes give 1."""
        x = rng.uniform(size=(2, 40, 40))
        assert uiqi(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_reflected_about_mean(self, rng: np.random.Generator) -> None:
        """Reflecting each value about the window mean reaches the lower bound -1."""
        x = rng.uniform(0.4, 0.6, size=(1, 32, 32))
        y = 2 * x.mean() - x
        assert uiqi(x, y) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_window_oracle(self, rng: np.random.Generator) -> None:
        """A random 64x64 pair agrees with the direct windowed computation."""
        ref, test = rng.uniform(size=(1, 64, 64)), rng.uniform(size=(1, 64, 64))
        assert abs(uiqi(ref, test) - oracle_uiqi(ref, test)) < 1e-10

    def test_partial_windows(self, rng: np.random.Generator) -> None:
        """A 40x33 band uses 32-wide windows plus the partial ones of at least 2 pixels."""
        ref, test = rng.uniform(size=(1, 40, 33)), rng.uniform(size=(1, 40, 33))
        # the 1-pixel-wide column strip is dropped
        assert abs(uiqi(ref, test) - oracle_uiqi(ref, test)) < 1e-10

    def test_constant_windows(self) -> None:
        """Windows with no variance are skipped; equal constants score 1, unequal 0."""
        assert uiqi(np.full((1, 4, 4), 0.5), np.full((1, 4, 4), 0.5)) == 1.0
        assert uiqi(np.full((1, 4, 4), 0.5), np.full((1, 4, 4), 0.2)) == 0.0

    def test_too_small(self) -> None:
        """Images under 2x2 raise ArgumentError."""
        with pytest.raises(ArgumentError):
            uiqi(np.ones((1, 1, 4)), np.ones((1, 1, 4)))


class TestOracles:
    """All five metrics against the brute-force references."""

    def test_random_pairs(self) -> None:
        """20 random 3-band 4x4 pairs agree within 1e-9."""
        rng = np.random.default_rng(99)
        for _ in range(20):
            ref = rng.uniform(0.05, 1.0, size=(3, 4, 4))
            test = rng.uniform(0.05, 1.0, size=(3, 4, 4))
            assert rmse(ref, test) == pytest.approx(oracle_rmse(ref, test), abs=1e-9)
            assert psnr(ref, test)[0] == pytest.approx(oracle_psnr(ref, test), abs=1e-9)
            assert sam(ref, test)[0] == pytest.approx(oracle_sam(ref, test), abs=1e-9)
            assert ergas(ref, test, 4) == pytest.approx(oracle_ergas(ref, test, 4), abs=1e-9)
            assert uiqi(ref, test) == pytest.approx(oracle_uiqi(ref, test), abs=1e-9)


class TestEvaluate:
    """Tests for evaluate and MetricsReport."""

    def test_best_values(self, rng: np.random.Generator) -> None:
        """Identical cubes give exactly 0, +inf, 0, 0 and 1."""
        x = rng.uniform(size=(3, 8, 8))
        report = evaluate(x, x, 4)
        assert (report.rmse, report.psnr_db, report.sam_deg, report.ergas, report.uiqi) == (0.0, math.inf, 0.0, 0.0, 1.0)

    def test_fields_match_operations(self, rng: np.random.Generator) -> None:
        """Report fields equal the individual metrics exactly."""
        ref, test = rng.uniform(size=(3, 8, 8)), rng.uniform(size=(3, 8, 8))
        report = evaluate(ref, test, 2)
        assert report.rmse == rmse(ref, test)
        assert (report.psnr_db, report.per_band_psnr) == psnr(ref, test)
        assert (report.sam_deg, report.sorted_per_pixel_sam) == sam(ref, test)
        assert report.ergas == ergas(ref, test, 2)
        assert report.uiqi == uiqi(ref, test)

    def test_json_round_trip(self, rng: np.random.Generator) -> None:
        """JSON keeps every value at full precision, infinities included."""
        ref = rng.uniform(size=(2, 4, 4))
        test = ref.copy()
        test[1] += 0.01
        report = evaluate(ref, test, 4)
        restored = MetricsReport.from_json(report.to_json())
        assert restored == report
        assert json.loads(report.to_json())["per_band_psnr"][0] == math.inf

    def test_rows(self, rng: np.random.Generator) -> None:
        """The table has the five metrics in order."""
        x = rng.uniform(size=(1, 4, 4))
        assert [name for name, _ in evaluate(x, x, 1).rows()] == ["RMSE", "PSNR", "SAM", "ERGAS", "UIQI"]
