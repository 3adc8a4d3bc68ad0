"""Tests for blind kernel and SRF estimation."""

from __future__ import annotations

import numpy as np
import pytest

from hsfuse.blind import BlindResult, blind_loss, estimate_degradation, init_blind, project_feasible
from hsfuse.config import BlindConfig
from hsfuse.degradation import apply_psf, apply_srf, downsample, make_box_srf, make_gaussian_kernel
from hsfuse.errors import DimensionError
from tests.conftest import smooth_cube


def observations(cube: np.ndarray, kernel: np.ndarray, R: np.ndarray, r: int):
    return apply_srf(cube, R), downsample(apply_psf(cube, kernel), r, r // 2)


def assert_feasible(kernel: np.ndarray, R: np.ndarray) -> None:
    assert kernel.min() >= 0 and kernel.max() <= 1
    assert R.min() >= 0
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-9)


class TestInitBlind:
    """Tests for init_blind."""

    def test_feasible_start(self) -> None:
        """The initial kernel sums to one and the SRF rows sum to one."""
        kernel, R = init_blind(9, 4, 32)
        assert kernel.shape == (9, 9)
        assert abs(kernel.sum() - 1) < 1e-12
        assert R.shape == (4, 32)
        assert_feasible(kernel, R)

    def test_seeded(self) -> None:
        """The same seed gives the same initialization."""
        first, second = init_blind(5, 2, 6, seed=1), init_blind(5, 2, 6, seed=1)
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])


class TestProjectFeasible:
    """Tests for the constraint projection."""

    def test_clips_and_normalizes(self) -> None:
        """Kernel is boxed to [0, 1]; R is made nonnegative with unit rows."""
        kernel = np.array([[-0.2, 0.5], [1.4, 0.3]])
        R = np.array([[0.5, -0.5, 1.5], [1.0, 1.0, 2.0]])
        project_feasible(kernel, R)
        np.testing.assert_array_equal(kernel, [[0.0, 0.5], [1.0, 0.3]])
        np.testing.assert_allclose(R, [[0.25, 0.0, 0.75], [0.25, 0.25, 0.5]])

    def test_empty_row_becomes_uniform(self) -> None:
        """A row with no positive weight resets to 1 / N_B."""
        kernel = np.zeros((1, 1))
        R = np.array([[-1.0, 0.0, -2.0, 0.0], [0.0, 1.0, 0.0, 1.0]])
        project_feasible(kernel, R)
        np.testing.assert_allclose(R[0], 0.25)
        np.testing.assert_allclose(R[1], [0.0, 0.5, 0.0, 0.5])


class TestBlindLoss:
    """Tests for the blind consistency loss."""

    def test_zero_at_truth(self, make_cube) -> None:
        """Noiseless observations are consistent at the true kernel and SRF."""
        cube = make_cube(8, 16)
        kernel, R = make_gaussian_kernel(5, 1.0), make_box_srf(8, 3)
        msi, hsi = observations(cube, kernel, R, 4)
        assert blind_loss(kernel, R, msi, hsi, 4, 2) < 1e-12

    def test_positive_away_from_truth(self, make_cube) -> None:
        """A wrong kernel leaves a positive gap."""
        cube = make_cube(8, 16)
        R = make_box_srf(8, 3)
        msi, hsi = observations(cube, make_gaussian_kernel(5, 1.0), R, 4)
        assert blind_loss(make_gaussian_kernel(5, 2.5), R, msi, hsi, 4, 2) > 1e-4

    def test_size_mismatch(self) -> None:
        """MSI not r times the HSI raises DimensionError."""
        with pytest.raises(DimensionError):
            blind_loss(make_gaussian_kernel(3, 1.0), make_box_srf(4, 2), np.zeros((2, 16, 16)), np.zeros((4, 3, 3)), 4, 2)


class TestEstimateDegradation:
    """Tests for the blind estimator."""

    def test_short_run(self, make_cube) -> None:
        """A short run returns a feasible pair no worse than the start."""
        cube = make_cube(8, 16)
        msi, hsi = observations(cube, make_gaussian_kernel(5, 1.0), make_box_srf(8, 3), 4)
        cfg = BlindConfig(kernel_size=5, ratio=4, iterations=25, learning_rate=1e-3, log_every=10)
        result = estimate_degradation(msi, hsi, cfg)
        assert isinstance(result, BlindResult)
        assert len(result.loss_history) == 25
        assert_feasible(result.kernel, result.R)
        assert result.best_loss <= result.loss_history[0]
        assert result.best_loss <= min(result.loss_history)
        assert abs(result.kernel_normalized.sum() - 1) < 1e-12

    def test_every_iterate_feasible(self, make_cube, monkeypatch: pytest.MonkeyPatch) -> None:
        """The projection runs after every Adam step."""
        import hsfuse.blind as blind

        seen: list[tuple[np.ndarray, np.ndarray]] = []
        original = blind.project_feasible

        def spy(kernel: np.ndarray, R: np.ndarray) -> None:
            original(kernel, R)
            seen.append((kernel.copy(), R.copy()))

        monkeypatch.setattr(blind, "project_feasible", spy)
        cube = make_cube(8, 16)
        msi, hsi = observations(cube, make_gaussian_kernel(5, 1.0), make_box_srf(8, 3), 4)
        estimate_degradation(msi, hsi, BlindConfig(kernel_size=5, ratio=4, iterations=10, learning_rate=1e-2))
        assert len(seen) == 10
        for kernel, R in seen:
            assert_feasible(kernel, R)

    def test_deterministic(self, make_cube) -> None:
        """Two runs with the same seed agree bitwise."""
        cube = make_cube(8, 16)
        msi, hsi = observations(cube, make_gaussian_kernel(5, 1.0), make_box_srf(8, 3), 4)
        cfg = BlindConfig(kernel_size=5, ratio=4, iterations=10, learning_rate=1e-3)
        first, second = estimate_degradation(msi, hsi, cfg), estimate_degradation(msi, hsi, cfg)
        np.testing.assert_array_equal(first.kernel, second.kernel)
        np.testing.assert_array_equal(first.R, second.R)

    def test_ratio_mismatch(self, make_cube) -> None:
        """A wrong ratio raises DimensionError."""
        cube = make_cube(8, 16)
        msi, hsi = observations(cube, make_gaussian_kernel(5, 1.0), make_box_srf(8, 3), 4)
        with pytest.raises(DimensionError):
            estimate_degradation(msi, hsi, BlindConfig(kernel_size=5, ratio=2, iterations=1))


@pytest.mark.slow
class TestBlindRecovery:
    """Recovery of a known blur and SRF from noiseless synthetic data."""

    def test_recovers_kernel_and_srf(self) -> None:
        """9x9 Gaussian sigma 2 and a 4-band box SRF are recovered within tolerance."""
        rng = np.random.default_rng(7)
        cube = smooth_cube(32, 64, rng, coarse=8)
        true_kernel, true_R = make_gaussian_kernel(9, 2.0), make_box_srf(32, 4)
        msi, hsi = observations(cube, true_kernel, true_R, 4)

        cfg = BlindConfig(kernel_size=9, ratio=4, iterations=5000, learning_rate=5e-5)
        result = estimate_degradation(msi, hsi, cfg)

        kernel_error = np.linalg.norm(result.kernel_normalized - true_kernel) / np.linalg.norm(true_kernel)
        assert kernel_error < 0.15
        assert np.abs(result.R - true_R).sum(axis=1).max() < 0.1
        assert_feasible(result.kernel, result.R)
        assert blind_loss(true_kernel, true_R, msi, hsi, 4, 2) <= result.best_loss + 1e-6
