"""Pytest configuration and fixtures."""

from __future__ import annotations

import os
from collections.abc import Callable, Generator
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pytest

if TYPE_CHECKING:
    from numpy.typing import NDArray


def smooth_cube(bands: int, size: int, rng: np.random.Generator, coarse: int = 4) -> NDArray[np.float64]:
    """Random cube in [0.1, 0.9], bilinearly interpolated from a coarse grid."""
    from hsfuse.interpolation import upsample_bilinear

    base = rng.uniform(0.1, 0.9, size=(bands, coarse, coarse))
    return upsample_bilinear(base, size // coarse)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every test sees the same draws."""
    return np.random.default_rng(1234)


@pytest.fixture
def make_cube(rng: np.random.Generator) -> Callable[..., NDArray[np.float64]]:
    """Factory for smooth random cubes of a given band count and side."""

    def factory(bands: int = 8, size: int = 16, coarse: int = 4) -> NDArray[np.float64]:
        return smooth_cube(bands, size, rng, coarse)

    return factory


@pytest.fixture
def workdir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Temporary working directory; relative CLI outputs land here."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def clean_env() -> Generator[None, None, None]:
    """Fixture to clean environment variables before/after tests."""
    env_vars = ["HSFUSE_VERBOSE", "HSFUSE_PRECISION"]
    original_values = {var: os.environ.get(var) for var in env_vars}

    for var in env_vars:
        os.environ.pop(var, None)

    yield

    for var, value in original_values.items():
        if value is not None:
            os.environ[var] = value
        else:
            os.environ.pop(var, None)
