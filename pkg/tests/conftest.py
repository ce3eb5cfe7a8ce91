"""
Shared fixtures for the omniview test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the src directory to the path so the package imports without installation
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for randomized property suites."""
    return np.random.default_rng(20190617)


@pytest.fixture
def color_image(rng: np.random.Generator) -> np.ndarray:
    """Small random RGB image, 24 rows by 32 columns."""
    return rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)
