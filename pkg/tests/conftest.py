import sys
from pathlib import Path

import numpy as np
import pytest

import defmod.tensor as T

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def f64():
    """Run a test at 64-bit precision (gradient checking)."""
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float32)


@pytest.fixture
def f32():
    T.set_default_dtype(np.float32)
    yield
    T.set_default_dtype(np.float32)
