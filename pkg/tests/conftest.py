"""Shared test configuration.

The suite pins the pure-numpy kernel backend: the shapes exercised here are
small enough that JIT compilation dominates wall time, and this box exposes a
single CPU core, so the compiled kernels cannot win. Agreement between the two
backends is covered explicitly in test_backends.py, which imports both
implementation modules directly.
"""

import os

os.environ.setdefault("ATTNLINK_BACKEND", "numpy")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)
