import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from poreflow.scenarios import initial_shape  # noqa: E402


@pytest.fixture
def annulus_curve():
    return initial_shape("annulus", N=32)


@pytest.fixture
def cap_curve():
    return initial_shape("spherical_cap", N=16)
