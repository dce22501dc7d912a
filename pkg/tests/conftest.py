import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deltapath import scenes
from deltapath.render import render_image


@pytest.fixture(scope="session")
def cornell16():
    return scenes.cornell_dynamic_sphere((16, 16))


@pytest.fixture(scope="session")
def cornell_static16():
    return scenes.cornell_static((16, 16))


@pytest.fixture(scope="session")
def furnace8():
    return scenes.furnace(resolution=(8, 8))


@pytest.fixture(scope="session")
def two_room16():
    return scenes.two_room((16, 16))


def render_mean(scene, variant, spp, seed=0, collect="total", settings=None):
    acc = render_image(scene, scene.camera, variant, spp, seed=seed,
                       collect=collect, settings=settings)
    return acc.mean(), acc.std_error()


def combined_se_z(a, se_a, b, se_b, atol=1e-9):
    """|a-b| in units of the combined standard error (elementwise).

    The denominator is floored so deterministic pixels (zero variance on
    both sides) compare by absolute error instead of blowing up on
    float-rounding noise.
    """
    comb = np.sqrt(se_a ** 2 + se_b ** 2)
    return np.abs(a - b) / np.maximum(comb, atol)
