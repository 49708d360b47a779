import math

import numpy as np
import pytest

from fractube.ifs_core import IfsSpec, Similarity, from_similarities, similarity_1d

UNIT_HULL = np.array([[0.0, 1.0]])


@pytest.fixture(scope="session")
def cantor() -> IfsSpec:
    return from_similarities(
        [similarity_1d(1 / 3, 0.0), similarity_1d(1 / 3, 2 / 3)], hull=UNIT_HULL
    )


@pytest.fixture(scope="session")
def c1() -> IfsSpec:
    return from_similarities(
        [similarity_1d(1 / 7, 2 * i / 7) for i in range(4)], hull=UNIT_HULL
    )


@pytest.fixture(scope="session")
def c2() -> IfsSpec:
    return from_similarities(
        [similarity_1d(1 / 7, o) for o in (0.0, 1 / 7, 5 / 7, 6 / 7)], hull=UNIT_HULL
    )


@pytest.fixture(scope="session")
def interval() -> IfsSpec:
    return from_similarities(
        [similarity_1d(1 / 2, 0.0), similarity_1d(1 / 2, 1 / 2)], hull=UNIT_HULL
    )


@pytest.fixture(scope="session")
def nonlattice() -> IfsSpec:
    return from_similarities(
        [similarity_1d(1 / 2, 0.0), similarity_1d(1 / 5, 4 / 5)], hull=UNIT_HULL
    )


@pytest.fixture(scope="session")
def mixed() -> IfsSpec:
    return from_similarities(
        [similarity_1d(1 / 2, 0.0), similarity_1d(1 / 4, 3 / 4)], hull=UNIT_HULL
    )


@pytest.fixture(scope="session")
def triangle() -> IfsSpec:
    h = math.sqrt(3.0) / 2.0
    maps = [
        Similarity(0.25, np.eye(2), np.array([0.75 * vx, 0.75 * vy]), 2)
        for vx, vy in [(0.0, 0.0), (1.0, 0.0), (0.5, h)]
    ]
    return from_similarities(maps)


def random_ssc_system(rng: np.random.Generator) -> IfsSpec:
    """A random 1-D SSC system on [0,1]: alternating gap/piece layout."""
    n = int(rng.integers(2, 4))
    parts = rng.uniform(0.05, 1.0, size=2 * n + 1)
    parts /= parts.sum()
    maps = []
    pos = 0.0
    for k in range(n):
        pos += parts[2 * k]  # leading gap
        length = parts[2 * k + 1]
        maps.append(similarity_1d(length, pos))
        pos += length
    return from_similarities(maps, hull=UNIT_HULL)
