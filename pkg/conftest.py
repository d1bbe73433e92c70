"""
Shared fixtures: small named models and the 20-node triangle-free family
(alpha=0.4, a=0.01, b=0.28, delta_max=10, unit diagonal).
"""

import numpy as np
import pytest

from model_zoo import ParamBox, build_named, generate_random_walk_summable

CHAIN3_PRECISION = np.array([[1.0, -0.3, 0.0],
                             [-0.3, 1.0, -0.3],
                             [0.0, -0.3, 1.0]])

REFERENCE_BOX = ParamBox(alpha=0.4, a=0.01, b=0.28, d_min=1.0, d_max=1.0, delta_max=10)


@pytest.fixture
def chain3():
    return build_named('chain', 3, -0.3)


@pytest.fixture
def chain10():
    return build_named('chain', 10, -0.3)


@pytest.fixture
def star10():
    return build_named('star', 10, 0.2)


@pytest.fixture
def diagonal4():
    return build_named('chain', 4, 0.0)


@pytest.fixture
def reference_box():
    return REFERENCE_BOX


@pytest.fixture
def reference_instance():
    return generate_random_walk_summable(20, REFERENCE_BOX, triangle_free=True, seed=7)


@pytest.fixture(scope='session')
def reference_family():
    """100 triangle-free instances, seeds 0..99."""
    return [generate_random_walk_summable(20, REFERENCE_BOX, triangle_free=True, seed=s) for s in range(100)]


@pytest.fixture(scope='session')
def small_general_family():
    """Walk-summable models on 8 nodes, triangles allowed."""
    box = ParamBox(alpha=0.4, a=0.01, b=0.28, delta_max=3)
    return [generate_random_walk_summable(8, box, triangle_free=False, seed=s) for s in range(10)]


@pytest.fixture(scope='session')
def small_triangle_free_family():
    box = ParamBox(alpha=0.4, a=0.01, b=0.28, delta_max=3)
    return [generate_random_walk_summable(8, box, triangle_free=True, seed=s) for s in range(10)]
