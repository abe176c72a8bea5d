import numpy as np
import pytest

from palmspin.objects import mesh as meshlib
from palmspin.objects.grasps import GraspGenConfig, bucket_of, build_grasp_caches
from palmspin.objects.shapes import ObjectShape, _normalize


@pytest.fixture(scope="session")
def sphere_shape():
    v, f = meshlib.make_sphere(0.5)
    return ObjectShape.from_mesh("sphere-000", _normalize(v), f)


@pytest.fixture(scope="session")
def sphere_caches(sphere_shape):
    """Rest-style grasps for the mid-range scale bucket."""
    caches, incomplete = build_grasp_caches(
        [sphere_shape],
        count=16,
        seed=7,
        buckets=[bucket_of(0.57)],
        config=GraspGenConfig(style="rest"),
    )
    assert not incomplete
    return caches
