"""Object dataset: procedural shapes, mesh ingestion, and grasp caches."""

from .grasps import (
    N_BUCKETS,
    SCALE_HI,
    SCALE_LO,
    SPAWN_HEIGHT,
    GraspGenConfig,
    GraspPose,
    GraspResult,
    bucket_of,
    bucket_scale,
    build_grasp_caches,
    canonical_pregrasp,
    generate_grasps,
    load_grasp_cache,
    save_grasp_cache,
    spawn_center,
)
from .mesh import (
    connected_components,
    load_obj,
    make_box,
    make_capsule,
    make_cylinder,
    make_ellipsoid,
    make_sphere,
    make_superquadric,
    mass_properties,
)
from .shapes import (
    CANONICAL_EXTENT,
    DEFAULT_KINDS,
    ObjectShape,
    aspect_ratio,
    generate_held_out_set,
    generate_procedural_set,
    load_mesh,
    sample_surface_points,
)

__all__ = [
    "N_BUCKETS",
    "SCALE_HI",
    "SCALE_LO",
    "SPAWN_HEIGHT",
    "GraspGenConfig",
    "GraspPose",
    "GraspResult",
    "bucket_of",
    "bucket_scale",
    "build_grasp_caches",
    "canonical_pregrasp",
    "generate_grasps",
    "load_grasp_cache",
    "save_grasp_cache",
    "spawn_center",
    "connected_components",
    "load_obj",
    "make_box",
    "make_capsule",
    "make_cylinder",
    "make_ellipsoid",
    "make_sphere",
    "make_superquadric",
    "mass_properties",
    "CANONICAL_EXTENT",
    "DEFAULT_KINDS",
    "ObjectShape",
    "aspect_ratio",
    "generate_held_out_set",
    "generate_procedural_set",
    "load_mesh",
    "sample_surface_points",
]
