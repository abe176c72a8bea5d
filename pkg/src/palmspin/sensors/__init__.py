"""Sim-side sensing: discretized fingertip touch and foreground depth."""

from .touch import (
    N_SECTORS,
    TOUCH_DIM,
    TOUCH_MODES,
    discretize_contact,
    encode_touch,
    encode_touch_batch,
    init_touch,
    sector_of,
    tactile_frame,
    touch_features,
    touch_mlp_spec,
)
from .vision import (
    FOV_MAX,
    FOV_MIN,
    RESOLUTION,
    CameraModel,
    VisionNoiseConfig,
    corrupt_vision,
    randomize_camera,
    read_depth_pgm,
    render_depth,
    training_noise,
    write_depth_pgm,
)

__all__ = [
    "N_SECTORS",
    "TOUCH_DIM",
    "TOUCH_MODES",
    "discretize_contact",
    "encode_touch",
    "encode_touch_batch",
    "init_touch",
    "sector_of",
    "tactile_frame",
    "touch_features",
    "touch_mlp_spec",
    "FOV_MAX",
    "FOV_MIN",
    "RESOLUTION",
    "CameraModel",
    "VisionNoiseConfig",
    "corrupt_vision",
    "randomize_camera",
    "read_depth_pgm",
    "render_depth",
    "training_noise",
    "write_depth_pgm",
]
