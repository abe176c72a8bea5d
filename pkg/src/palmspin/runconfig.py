"""Config (de)serialization shared by checkpoints and the CLI.

Every config dataclass maps to one JSON object; building from a dict is
strict, so a mistyped key fails with its full path instead of being
silently ignored.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Callable, Dict, Optional

import numpy as np

from .errors import ConfigError
from .task.env import EnvConfig
from .task.reward import RewardCoeffs


def to_jsonable(obj) -> Any:
    """Recursively convert dataclasses/tuples/arrays into JSON-ready values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    return obj


def build_dataclass(
    cls,
    data: Optional[Dict[str, Any]],
    path: str,
    special: Optional[Dict[str, Callable[[Any, str], Any]]] = None,
):
    """Instantiate a config dataclass from a dict, rejecting unknown keys."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{path}' must be an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"unknown config key '{path}.{k}'")
    special = special or {}
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        if f.name in special:
            v = special[f.name](v, f"{path}.{f.name}")
        kwargs[f.name] = v
    return cls(**kwargs)


def _as_tuple(v, path):
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"config key '{path}' must be a list")
    return tuple(v)


def env_config_from_dict(data: Optional[dict], path: str = "env") -> EnvConfig:
    special = {
        "axis": _as_tuple,
        "active_fingers": _as_tuple,
        "coeffs": lambda v, p: build_dataclass(RewardCoeffs, v, p),
    }
    return build_dataclass(EnvConfig, data, path, special)


def ppo_config_from_dict(data: Optional[dict], path: str = "ppo"):
    from .training.ppo import PPOConfig

    return build_dataclass(PPOConfig, data, path)


def policy_spec_from_dict(data: Optional[dict], path: str = "policy"):
    from .training.networks import PolicySpec

    return build_dataclass(PolicySpec, data, path, {"trunk": _as_tuple})


def encoder_spec_from_dict(data: Optional[dict], path: str = "encoder"):
    from .training.networks import EncoderSpec

    return build_dataclass(
        EncoderSpec, data, path, {"phys_widths": _as_tuple, "point_widths": _as_tuple}
    )
