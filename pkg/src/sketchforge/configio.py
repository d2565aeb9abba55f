"""JSON <-> config-dataclass plumbing shared by the CLI and the service.

The wire/config format nests sections: {"fit": {...}, "style": {...},
"render": {...}, "train": {...}}; each section mirrors the corresponding
dataclass fields. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .fitting import FitConfig
from .losses import LossWeights
from .render import RenderConfig
from .stylize import StyleConfig
from .training import TrainConfig

__all__ = [
    "fit_config_from_dict",
    "style_config_from_dict",
    "render_config_from_dict",
    "train_config_from_dict",
    "load_config_file",
    "section",
]


def _build(cls, data: dict, name: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown {name} config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key == "weights" and isinstance(value, dict):
            value = _build(LossWeights, value, "weights")
        elif key in ("lambda_scales", "betas", "channels") and isinstance(
            value, list
        ):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def fit_config_from_dict(data: dict) -> FitConfig:
    return _build(FitConfig, data, "fit")


def style_config_from_dict(data: dict) -> StyleConfig:
    return _build(StyleConfig, data, "style")


def render_config_from_dict(data: dict) -> RenderConfig:
    return _build(RenderConfig, data, "render")


def train_config_from_dict(data: dict) -> TrainConfig:
    return _build(TrainConfig, data, "train")


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise ValueError(f"config section {name!r} must be an object")
    return dict(value)
