"""Shipped experiment configs, stored as package data."""
from __future__ import annotations

from importlib import resources

from ..errors import ConfigError
from .config import ExperimentConfig, parse_config


def _dir():
    return resources.files(__package__).joinpath("presets")


def preset_names() -> list:
    return sorted(p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigError("preset", f"unknown preset {name!r}; try `presets list`")
    return _dir().joinpath(f"{name}.yaml").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))


def preset_summary(name: str) -> str:
    """First comment line of the preset file."""
    for line in preset_text(name).splitlines():
        if line.startswith("#"):
            return line.lstrip("# ").strip()
    return ""
