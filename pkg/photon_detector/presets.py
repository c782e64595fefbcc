"""Access to the built-in experiment configurations in knowledge/reference_configs.yaml."""

from __future__ import annotations

import copy
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List

import yaml

from photon_detector.errors import MisconfigurationError

logger = logging.getLogger(__name__)

KNOWLEDGE_DIR = Path(__file__).resolve().parent / "knowledge"
REFERENCE_CONFIGS = KNOWLEDGE_DIR / "reference_configs.yaml"


def load_yaml_file(path: str | Path) -> Dict[str, Any]:
    """Parse a YAML mapping; an empty file yields {}."""
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise MisconfigurationError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    return data


@lru_cache
def _reference() -> Dict[str, Any]:
    data = load_yaml_file(REFERENCE_CONFIGS)
    logger.debug(
        "Loaded %d presets and %d figure recipes from %s",
        len(data.get("presets", {})),
        len(data.get("figures", {})),
        REFERENCE_CONFIGS,
    )
    return data


def list_presets() -> List[str]:
    return sorted(_reference().get("presets", {}))


def list_figures() -> List[str]:
    return sorted(_reference().get("figures", {}))


def get_preset(name: str) -> Dict[str, Any]:
    """Raw experiment-config mapping of a preset (a private copy)."""
    presets = _reference().get("presets", {})
    if name not in presets:
        raise MisconfigurationError(f"unknown preset {name!r}; available: {sorted(presets)}")
    entry = copy.deepcopy(presets[name])
    entry.pop("description", None)
    return entry


def get_figure(name: str) -> Dict[str, Any]:
    figures = _reference().get("figures", {})
    if name not in figures:
        raise MisconfigurationError(f"unknown figure id {name!r}; available: {sorted(figures)}")
    return copy.deepcopy(figures[name])
