"""Bundled experiment configurations."""
import json
from importlib import resources

from ..errors import ConfigError


def names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def load(name: str) -> dict:
    path = resources.files(__name__) / f"{name}.json"
    if not path.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}; available: {', '.join(names())}")
    return json.loads(path.read_text())
