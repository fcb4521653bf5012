"""Declarative experiment configuration (one JSON document, six sections)."""
from __future__ import annotations

import copy
import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from ..errors import ConfigError


@dataclass
class CryptoSection:
    enabled: bool = True
    degree: int = 1024
    q: int = 65537
    sigma: float = 3.2
    base: int = 2


@dataclass
class QuantSection:
    scale: int = 256
    clip: float = 8.0
    max_parties: int = 15


@dataclass
class DagSection:
    rho: float = 0.5
    threshold: float = 0.5
    walkers: int = 2
    start_depth: int = 10
    clamp: bool = True
    tolerance: float = 0.05


@dataclass
class FedSection:
    lr: float = 0.02
    server_lr: float = 1.0
    batch_size: int = 32
    credibility: float = 1.0
    multiplicity: float = 1.0
    plateau_tol: float = 1e-4     # stop once the global loss improves less than this ...
    plateau_window: int = 5       # ... over this many rounds (0 disables)


@dataclass
class DataSection:
    samples_per_hospital: int = 100
    features: int = 50
    classes: int = 3
    class_sep: float = 2.0
    sigma: float = 1.0
    spread: float = 30.0          # largest/smallest noise std across features
    validation_samples: int = 1000
    test_samples: int = 3000


@dataclass
class CostModel:
    """Simulated milliseconds per operation (defaults measured at degree 1024)."""
    grad_per_sample_param: float = 1.5e-5
    encrypt_per_block: float = 1.0
    wrap_per_block: float = 100.0
    unwrap_per_share: float = 35.0
    decrypt_per_block: float = 0.5
    eval_per_sample: float = 4e-5
    walk: float = 0.05


@dataclass
class SimSection:
    seed: int
    hospitals: int = 3
    episodes: int = 3
    time_slots: int = 1
    grads_per_hospital: int = 125
    dropout: list = field(default_factory=list)        # [[round, hospital], ...]
    time_limits: Optional[list] = None                 # per-hospital limit in ms
    clock: str = "model"                               # "model" or "measured"
    cost: CostModel = field(default_factory=CostModel)


SECTIONS = {"crypto": CryptoSection, "quant": QuantSection, "dag": DagSection,
            "fed": FedSection, "data": DataSection, "sim": SimSection}


def _build(cls, data: Any, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected an object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    kwargs = {}
    for name, f in known.items():
        path = f"{prefix}.{name}"
        if name not in data:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ConfigError(path, "required key is missing")
            continue
        default = f.default if f.default_factory is MISSING else f.default_factory()
        kwargs[name] = _check_value(path, data[name], default, f)
    return cls(**kwargs)


def _check_value(path: str, value, default, f):
    if f.name == "cost":
        return _build(CostModel, value, path)
    if f.name == "seed":
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise ConfigError(path, "must be a nonnegative integer")
        return value
    if default is None or isinstance(default, list):
        if value is not None and not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    return value


@dataclass
class ExperimentConfig:
    sim: SimSection
    crypto: CryptoSection = field(default_factory=CryptoSection)
    quant: QuantSection = field(default_factory=QuantSection)
    dag: DagSection = field(default_factory=DagSection)
    fed: FedSection = field(default_factory=FedSection)
    data: DataSection = field(default_factory=DataSection)

    @classmethod
    def from_dict(cls, raw: Any) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        for key in raw:
            if key not in SECTIONS:
                raise ConfigError(key, "unknown section")
        if "sim" not in raw:
            raise ConfigError("sim.seed", "required key is missing")
        built = {name: _build(SECTIONS[name], raw[name], name) for name in SECTIONS if name in raw}
        cfg = cls(**built)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def replace(self, **dotted) -> "ExperimentConfig":
        """Copy with overrides given as section__key=value."""
        raw = copy.deepcopy(self.to_dict())
        for k, v in dotted.items():
            section, key = k.split("__", 1)
            raw[section][key] = v
        return ExperimentConfig.from_dict(raw)

    def validate(self) -> None:
        s = self.sim
        for key in ("hospitals", "episodes", "time_slots", "grads_per_hospital"):
            if getattr(s, key) < 1:
                raise ConfigError(f"sim.{key}", "must be >= 1")
        if s.hospitals > self.quant.max_parties:
            raise ConfigError("sim.hospitals", f"exceeds quant.max_parties={self.quant.max_parties}")
        if s.clock not in ("model", "measured"):
            raise ConfigError("sim.clock", "must be 'model' or 'measured'")
        for i, item in enumerate(s.dropout):
            if (not isinstance(item, list) or len(item) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) for v in item)
                    or not 0 <= item[1] < s.hospitals or item[0] < 0):
                raise ConfigError(f"sim.dropout[{i}]", "expected [round, hospital] with a valid hospital index")
        if s.time_limits is not None and (
                len(s.time_limits) != s.hospitals
                or any(not isinstance(t, (int, float)) or t < 0 for t in s.time_limits)):
            raise ConfigError("sim.time_limits", "need one nonnegative limit per hospital")
        d = self.data
        for key in ("samples_per_hospital", "features", "validation_samples", "test_samples"):
            if getattr(d, key) < 1:
                raise ConfigError(f"data.{key}", "must be >= 1")
        if not d.sigma > 0:
            raise ConfigError("data.sigma", "must be positive")
        if not d.spread >= 1:
            raise ConfigError("data.spread", "must be >= 1")
        if d.classes < 2:
            raise ConfigError("data.classes", "must be >= 2")
        if d.classes > d.features:
            raise ConfigError("data.classes", "must not exceed data.features")
        if not self.fed.lr > 0:
            raise ConfigError("fed.lr", "must be positive")
        if self.fed.plateau_window < 0:
            raise ConfigError("fed.plateau_window", "must be >= 0")
        if self.fed.batch_size < 1:
            raise ConfigError("fed.batch_size", "must be >= 1")
        if not 0 <= self.fed.credibility <= 1:
            raise ConfigError("fed.credibility", "must lie in [0, 1]")
        if not 0 <= self.dag.rho <= 1:
            raise ConfigError("dag.rho", "must lie in [0, 1]")
        if not self.dag.threshold > 0:
            raise ConfigError("dag.threshold", "must be positive")
        if self.dag.walkers < 1:
            raise ConfigError("dag.walkers", "must be >= 1")
