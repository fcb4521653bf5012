"""Parameter sweeps: one run per (value, seed), plus a median summary."""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from .config import ExperimentConfig
from .runner import run_experiment

SUMMARY_HEADER = ("param", "value", "seeds", "median_accuracy", "median_wall_time_ms",
                  "median_final_loss")


@dataclass(frozen=True)
class SweepSpec:
    base: dict
    vary: str                 # dotted key, e.g. "sim.hospitals"
    values: tuple
    seeds: tuple[int, ...]

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepSpec":
        for key in ("base", "vary", "values", "seeds"):
            if key not in raw:
                raise ConfigError(key, "required sweep key is missing")
        if raw["vary"].count(".") != 1:
            raise ConfigError("vary", "expected section.key")
        if not raw["values"]:
            raise ConfigError("values", "need at least one value")
        if not raw["seeds"]:
            raise ConfigError("seeds", "need at least one seed")
        return cls(raw["base"], raw["vary"], tuple(raw["values"]), tuple(raw["seeds"]))

    def config(self, value: Any, seed: int) -> ExperimentConfig:
        raw = copy.deepcopy(self.base)
        section, key = self.vary.split(".")
        raw.setdefault(section, {})[key] = value
        raw.setdefault("sim", {})["seed"] = seed
        return ExperimentConfig.from_dict(raw)


@dataclass(frozen=True)
class SweepPoint:
    value: Any
    accuracies: tuple[float, ...]
    wall_times: tuple[float, ...]
    losses: tuple[float, ...]

    @property
    def median_accuracy(self) -> float:
        return float(np.median(self.accuracies))

    @property
    def median_wall_time(self) -> float:
        return float(np.median(self.wall_times))

    @property
    def median_loss(self) -> float:
        return float(np.median(self.losses))


def run_sweep(spec: SweepSpec, out_dir=None, seeds: Optional[Sequence[int]] = None,
              progress=None) -> list[SweepPoint]:
    """Final-round accuracy, mean round wall time and final loss per run.

    With ``out_dir``, run artifacts go to ``<key>-<value>/seed-<s>/`` and the
    medians to ``summary.csv``.
    """
    seeds = tuple(spec.seeds if seeds is None else seeds)
    out = Path(out_dir) if out_dir is not None else None
    name = spec.vary.split(".")[1]
    points = []
    for value in spec.values:
        accs, walls, losses = [], [], []
        for seed in seeds:
            run_dir = out / f"{name}-{value}" / f"seed-{seed}" if out else None
            res = run_experiment(spec.config(value, seed), run_dir)
            last = res.metrics[-1]
            accs.append(last.global_accuracy)
            walls.append(float(np.mean([m.wall_time_ms for m in res.metrics])))
            losses.append(last.global_loss)
            if progress:
                progress(value, seed, last)
        points.append(SweepPoint(value, tuple(accs), tuple(walls), tuple(losses)))
    if out:
        write_summary(out / "summary.csv", spec, points, seeds)
    return points


def write_summary(path, spec: SweepSpec, points: Sequence[SweepPoint], seeds) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for p in points:
            w.writerow([spec.vary, p.value, " ".join(map(str, seeds)), f"{p.median_accuracy:.6f}",
                        f"{p.median_wall_time:.3f}", f"{p.median_loss:.6f}"])
