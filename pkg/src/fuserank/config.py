"""Pipeline configuration: JSON file, flag overrides, validation, hashing.

Precedence is flags > file > defaults.  The configuration hash covers every
semantic field (``output_dir`` is a location, not a semantic choice, and is
excluded) and is embedded in every stage artifact so stale mixtures are
refused.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .fusion import BACKBONE_ORDER

_DEFAULTS = {
    "dataset": {
        "source_dir": None,
        "regions_file": None,
        "patch_size": 32,
        "count_per_class": 3000,
        "seed": 0,
    },
    "backbones": {
        "order": list(BACKBONE_ORDER),
        "paths": None,
    },
    "fusion": {"k": 1500},
    "svm": {
        "C": 1.0,
        "max_iterations": 5000,
        "gradient_tolerance": 1e-6,
        "initial_step": 1.0,
    },
    "split": {"train_fraction": 0.75},
    "output_dir": None,
}

# flag name -> (section, key, parser); section None targets the top level
OVERRIDE_FIELDS = {
    "seed": ("dataset", "seed", int),
    "patch_size": ("dataset", "patch_size", int),
    "count_per_class": ("dataset", "count_per_class", int),
    "k": ("fusion", "k", int),
    "C": ("svm", "C", float),
    "train_fraction": ("split", "train_fraction", float),
    "output_dir": (None, "output_dir", str),
}


@dataclass(frozen=True)
class PipelineConfig:
    data: dict
    base_dir: Path

    def __getitem__(self, key):
        return self.data[key]

    def resolve(self, value: str) -> Path:
        """Resolve a config-relative path against the config file location."""
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.data["output_dir"])

    def backbone_paths(self) -> list[tuple[str, Path]]:
        order = self.data["backbones"]["order"]
        paths = self.data["backbones"]["paths"]
        return [(name, self.resolve(paths[name])) for name in order]

    def config_hash(self) -> str:
        semantic = copy.deepcopy(self.data)
        semantic.pop("output_dir", None)
        canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _validate(data: dict) -> None:
    def require(condition, message):
        if not condition:
            raise ConfigError(message)

    dataset = data["dataset"]
    require(dataset["source_dir"], "dataset.source_dir is required")
    require(dataset["regions_file"], "dataset.regions_file is required")
    require(dataset["patch_size"] in (16, 32),
            f"dataset.patch_size must be 16 or 32, got {dataset['patch_size']}")
    require(isinstance(dataset["count_per_class"], int)
            and dataset["count_per_class"] >= 1,
            "dataset.count_per_class must be a positive integer")
    require(isinstance(dataset["seed"], int) and 0 <= dataset["seed"] < 2**64,
            "dataset.seed must be an unsigned 64-bit integer")

    backbones = data["backbones"]
    require(isinstance(backbones["order"], list) and len(backbones["order"]) == 3,
            "backbones.order must list exactly 3 backbones")
    require(len(set(backbones["order"])) == 3, "backbones.order must be distinct")
    require(isinstance(backbones.get("paths"), dict),
            "backbones.paths is required")
    for name in backbones["order"]:
        require(name in backbones["paths"],
                f"backbones.paths is missing an entry for {name!r}")

    require(isinstance(data["fusion"]["k"], int) and 1 <= data["fusion"]["k"] <= 3000,
            f"fusion.k must lie in [1, 3000], got {data['fusion']['k']}")

    svm = data["svm"]
    require(svm["C"] > 0, "svm.C must be positive")
    require(svm["max_iterations"] >= 1, "svm.max_iterations must be >= 1")
    require(svm["gradient_tolerance"] > 0, "svm.gradient_tolerance must be positive")
    require(svm["initial_step"] > 0, "svm.initial_step must be positive")

    fraction = data["split"]["train_fraction"]
    require(0.0 < fraction < 1.0,
            f"split.train_fraction must lie in (0, 1), got {fraction}")
    require(data["output_dir"], "output_dir is required")


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Read a JSON config file and apply flag overrides on top."""
    path = Path(path)
    try:
        file_data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(file_data, dict):
        raise ConfigError("config root must be a JSON object")

    data = _merge(_DEFAULTS, file_data)
    for flag, raw in (overrides or {}).items():
        if raw is None:
            continue
        section, key, parse = OVERRIDE_FIELDS[flag]
        value = parse(raw)
        if section is None:
            data[key] = value
        else:
            data[section][key] = value
    _validate(data)
    return PipelineConfig(data=data, base_dir=path.parent.resolve())
