"""Flat JSON run configuration with defaults, typing, and overrides.

A config file is a single JSON object whose keys come from CONFIG_KEYS
(dotted names group related settings). Unknown keys and type mismatches
are rejected by name. Command-line overrides are "key=value" strings
applied after the file, with values parsed as JSON when possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ConfigError
from .masking import MaskSchedule
from .mp2vec import WalkConfig
from .objectives import LossWeights
from .trainer import TrainConfig

# key -> (default, type, help)
CONFIG_KEYS: dict[str, tuple[object, type, str]] = {
    "seed": (0, int, "run seed; every random stream derives from it"),
    "hidden_dim": (256, int, "latent width of the encoder and decoders"),
    "num_heads": (4, int, "attention heads per node-level layer"),
    "semantic_dim": (128, int, "width of the view-fusion scorer"),
    "learning_rate": (5e-4, float, "Adam step size"),
    "weight_decay": (0.0, float, "L2 penalty added to gradients"),
    "max_epochs": (200, int, "hard cap on training epochs"),
    "patience": (10, int, "epochs without improvement before stopping"),
    "improvement_tol": (1e-5, float, "minimum loss drop that counts as improvement"),
    "edge_mask_rate": (0.5, float, "expected fraction of view edges removed per epoch"),
    "mask_schedule.min_rate": (0.5, float, "attribute mask rate at epoch 0"),
    "mask_schedule.max_rate": (0.8, float, "attribute mask rate ceiling"),
    "mask_schedule.step": (0.005, float, "attribute mask rate increase per epoch"),
    "unchanged_rate": (0.0, float, "fraction of masked rows left unchanged"),
    "replace_rate": (0.0, float, "fraction of masked rows replaced by another row"),
    "loss_weights.edge": (1.0, float, "weight of the edge reconstruction loss"),
    "loss_weights.attr": (1.0, float, "weight of the attribute restoration loss"),
    "loss_weights.position": (1.0, float, "weight of the position prediction loss"),
    "sce_power.edge": (2.0, float, "cosine-error sharpening power, edge branch"),
    "sce_power.attr": (2.0, float, "cosine-error sharpening power, attribute branch"),
    "sce_power.position": (2.0, float, "cosine-error sharpening power, position branch"),
    "restore_target": ("original", str, "attribute loss target: original or literal"),
    "walks.per_node": (10, int, "walks started at each target node per metapath"),
    "walks.length": (20, int, "nodes per walk"),
    "walks.window": (5, int, "skip-gram context window"),
    "walks.negatives": (5, int, "negative samples per pair"),
    "walks.dim": (64, int, "positional feature width"),
    "walks.epochs": (5, int, "skip-gram passes over the pair corpus"),
    "walks.batch_size": (1024, int, "skip-gram minibatch size"),
    "walks.learning_rate": (0.025, float, "skip-gram initial step size"),
    "walks.min_learning_rate": (1e-4, float, "skip-gram final step size"),
    "eval.labels_per_class": (20, int, "probe training labels per class"),
    "eval.val_size": (1000, int, "probe validation nodes"),
    "eval.test_size": (1000, int, "probe test nodes"),
    "eval.seeds": (10, int, "evaluation repetitions"),
    "eval.restarts": (10, int, "k-means restarts per repetition"),
}


def default_config() -> dict[str, object]:
    return {k: v for k, (v, _, _) in CONFIG_KEYS.items()}


def _coerce(key: str, value: object) -> object:
    _, expected, _ = CONFIG_KEYS[key]
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} expects a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} expects an integer, got {value!r}")
        return int(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} expects a string, got {value!r}")
        return value
    raise ConfigError(f"config key {key!r} has unsupported type")


def parse_config(path: str | Path | None, overrides: Sequence[str] = ()) -> dict[str, object]:
    """Defaults, then the file, then key=value overrides; typed throughout."""
    config = default_config()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except FileNotFoundError:
            raise ConfigError(f"{p}: config file not found") from None
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: line {e.lineno}: invalid JSON ({e.msg})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{p}: config must be a JSON object")
        for key, value in loaded.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            config[key] = _coerce(key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config[key] = _coerce(key, value)
    return config


def _wrap_config_error(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def walk_config(config: dict[str, object]) -> WalkConfig:
    return _wrap_config_error(
        WalkConfig,
        walks_per_node=config["walks.per_node"],
        walk_length=config["walks.length"],
        window=config["walks.window"],
        negatives=config["walks.negatives"],
        dim=config["walks.dim"],
        epochs=config["walks.epochs"],
        batch_size=config["walks.batch_size"],
        learning_rate=config["walks.learning_rate"],
        min_learning_rate=config["walks.min_learning_rate"],
        seed=config["seed"],
    )


def train_config(config: dict[str, object]) -> TrainConfig:
    schedule = _wrap_config_error(
        MaskSchedule,
        min_rate=config["mask_schedule.min_rate"],
        max_rate=config["mask_schedule.max_rate"],
        step=config["mask_schedule.step"],
    )
    weights = _wrap_config_error(
        LossWeights,
        edge=config["loss_weights.edge"],
        attr=config["loss_weights.attr"],
        position=config["loss_weights.position"],
        edge_power=config["sce_power.edge"],
        attr_power=config["sce_power.attr"],
        position_power=config["sce_power.position"],
    )
    return _wrap_config_error(
        TrainConfig,
        hidden_dim=config["hidden_dim"],
        num_heads=config["num_heads"],
        semantic_dim=config["semantic_dim"],
        position_dim=config["walks.dim"],
        learning_rate=config["learning_rate"],
        weight_decay=config["weight_decay"],
        max_epochs=config["max_epochs"],
        patience=config["patience"],
        improvement_tol=config["improvement_tol"],
        edge_mask_rate=config["edge_mask_rate"],
        schedule=schedule,
        unchanged_rate=config["unchanged_rate"],
        replace_rate=config["replace_rate"],
        weights=weights,
        restore_target=config["restore_target"],
        walks=walk_config(config),
        seed=config["seed"],
    )


@dataclass
class RunManifest:
    """What a pipeline run was asked to do and where it wrote things."""

    data_dir: str
    out_dir: str
    config: dict[str, object]
    artifacts: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "data_dir": self.data_dir,
                "out_dir": self.out_dir,
                "config": self.config,
                "artifacts": self.artifacts,
            },
            sort_keys=True,
            indent=1,
        )
