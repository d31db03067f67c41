"""Strict JSON run configuration.

One document drives every subcommand: model architecture, mixing spec and
trainer settings, all defaulting to the published hyperparameters. Unknown
keys are rejected rather than ignored so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .data import MixSpec, NoiseSpec
from .model import ModelConfig
from .training import TrainerSettings


class RunConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    mix: MixSpec = field(default_factory=MixSpec)
    trainer: TrainerSettings = field(default_factory=TrainerSettings)
    output_dir: str = "resep_out"


_TUPLE_FIELDS = {"relative_gain_range_db", "snr_db_range"}


def _build(cls, doc, path):
    if not isinstance(doc, dict):
        raise RunConfigError(f"{path or 'config'}: expected an object, got {type(doc).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise RunConfigError(f"{path or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, value in doc.items():
        sub = f"{path}.{name}" if path else name
        if name == "noise":
            kwargs[name] = None if value is None else _build(NoiseSpec, value, sub)
        elif dataclasses.is_dataclass(fields[name].type) or name in ("model", "mix", "trainer"):
            kwargs[name] = _build(
                {"model": ModelConfig, "mix": MixSpec, "trainer": TrainerSettings}[name],
                value,
                sub,
            )
        elif name in _TUPLE_FIELDS:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise RunConfigError(f"{path or 'config'}: {e}") from e


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise RunConfigError(f"{path}: invalid JSON ({e})") from e
    return _build(RunConfig, doc, "")


def run_config_from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "")


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply dotted ``section.key=value`` overrides (values parsed as JSON,
    falling back to plain strings)."""
    doc = dataclasses.asdict(config)
    for item in overrides:
        if "=" not in item:
            raise RunConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise RunConfigError(f"override {key!r}: no section {part!r}")
            node = node[part]
        if parts[-1] not in node:
            raise RunConfigError(f"override {key!r}: unknown key {parts[-1]!r}")
        node[parts[-1]] = value
    return run_config_from_dict(doc)
