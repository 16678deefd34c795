"""Run configuration: defaults, JSON config files, flag overrides.

The effective configuration (defaults, then file, then flags) is serialized
next to every command's outputs so runs can be reproduced byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .corpus import SynthConfig
from .trainer import TrainerConfig


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass
class RunConfig:
    embed_dim: int = 32
    hidden_dim: int = 32
    image_dim: int = 16
    use_attrs: bool = True
    use_image: bool = True
    split: tuple = (0.8, 0.1, 0.1)
    train: TrainerConfig = field(default_factory=TrainerConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self):
        for name in ("embed_dim", "hidden_dim", "image_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {self.split}")
        try:
            self.train.validate()
            self.synth.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.synth.image_dim != self.image_dim:
            raise ConfigError(
                f"synth.image_dim ({self.synth.image_dim}) must match model "
                f"image_dim ({self.image_dim})"
            )
        return self

    def to_dict(self) -> dict:
        def plain(value):
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            if isinstance(value, list):
                return [plain(v) for v in value]
            return value

        return {
            "model": {
                "embed_dim": self.embed_dim,
                "hidden_dim": self.hidden_dim,
                "image_dim": self.image_dim,
                "use_attrs": self.use_attrs,
                "use_image": self.use_image,
            },
            "split": list(self.split),
            "train": {f.name: plain(getattr(self.train, f.name))
                      for f in fields(TrainerConfig)},
            "synth": {f.name: plain(getattr(self.synth, f.name))
                      for f in fields(SynthConfig)},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        known = {"model", "split", "train", "synth"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = cls()
        model = raw.get("model", {})
        model_fields = {"embed_dim", "hidden_dim", "image_dim", "use_attrs",
                        "use_image"}
        bad = set(model) - model_fields
        if bad:
            raise ConfigError(f"unknown model keys: {sorted(bad)}")
        for key, value in model.items():
            setattr(cfg, key, value)
        if "split" in raw:
            cfg.split = tuple(raw["split"])
        cfg.train = _merge_dataclass(TrainerConfig(), raw.get("train", {}), "train")
        cfg.synth = _merge_dataclass(SynthConfig(), raw.get("synth", {}), "synth")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def override_seed(self, seed: int | None):
        if seed is not None:
            self.train = dataclasses.replace(self.train, seed=int(seed))
            self.synth = dataclasses.replace(self.synth, seed=int(seed))
        return self

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _merge_dataclass(base, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in fields(base)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    values = dict(raw)
    # JSON arrays come back as lists; the dataclasses expect tuples for pools
    for key, value in values.items():
        if isinstance(value, list):
            values[key] = tuple(tuple(v) if isinstance(v, list) else v
                                for v in value)
    return dataclasses.replace(base, **values)
