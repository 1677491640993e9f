"""Run configuration: defaults, file loading, overrides, and hashing.

Precedence, lowest to highest: built-in defaults, the config file,
the SCGAN_SEED environment variable (seed only), ``--set`` style
key=value overrides, then an explicit seed flag. Unknown sections or
keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .critic import CriticConfig
from .features import PerceptualConfig
from .generator import GeneratorConfig
from .losses import LSGAN, WGAN, LossWeights

SEED_ENV_VAR = "SCGAN_SEED"


@dataclass
class TrainConfig:
    stage1_epochs: int = 10
    stage2_epochs: int = 30
    lr_stage1: float = 2e-4
    lr_stage2_initial: float = 1e-4
    lr_halving_period: int = 10
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 8
    input_noise_std: float = 0.005
    seed: int = 0
    critic_steps_per_gen_step: int = 1
    use_attention: bool = True
    use_gan: bool = True
    use_perceptual: bool = True
    adv_mode: str = WGAN
    pixel_mode: str = "l1"
    pretrained_global: bool = True
    use_global: bool = True
    global_weights_manifest: str | None = None

    def validate(self) -> None:
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.lr_stage1 <= 0 or self.lr_stage2_initial <= 0:
            raise ValueError("learning rates must be positive")
        if self.lr_halving_period < 1:
            raise ValueError("lr_halving_period must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.input_noise_std < 0:
            raise ValueError("input_noise_std must be non-negative")
        if self.critic_steps_per_gen_step < 1:
            raise ValueError("critic_steps_per_gen_step must be >= 1")
        if self.adv_mode not in (WGAN, LSGAN):
            raise ValueError(f"adv_mode must be '{WGAN}' or '{LSGAN}', got '{self.adv_mode}'")
        if self.pixel_mode not in ("l1", "l2"):
            raise ValueError(f"pixel_mode must be 'l1' or 'l2', got '{self.pixel_mode}'")


@dataclass
class DataConfig:
    color_dir: str = ""
    saliency_dir: str = ""


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    perceptual: PerceptualConfig = field(default_factory=PerceptualConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output_dir: str = "runs/default"

    def validate(self) -> None:
        self.effective_generator().validate()
        self.critic.validate()
        self.training.validate()

    def effective_generator(self) -> GeneratorConfig:
        """Generator config with the run-level global-encoder switch applied."""
        use_global = self.generator.use_global_encoder and self.training.use_global
        return dataclasses.replace(self.generator, use_global_encoder=use_global)


_SECTION_TYPES = {
    "generator": GeneratorConfig,
    "critic": CriticConfig,
    "loss_weights": LossWeights,
    "perceptual": PerceptualConfig,
    "training": TrainConfig,
    "data": DataConfig,
}


def default_run_config() -> RunConfig:
    return RunConfig()


def config_to_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def config_to_yaml(config: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _coerce(section: str, key: str, value, default):
    if default is None or value is None:
        return value
    target = type(default)
    if target is bool:
        if not isinstance(value, bool):
            raise ValueError(f"{section}.{key} must be a boolean, got {value!r}")
        return value
    if target is int:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ValueError(f"{section}.{key} must be an integer, got {value!r}")
        return int(value)
    if target is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ValueError(f"{section}.{key} must be a number, got {value!r}")
        return float(value)
    if target is str and not isinstance(value, str):
        raise ValueError(f"{section}.{key} must be a string, got {value!r}")
    return value


def run_config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a nested dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ValueError(f"config root must be a mapping, got {type(data).__name__}")
    known = set(_SECTION_TYPES) | {"output_dir"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config sections/keys: {unknown}")
    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        section_data = data.get(section, {})
        if not isinstance(section_data, dict):
            raise ValueError(f"config section '{section}' must be a mapping")
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        bad = sorted(set(section_data) - names)
        if bad:
            raise ValueError(f"unknown keys in config section '{section}': {bad}")
        values = {
            key: _coerce(section, key, value, getattr(defaults, key))
            for key, value in section_data.items()
        }
        kwargs[section] = dataclasses.replace(defaults, **values)
    out = data.get("output_dir", RunConfig().output_dir)
    if not isinstance(out, str):
        raise ValueError("output_dir must be a string")
    return RunConfig(output_dir=out, **kwargs)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply 'section.key=value' strings onto a nested config dict."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override '{item}' is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        path = dotted.strip().split(".")
        if not all(path):
            raise ValueError(f"override '{item}' has an empty key component")
        value = yaml.safe_load(raw)
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override '{item}' descends into a non-mapping")
        node[path[-1]] = value
    return data


def load_run_config(
    path: str | Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    env: dict | None = None,
) -> RunConfig:
    """Resolve the effective RunConfig from file, environment, and flags."""
    env = os.environ if env is None else env
    data = config_to_dict(default_run_config())
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        data = _deep_merge(data, loaded)
    env_seed = env.get(SEED_ENV_VAR)
    if env_seed:
        try:
            data.setdefault("training", {})["seed"] = int(env_seed)
        except ValueError:
            raise ValueError(f"{SEED_ENV_VAR} must be an integer, got '{env_seed}'") from None
    if overrides:
        data = apply_overrides(data, list(overrides))
    if seed is not None:
        data.setdefault("training", {})["seed"] = int(seed)
    config = run_config_from_dict(data)
    config.validate()
    return config


def _deep_merge(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
