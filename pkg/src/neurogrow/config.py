"""Training configuration: dataclasses plus strict dict/JSON conversion.

Unknown keys are rejected at every nesting level, and scalar types are
checked before any work starts.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import ConfigError
from .growth import GrowthPolicy
from .similarity import RegConfig

SEED_ENV = "NEUROGROW_SEED"
DATA_KINDS = ("spirals", "csv", "idx")


@dataclass
class DataConfig:
    kind: str = "spirals"
    # spirals
    n_per_class: int = 500
    noise_std: float = 0.2
    turns: float = 1.5
    test_fraction: float = 0.2
    # None: derive from the run seed
    seed: Optional[int] = None
    normalize: bool = True
    # csv
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    label_column: str = "label"
    # idx
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    limit: Optional[int] = None

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}, got {self.kind!r}")
        if self.kind == "spirals" and self.n_per_class < 1:
            raise ConfigError("data.n_per_class must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("data.noise_std must be >= 0")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("data.test_fraction must lie in (0, 1)")
        required = {"csv": ("train_path", "test_path"),
                    "idx": ("train_images", "train_labels", "test_images", "test_labels")}
        for key in required.get(self.kind, ()):
            if getattr(self, key) is None:
                raise ConfigError(f"data.{key} is required for data.kind={self.kind!r}")


@dataclass
class OptimConfig:
    lr: float = 0.1
    momentum: float = 0.9
    # restart the cosine schedule at every growth event
    restart_on_growth: bool = False

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError("optim.lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("optim.momentum must lie in [0, 1)")


def _default_hidden():
    return [{"type": "dense", "width": 16}, {"type": "dense", "width": 32}]


LAYER_KEYS = {
    "dense": {"type", "width", "activation"},
    "conv": {"type", "channels", "kernel", "stride", "pad", "activation"},
}


@dataclass
class TrainConfig:
    epochs: int = 100
    # 0 disables growth; growth fires after epochs that are multiples of this
    grow_every_epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    label: str = ""
    # "hidden", "all", or a list of 1-based layer numbers
    reg_layers: Union[str, list] = "hidden"
    hidden: list = field(default_factory=_default_hidden)
    data: DataConfig = field(default_factory=DataConfig)
    growth: GrowthPolicy = field(default_factory=GrowthPolicy)
    reg: RegConfig = field(default_factory=RegConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.grow_every_epochs < 0:
            raise ConfigError("grow_every_epochs must be >= 0 (0 disables growth)")
        if self.grow_every_epochs > self.epochs and self.epochs > 0:
            raise ConfigError("grow_every_epochs must not exceed epochs (use 0 to disable growth)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.hidden:
            raise ConfigError("hidden must list at least one growable layer")
        for i, spec in enumerate(self.hidden):
            if not isinstance(spec, dict) or spec.get("type") not in LAYER_KEYS:
                raise ConfigError(f"hidden[{i}] must be an object with type 'dense' or 'conv'")
            unknown = set(spec) - LAYER_KEYS[spec["type"]]
            if unknown:
                raise ConfigError(f"hidden[{i}]: unknown key(s) {sorted(unknown)}")
            size = spec.get("width" if spec["type"] == "dense" else "channels")
            if not isinstance(size, int) or isinstance(size, bool) or size < 1:
                raise ConfigError(f"hidden[{i}]: width/channels must be a positive integer")
        if isinstance(self.reg_layers, str):
            if self.reg_layers not in ("hidden", "all"):
                raise ConfigError("reg_layers must be 'hidden', 'all' or a list of 1-based layer numbers")
        elif not all(isinstance(i, int) and i >= 1 for i in self.reg_layers):
            raise ConfigError("reg_layers list entries must be integers >= 1")

    @property
    def growth_enabled(self):
        return self.grow_every_epochs > 0


SECTIONS = {"data": DataConfig, "growth": GrowthPolicy, "reg": RegConfig, "optim": OptimConfig}


def _check_scalar(key, value, annotation):
    allowed = {int: (int,), float: (int, float), bool: (bool,), str: (str,)}
    optional = False
    if getattr(annotation, "__origin__", None) is Union:
        args = [a for a in annotation.__args__ if a is not type(None)]
        optional = len(args) < len(annotation.__args__)
        annotation = args[0] if len(args) == 1 else None
    if value is None:
        if optional:
            return
        raise ConfigError(f"{key} must not be null")
    if annotation not in allowed:
        return
    if isinstance(value, bool) and annotation is not bool:
        raise ConfigError(f"{key} must be a {annotation.__name__}, got a boolean")
    if not isinstance(value, allowed[annotation]):
        raise ConfigError(f"{key} must be a {annotation.__name__}, got {value!r}")


def _build(cls, raw, prefix):
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        where = f" in {prefix}" if prefix else ""
        raise ConfigError(f"unknown config key(s){where}: {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if cls is TrainConfig and key in SECTIONS:
            kwargs[key] = _build(SECTIONS[key], value, f"{key}.")
        else:
            _check_scalar(prefix + key, value, fields[key].type)
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_from_dict(raw):
    return _build(TrainConfig, raw, "")


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def parse_override(text):
    """Parse ``KEY=VALUE``; VALUE is read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(raw, overrides):
    raw = json.loads(json.dumps(raw))
    for text in overrides:
        key, value = parse_override(text)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {part} is not a section")
        node[parts[-1]] = value
    return raw


def load_config(path, overrides=(), env=None):
    """Read a JSON config, apply ``--set`` overrides and the seed environment variable."""
    env = os.environ if env is None else env
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    raw = apply_overrides(raw, overrides)
    if env.get(SEED_ENV):
        try:
            raw["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    return config_from_dict(raw)
