"""Run configuration: defaults, ``key = value`` config files, validation."""

import configparser
from dataclasses import dataclass, field, fields, asdict

from .hyperopt import SearchSpace
from .lstm import TrainConfig
from .pipeline import STRATEGIES


class UsageError(ValueError):
    """Invalid command-line or configuration input."""


SETUPS = ("co", "fo", "ro")


@dataclass
class RunConfig:
    dataset: str = None
    format: str = "generic"
    name: str = None
    frequency: int = None
    horizon: int = None
    grouping: str = "cluster"
    preset: str = None
    input_size: int = None
    output_size: int = None
    cell_dim: int = 20
    epoch_size: int = None
    minibatch_size: int = 4
    lr_per_sample: float = 0.003
    max_epochs: int = 20
    noise_std: float = 0.001
    l2_weight: float = 0.0005
    budget: int = 0
    setup: str = "fo"
    origins: int = 4
    seed: int = 0
    max_k: int = None
    restarts: int = 10
    epsilon: float = 0.0
    forecasts: list = field(default_factory=list)
    methods: list = field(default_factory=lambda: ["all", "horizon", "cluster"])
    models: str = None
    out: str = "out"

    def train_config(self):
        return TrainConfig(cell_dim=self.cell_dim, epoch_size=self.epoch_size,
                           minibatch_size=self.minibatch_size,
                           lr_per_sample=self.lr_per_sample, max_epochs=self.max_epochs,
                           noise_std=self.noise_std, l2_weight=self.l2_weight, seed=self.seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_LISTS = {"forecasts", "methods"}


def coerce(key, raw):
    """Parse one textual config value according to the field type."""
    if key not in _TYPES:
        raise UsageError(f"unknown configuration key {key!r}")
    if raw is None:
        return None
    if key in _LISTS:
        if isinstance(raw, list):
            return raw
        return [t.strip() for t in str(raw).split(",") if t.strip()]
    if isinstance(raw, str) and raw.strip().lower() in ("", "none", "auto"):
        return None
    typ = _TYPES[key]
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: cannot parse {raw!r}") from None
    return str(raw)


def read_config_file(path, command):
    """Values from the ``[run]`` section overlaid by the ``[<command>]`` section."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from None
    out = {}
    for section in ("run", command):
        if cp.has_section(section):
            for key, raw in cp.items(section):
                out[key.replace("-", "_")] = coerce(key.replace("-", "_"), raw)
    return out


def build(command, file_values=None, flag_values=None):
    """Defaults, then file values, then explicit flags."""
    merged = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (flag_values or {}).items() if v is not None})
    cfg = RunConfig.from_dict(merged)
    return cfg


# Fixed-configuration parameters must lie in the tuning box; epoch_size
# depends on the group's training-set size and is only checked for sign.
_STATIC = ("cell_dim", "minibatch_size", "lr_per_sample", "max_epochs", "noise_std", "l2_weight")


def validate(cfg, needs_dataset=True):
    if needs_dataset and not cfg.dataset:
        raise UsageError("--dataset is required")
    if cfg.grouping not in STRATEGIES:
        raise UsageError(f"grouping must be one of {STRATEGIES}")
    for m in cfg.methods:
        if m not in STRATEGIES:
            raise UsageError(f"unknown method {m!r}; expected a subset of {STRATEGIES}")
    if cfg.setup not in SETUPS:
        raise UsageError(f"setup must be one of {SETUPS}")
    if cfg.origins < 1:
        raise UsageError("origins must be >= 1")
    if cfg.budget < 0 or cfg.budget == 1:
        raise UsageError("budget must be 0 (fixed config) or >= 2")
    if cfg.epoch_size is not None and cfg.epoch_size < 1:
        raise UsageError("epoch_size must be >= 1")
    if cfg.budget == 0:
        box = SearchSpace.default(1).bounds
        for key in _STATIC:
            lo, hi = box[key]
            v = getattr(cfg, key)
            if not lo <= v <= hi:
                raise UsageError(f"{key}={v} outside the tuning range [{lo}, {hi}]")
    for key in ("input_size", "output_size", "frequency", "horizon", "max_k"):
        v = getattr(cfg, key)
        if v is not None and v < 1:
            raise UsageError(f"{key} must be >= 1")
    return cfg
