"""Run configuration: ``[data]``, ``[model]`` and ``[train]`` key=value sections."""

import configparser
from pathlib import Path
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigurationError

# accepted spellings -> field names
ALIASES = {"r": "levels", "d": "resize", "s": "grid", "lambda": "lam", "hidden": "hdim"}
KEY_NAMES = {"lam": "lambda"}


@dataclass(frozen=True)
class DataConfig:
    dir: str = "data"
    image_size: int = 256
    n_samples: int = 500
    malignant_fraction: float = 0.5
    benign_fraction: float = 0.5
    split: float = 0.8
    seed: int = 42


@dataclass(frozen=True)
class ModelConfig:
    levels: int = 3
    resize: int = 32
    grid: int = 3
    hdim: int = 64
    conv_filters: tuple = (8, 16, 32)
    kernel: int = 3
    gat_layers: int = 2
    leaky_alpha: float = 0.2
    activation: str = "elu"
    node_cap: int = 256


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lam: float = 1.0
    zoom_pos_weight: float = 1.0
    epochs: int = 30
    batch_size: int = 8
    seed: int = 42
    optimizer: str = "adam"
    pretrain_epochs: int = 4
    pretrain_patches: int = 8
    pretrain_lr: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def problems(self):
        m, t, d = self.model, self.train, self.data
        out = []
        if m.levels < 1:
            out.append(f"model.levels must be >= 1 (got {m.levels})")
        if m.grid < 1:
            out.append(f"model.grid must be >= 1 (got {m.grid})")
        if m.resize < 8:
            out.append(f"model.resize must be >= 8 (got {m.resize})")
        pools = len(m.conv_filters)
        if m.resize % (2**pools):
            out.append(f"model.resize {m.resize} must be divisible by 2^{pools} for the pool stack")
        if m.hdim < 1:
            out.append(f"model.hdim must be >= 1 (got {m.hdim})")
        if m.kernel < 1 or m.kernel % 2 == 0:
            out.append(f"model.kernel must be a positive odd number (got {m.kernel})")
        if m.gat_layers < 1:
            out.append(f"model.gat_layers must be >= 1 (got {m.gat_layers})")
        if not 0.0 <= m.leaky_alpha < 1.0:
            out.append(f"model.leaky_alpha must lie in [0, 1) (got {m.leaky_alpha})")
        if m.activation not in ("elu", "relu"):
            out.append(f"model.activation must be elu or relu (got {m.activation})")
        if m.node_cap < 1:
            out.append(f"model.node_cap must be >= 1 (got {m.node_cap})")
        if t.lam < 0:
            out.append(f"train.lambda must be >= 0 (got {t.lam})")
        if t.zoom_pos_weight <= 0:
            out.append(f"train.zoom_pos_weight must be > 0 (got {t.zoom_pos_weight})")
        if t.lr <= 0 or t.pretrain_lr <= 0:
            out.append("learning rates must be positive")
        if t.epochs < 0 or t.pretrain_epochs < 0:
            out.append("epoch counts must be >= 0")
        if t.batch_size < 1:
            out.append(f"train.batch_size must be >= 1 (got {t.batch_size})")
        if t.optimizer not in ("adam", "sgd"):
            out.append(f"train.optimizer must be adam or sgd (got {t.optimizer})")
        if not 0.0 < d.split < 1.0:
            out.append(f"data.split must lie in (0, 1) (got {d.split})")
        for name in ("malignant_fraction", "benign_fraction"):
            v = getattr(d, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"data.{name} must lie in [0, 1] (got {v})")
        if d.n_samples < 1:
            out.append(f"data.n_samples must be >= 1 (got {d.n_samples})")
        if d.image_size < m.grid ** max(m.levels - 1, 0):
            out.append(f"data.image_size {d.image_size} too small for {m.levels} levels of {m.grid}x{m.grid}")
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigurationError("; ".join(errs))
        return self

    def to_text(self):
        """Canonical text form; identical configs give identical bytes."""
        lines = []
        for section in ("data", "model", "train"):
            lines.append(f"[{section}]")
            sub = getattr(self, section)
            for f in fields(sub):
                lines.append(f"{KEY_NAMES.get(f.name, f.name)} = {_format(getattr(sub, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, overrides):
        cfg = self
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
            key, value = item.split("=", 1)
            section, name = key.strip().split(".", 1)
            cfg = cfg._set(section.strip().lower(), name.strip(), value.strip())
        return cfg

    def _set(self, section, name, value):
        if section not in ("data", "model", "train"):
            raise ConfigurationError(f"unknown config section [{section}]")
        sub = getattr(self, section)
        fname = ALIASES.get(name.lower(), name.lower())
        ftypes = {f.name: f for f in fields(sub)}
        if fname not in ftypes:
            raise ConfigurationError(f"unknown config key {section}.{name}")
        parsed = _parse(value, getattr(sub, fname), f"{section}.{name}")
        return replace(self, **{section: replace(sub, **{fname: parsed})})


def _format(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse(text, default, where):
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from None
    cfg = RunConfig()
    for section in parser.sections():
        for name, value in parser.items(section):
            cfg = cfg._set(section.lower(), name, value)
    return cfg


def load_config(path, overrides=()):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text).with_overrides(overrides).validate()
