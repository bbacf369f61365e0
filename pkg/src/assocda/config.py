"""Flat ``key = value`` experiment configs with dotted keys.

Sections: ``data.*`` (DomainPairSpec), ``model.*`` (ModelConfig),
``train.*`` (TrainConfig), ``assoc.*`` (AssocConfig), ``mmd.*`` (MmdConfig).
Top-level keys: ``seed``, ``outdir``, ``regime`` (comma-separated list).
Per-section seeds are not settable; ``seed`` drives data, init and batches.
"""

import dataclasses
import types
import typing
from dataclasses import dataclass, replace

from .assoc import AssocConfig
from .data import DomainPairSpec
from .harness import REGIMES, TrainConfig
from .mmd import MmdConfig
from .network import MlpSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden_dims: tuple = (64,)
    embedding_dim: int = 64
    activation: str = "relu"


@dataclass(frozen=True)
class ExperimentConfig:
    data: DomainPairSpec = DomainPairSpec()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    regimes: tuple = REGIMES
    seed: int = 0
    outdir: str = "runs/default"

    def pair_spec(self):
        return replace(self.data, seed=self.seed)

    def train_config(self, regime):
        return replace(self.train, regime=regime, seed=self.seed)

    def model_spec(self, input_dim, num_classes):
        return MlpSpec(
            input_dim=input_dim,
            hidden_dims=self.model.hidden_dims,
            embedding_dim=self.model.embedding_dim,
            num_classes=num_classes,
            activation=self.model.activation,
            seed=self.seed,
        )

    def to_dict(self):
        def clean(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: clean(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, tuple):
                return [clean(v) for v in obj]
            return obj

        d = clean(self)
        d["data"] = clean(self.pair_spec())
        return d


SECTIONS = {
    "data": DomainPairSpec,
    "model": ModelConfig,
    "train": TrainConfig,
    "assoc": AssocConfig,
    "mmd": MmdConfig,
}
# nested configs are edited through their own section
_NOT_SETTABLE = {"seed", "regime", "assoc", "mmd"}


def _section_keys(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if f.name not in _NOT_SETTABLE}


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(text, tp, default):
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        if text.lower() in ("none", ""):
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    if tp is bool:
        return _parse_bool(text)
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is str:
        return text
    if tp is tuple:
        items = [s.strip() for s in text.split(",") if s.strip()]
        sample = default[0] if default else 0
        conv = type(sample)
        return tuple(conv(s) for s in items)
    raise ValueError(f"unsupported field type {tp}")


def parse_lines(text, source="<config>"):
    """Split config text into an ordered ``{key: raw_value}`` mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def build_config(entries):
    """Validate raw key/value pairs and assemble an :class:`ExperimentConfig`."""
    per_section = {name: {} for name in SECTIONS}
    top = {}
    for key, value in entries.items():
        if key in ("seed", "outdir", "regime", "regimes"):
            top[key] = value
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"unknown key {key!r}")
        fields = _section_keys(SECTIONS[section])
        if name not in fields:
            raise ConfigError(f"unknown key {key!r}")
        default = getattr(SECTIONS[section](), name)
        try:
            per_section[section][name] = _convert(value, fields[name], default)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    try:
        assoc = AssocConfig(**per_section["assoc"])
        mmd = MmdConfig(**per_section["mmd"])
        train = TrainConfig(assoc=assoc, mmd=mmd, **per_section["train"])
        data = DomainPairSpec(**per_section["data"])
        model = ModelConfig(**per_section["model"])
        MlpSpec(hidden_dims=model.hidden_dims, embedding_dim=model.embedding_dim, activation=model.activation)
        regimes = REGIMES
        raw_regimes = top.get("regime", top.get("regimes"))
        if raw_regimes is not None:
            regimes = tuple(s.strip() for s in raw_regimes.split(",") if s.strip())
            bad = [r for r in regimes if r not in REGIMES]
            if bad or not regimes:
                raise ConfigError(f"unknown regime(s) {bad}; choose from {REGIMES}")
        seed = int(top.get("seed", 0))
        cfg = ExperimentConfig(data, model, train, regimes, seed, top.get("outdir", ExperimentConfig.outdir))
        for r in regimes:
            cfg.train_config(r)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, overrides=()):
    """Read ``path`` and apply ``key=value`` overrides on top."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    entries = parse_lines(text, str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        entries[key] = value
    return build_config(entries)
