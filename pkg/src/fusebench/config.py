"""Flat `key = value` run configuration with a closed schema.

Lines hold one dotted key each, `#` starts a comment, later duplicates
override earlier ones, and every key not in the schema is rejected with
its line number.  Defaults reproduce the shipped best-pipeline profile:
MLP head, GeLU, dropout 0.6, sum fusion, BCE, 300 epochs, learning rate
0.001, full batch.  ``loss.kind`` installs per-family gamma/clip
defaults (bce 0/0/0, focal 3/3/0, asl 1/4/0.05) which explicit
``loss.gamma_pos`` / ``loss.gamma_neg`` / ``loss.clip`` lines override
regardless of line order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .fusion import STRATEGIES
from .heads import ACTIVATIONS, HEAD_KINDS
from .losses import LossSpec
from .metrics import AVERAGINGS

__all__ = ["ConfigError", "Config", "parse_config", "serialize_config", "default_config"]

LOSS_KINDS = ("bce", "focal", "asl")
LOSS_DEFAULTS = {
    "bce": (0.0, 0.0, 0.0),
    "focal": (3.0, 3.0, 0.0),
    "asl": (1.0, 4.0, 0.05),
}


class ConfigError(ValueError):
    """Unknown key, bad value, or out-of-range value in a config file."""


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok.strip()) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {text!r}") from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _choice(options):
    def parse(text: str):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text

    return parse


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(f"expected an integer >= 1, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError(f"expected an integer >= 0, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise ValueError(f"expected a value > 0, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if v < 0:
        raise ValueError(f"expected a value >= 0, got {text}")
    return v


def _unit_interval_open(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise ValueError(f"expected a value in [0, 1), got {text}")
    return v


def _unit_interval_closed(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"expected a value in [0, 1], got {text}")
    return v


def _layers(text: str) -> tuple[int, ...]:
    dims = _parse_int_tuple(text)
    if len(dims) < 2:
        raise ValueError("head.layers needs at least input and output widths")
    if any(d < 1 for d in dims):
        raise ValueError(f"layer widths must be >= 1, got {dims}")
    return dims


# key -> (parser, default); None defaults mean "unset" and are omitted on
# serialization.
SCHEMA: dict[str, tuple] = {
    "data.features_img": (str, None),
    "data.features_txt": (str, None),
    "data.labels": (str, None),
    "data.num_classes": (_positive_int, 18),
    "data.n_train": (_positive_int, 25000),
    "head.kind": (_choice(HEAD_KINDS), "mlp"),
    "head.layers": (_layers, (768, 2048, 512, 18)),
    "head.activation": (_choice(ACTIVATIONS), "gelu"),
    "head.dropout": (_unit_interval_open, 0.6),
    "loss.kind": (_choice(LOSS_KINDS), "bce"),
    "loss.gamma_pos": (_nonneg_float, None),
    "loss.gamma_neg": (_nonneg_float, None),
    "loss.clip": (_unit_interval_open, None),
    "fusion.strategy": (_choice(STRATEGIES), "sum"),
    "optim.lr": (_positive_float, 0.001),
    "optim.ema.enabled": (_parse_bool, False),
    "optim.ema.alpha": (_unit_interval_open, 0.9),
    "train.epochs": (_positive_int, 300),
    "train.batch_size": (_positive_int, 30000),
    "train.seed": (_nonneg_int, 42),
    "eval.threshold": (_unit_interval_closed, 0.5),
    "eval.averaging": (_choice(AVERAGINGS), "samples"),
}


@dataclass(frozen=True)
class Config:
    """Validated key-value map over the documented schema."""

    values: tuple[tuple[str, object], ...]

    def __getitem__(self, key: str):
        for k, v in self.values:
            if k == key:
                return v
        raise KeyError(key)

    def get(self, key: str, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    def with_overrides(self, overrides: dict) -> "Config":
        """New Config with some keys replaced (values already parsed or raw text)."""
        as_dict = dict(self.values)
        for key, value in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            parser = SCHEMA[key][0]
            as_dict[key] = parser(value) if isinstance(value, str) else value
        return _resolve(as_dict)

    def loss_spec(self) -> LossSpec:
        return LossSpec(self["loss.gamma_pos"], self["loss.gamma_neg"], self["loss.clip"])


def _resolve(raw: dict) -> Config:
    """Fill defaults and apply loss-kind defaults under explicit overrides."""
    values = {}
    for key, (_, default) in SCHEMA.items():
        values[key] = raw.get(key, default)
    kind = values["loss.kind"]
    kind_pos, kind_neg, kind_clip = LOSS_DEFAULTS[kind]
    if values["loss.gamma_pos"] is None:
        values["loss.gamma_pos"] = raw.get("loss.gamma_pos", kind_pos)
    if values["loss.gamma_neg"] is None:
        values["loss.gamma_neg"] = raw.get("loss.gamma_neg", kind_neg)
    if values["loss.clip"] is None:
        values["loss.clip"] = raw.get("loss.clip", kind_clip)
    return Config(tuple(sorted(values.items())))


def parse_config(text: str) -> Config:
    raw: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = (part.strip() for part in stripped.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            raw[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return _resolve(raw)


def serialize_config(cfg: Config) -> str:
    lines = []
    for key, value in cfg.values:
        if value is None:
            continue
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def default_config() -> Config:
    return parse_config("")
