"""Flat ``key = value`` run configuration with dotted keys.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys, unparsable
values and out-of-range values raise :class:`ConfigError` naming the key and
the line number.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable

from .enhance import ADJUST_MODES, EnhanceConfig
from .hog import HogConfig
from .metrics import LossWeights
from .ops import BilateralParams
from .priors import PriorConfig, PriorModel, TrainConfig
from .unfold import PROX_L, PROX_N, PROX_R, UnfoldConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ratio(s: str):
    if s.strip() == "from-reference":
        return None
    return float(s)


def _choice(options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


@dataclass(frozen=True)
class Field:
    default: Any
    parse: Callable[[str], Any]
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""


_pos = (lambda v: v > 0, "must be > 0")
_nonneg = (lambda v: v >= 0, "must be >= 0")
_atleast1 = (lambda v: v >= 1, "must be >= 1")
_unit = (lambda v: 0 <= v < 1, "must lie in [0, 1)")


def _f(default, parse, rule=None):
    if rule is None:
        return Field(default, parse)
    return Field(default, parse, rule[0], rule[1])


FIELDS: dict[str, Field] = {
    "unfold.stages": _f(3, int, _nonneg),
    "unfold.mu0": _f(1.0, float, _pos),
    "unfold.mu_growth": _f(1.5, float, _atleast1),
    "unfold.step_safety": _f(0.9, float, (lambda v: 0 < v <= 1, "must lie in (0, 1]")),
    "unfold.prox_L": _f("identity", _choice(PROX_L)),
    "unfold.prox_R": _f("box_clamp", _choice(PROX_R)),
    "unfold.prox_N": _f("identity", _choice(PROX_N)),
    "unfold.split_heads": _f(False, _bool),
    "unfold.record_history": _f(False, _bool),
    "unfold.bilateral.sigma_spatial": _f(3.0, float, _pos),
    "unfold.bilateral.sigma_range": _f(0.1, float, _pos),
    "unfold.bilateral.radius": _f(6, int, _atleast1),
    "enhance.ratio": _f(None, _ratio, (lambda v: v is None or v > 0, "must be > 0 or from-reference")),
    "enhance.adjust_mode": _f("linear_ratio", _choice(ADJUST_MODES)),
    "enhance.sigma_spatial": _f(2.0, float, _pos),
    "enhance.sigma_range": _f(0.1, float, _pos),
    "enhance.radius": _f(4, int, _atleast1),
    "enhance.noise_gain": _f(1.0, float, _nonneg),
    "enhance.noise_ref": _f(0.05, float, _pos),
    "enhance.dark_threshold": _f(0.3, float, _nonneg),
    "hog.cell_size": _f(8, int, _atleast1),
    "hog.bins": _f(9, int, (lambda v: v >= 2, "must be >= 2")),
    "hog.block_size": _f(2, int, _atleast1),
    "hog.block_stride": _f(1, int, _atleast1),
    "hog.norm_epsilon": _f(1e-6, float, _nonneg),
    "prior.patch_size": _f(16, int, _atleast1),
    "prior.mask_ratio": _f(0.75, float, _unit),
    "prior.mask_region": _f(8, int, _atleast1),
    "prior.hidden": _f(32, int, _atleast1),
    "train.epochs": _f(100, int, _nonneg),
    "train.batch": _f(16, int, _atleast1),
    "train.lr": _f(1e-4, float, _pos),
    "train.beta1": _f(0.9, float, _unit),
    "train.beta2": _f(0.99, float, _unit),
    "train.seed": _f(0, int, _nonneg),
    "train.lr_halving_interval": _f(0, int, _nonneg),
    "loss.w_rs": _f(0.009, float, _nonneg),
    "loss.w_mc": _f(0.15, float, _nonneg),
    "loss.w_is": _f(0.2, float, _nonneg),
    "loss.smooth_eps": _f(0.01, float, _pos),
    "loss.mutual_c": _f(10.0, float, _nonneg),
    "run.input": _f("", str),
    "run.output": _f("", str),
}


def _format(value) -> str:
    if value is None:
        return "from-reference"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Fully resolved configuration; every key always has a value."""

    def __init__(self, values: dict[str, Any] | None = None):
        self.values = {k: f.default for k, f in FIELDS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def __getitem__(self, key: str):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def __repr__(self):
        return f"RunConfig({self.values!r})"

    def set(self, key: str, value, line: int | None = None) -> None:
        if key not in FIELDS:
            raise ConfigError("unknown key", key, line)
        f = FIELDS[key]
        if isinstance(value, str) and f.parse is not str:
            try:
                value = f.parse(value)
            except ValueError as exc:
                raise ConfigError(f"cannot parse value: {exc}", key, line) from None
        if not f.check(value):
            raise ConfigError(f"value {_format(value)} out of range ({f.rule})", key, line)
        self.values[key] = value

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.values.items())

    # typed views ---------------------------------------------------------

    def unfold_config(self, prior: PriorModel | None = None) -> UnfoldConfig:
        v = self.values
        prox = v["unfold.prox_L"]
        if prior is not None:
            prox = "learned"
        return UnfoldConfig(
            stages=v["unfold.stages"],
            mu0=v["unfold.mu0"],
            mu_growth=v["unfold.mu_growth"],
            step_safety=v["unfold.step_safety"],
            prox_L=prox,
            bilateral=BilateralParams(
                v["unfold.bilateral.sigma_spatial"], v["unfold.bilateral.sigma_range"], v["unfold.bilateral.radius"]
            ),
            prior=prior,
            split_heads=v["unfold.split_heads"],
            prox_R=v["unfold.prox_R"],
            prox_N=v["unfold.prox_N"],
            record_history=v["unfold.record_history"],
        )

    def enhance_config(self) -> EnhanceConfig:
        v = self.values
        return EnhanceConfig(
            ratio=v["enhance.ratio"],
            adjust_mode=v["enhance.adjust_mode"],
            restore=BilateralParams(v["enhance.sigma_spatial"], v["enhance.sigma_range"], v["enhance.radius"]),
            noise_gain=v["enhance.noise_gain"],
            noise_ref=v["enhance.noise_ref"],
            dark_threshold=v["enhance.dark_threshold"],
        )

    def hog_config(self) -> HogConfig:
        v = self.values
        return HogConfig(v["hog.cell_size"], v["hog.bins"], v["hog.block_size"], v["hog.block_stride"],
                         v["hog.norm_epsilon"])

    def prior_config(self) -> PriorConfig:
        v = self.values
        return PriorConfig(v["prior.patch_size"], v["prior.mask_ratio"], v["prior.mask_region"], v["prior.hidden"],
                           v["unfold.split_heads"])

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(v["train.epochs"], v["train.batch"], v["train.lr"], v["train.beta1"], v["train.beta2"],
                           v["train.seed"], v["train.lr_halving_interval"])

    def bilateral_params(self) -> BilateralParams:
        return self.unfold_config().bilateral

    def loss_weights(self) -> LossWeights:
        v = self.values
        return LossWeights(v["loss.w_rs"], v["loss.w_mc"], v["loss.w_is"], v["loss.smooth_eps"], v["loss.mutual_c"])


def parse_text(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg if cfg is not None else RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", None, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        cfg.set(key, value, lineno)
    return cfg


def parse_config(path: str | os.PathLike | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read a config file (if any) and apply ``overrides`` on top."""
    cfg = RunConfig()
    if path is not None:
        with open(path, encoding="utf-8") as f:
            parse_text(f.read(), cfg)
    for key, value in (overrides or {}).items():
        cfg.set(key, value if isinstance(value, str) else _format(value))
    return cfg
