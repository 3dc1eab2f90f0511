"""Plain-text ``key = value`` run configuration.

One knob per line, ``#`` starts a comment, blank lines are ignored.  Keys
are the field names of :class:`TrainConfig` and :class:`SyntheticSpec` plus
the scoring and ablation keys below; ``seed`` drives both data and training.
Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticSpec
from .scoring import CRITERIA
from .training import TrainConfig

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}
ABLATE_GRIDS = ("standard", "product")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    criterion: str = "recdiv"
    smoothing_sigma: float = 0.0
    ablate_grid: str = "standard"
    ablate_views: tuple[str, ...] = ("patch", "intra", "inter", "intra+inter")
    ablate_entropy: tuple[bool, ...] = (True, False)
    ablate_banks: tuple[str, ...] = ("mean", "coreset")
    ablate_criteria: tuple[str, ...] = CRITERIA

    @property
    def seed(self) -> int:
        return self.train.seed

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(
            self,
            train=dataclasses.replace(self.train, seed=seed),
            data=dataclasses.replace(self.data, seed=seed),
        )

    def to_text(self) -> str:
        lines = []
        for obj in (self.train, self.data):
            for f in dataclasses.fields(obj):
                if f.name != "seed" or obj is self.train:
                    lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        for name in _RUN_KEYS:
            lines.append(f"{name} = {_format(getattr(self, name))}")
        return "\n".join(lines) + "\n"


_RUN_KEYS = ("criterion", "smoothing_sigma", "ablate_grid", "ablate_views", "ablate_entropy", "ablate_banks", "ablate_criteria")


def _format(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_like(default, text: str):
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(_parse_like(default[0], t) for t in items)
    return text


def _field_names(obj) -> set[str]:
    return {f.name for f in dataclasses.fields(obj)}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    base = RunConfig()
    train_kw: dict = {}
    data_kw: dict = {}
    run_kw: dict = {}
    train_keys, data_keys = _field_names(base.train), _field_names(base.data)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in train_keys:
            target, default = train_kw, getattr(base.train, key)
        elif key in data_keys:
            target, default = data_kw, getattr(base.data, key)
        elif key in _RUN_KEYS:
            target, default = run_kw, getattr(base, key)
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in target or (key == "seed" and "seed" in data_kw):
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            target[key] = _parse_like(default, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    if "seed" in train_kw:
        data_kw["seed"] = train_kw["seed"]
    try:
        cfg = RunConfig(TrainConfig(**train_kw), SyntheticSpec(**data_kw), **run_kw)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.criterion not in CRITERIA:
        raise ConfigError(f"criterion must be one of {CRITERIA}, got {cfg.criterion!r}")
    if cfg.ablate_grid not in ABLATE_GRIDS:
        raise ConfigError(f"ablate_grid must be one of {ABLATE_GRIDS}")
    if cfg.smoothing_sigma < 0:
        raise ConfigError("smoothing_sigma must be nonnegative")


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
