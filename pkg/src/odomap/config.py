"""Pipeline configuration: TOML sections mirroring the per-stage config types.

A config file holds one table per stage::

    [sim]
    laps = 2
    [correlation]
    c_min = 0.3

Omitted keys keep their defaults. Overrides use dotted names such as
``correlation.l_nh=12`` and are parsed as TOML values.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .evaluation import AlignmentConfig
from .loop_closure import CorrelationConfig
from .mapping import TAU_TURN
from .optimizer import LmConfig
from .pose_graph import EPS_COV
from .segmentation import SegmentationConfig
from .sim import OdometryNoiseModel, SimConfig


class ConfigError(ValueError):
    """Unknown key, wrong type, or a value rejected by validation."""


@dataclass(frozen=True)
class GraphConfig:
    gamma1: float = 1.0  # loop-closure position covariance scale
    gamma2: float = 1.0  # loop-closure heading covariance scale
    eps_cov: float = EPS_COV

    def __post_init__(self):
        for k in ("gamma1", "gamma2", "eps_cov"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be > 0")


@dataclass(frozen=True)
class MapConfig:
    tau_turn: float = TAU_TURN  # rad

    def __post_init__(self):
        if not 0 < self.tau_turn < math.pi:
            raise ValueError("tau_turn must lie in (0, pi)")


@dataclass(frozen=True)
class PipelineConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    noise: OdometryNoiseModel = field(default_factory=OdometryNoiseModel)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    mapping: MapConfig = field(default_factory=MapConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)

    def replace(self, **sections) -> "PipelineConfig":
        """Copy with whole sections or dotted ``section.key`` values replaced."""
        return apply_overrides(self, sections)

    def to_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in dataclasses.fields(self)}


SECTIONS = tuple(f.name for f in dataclasses.fields(PipelineConfig))


def _coerce(section: str, key: str, value, ftype):
    where = f"{section}.{key}"
    if "None" in str(ftype) and (value is None or (isinstance(value, str) and value.lower() == "none")):
        return None
    if "int" in str(ftype) and "float" not in str(ftype):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if "float" in str(ftype):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    return value


def _section_fields(section: str) -> dict:
    cls = type(getattr(PipelineConfig(), section))
    return {f.name: f.type for f in dataclasses.fields(cls)}


def apply_overrides(cfg: PipelineConfig, values: dict) -> PipelineConfig:
    """Apply ``{"section.key": value}`` or ``{"section": {key: value}}`` updates."""
    nested: dict[str, dict] = {}
    for name, value in values.items():
        if "." in name:
            section, key = name.split(".", 1)
            nested.setdefault(section, {})[key] = value
        elif isinstance(value, dict):
            nested.setdefault(name, {}).update(value)
        else:
            raise ConfigError(f"{name!r}: top-level keys must be tables; use section.key")
    updates = {}
    for section, kv in nested.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]; expected one of {', '.join(SECTIONS)}")
        ftypes = _section_fields(section)
        clean = {}
        for key, value in kv.items():
            if key not in ftypes:
                raise ConfigError(f"unknown key {section}.{key}; expected one of {', '.join(ftypes)}")
            clean[key] = _coerce(section, key, value, ftypes[key])
        try:
            updates[section] = dataclasses.replace(getattr(cfg, section), **clean)
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    return dataclasses.replace(cfg, **updates)


def parse_value(text: str):
    """Parse a command-line value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the TOML file at ``path`` (if any), then ``overrides``."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = apply_overrides(cfg, data)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    """TOML text that :func:`load_config` reads back to ``cfg``."""
    lines = []
    for section, kv in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for k, v in kv.items():
            if v is None:
                v = '"none"'
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
