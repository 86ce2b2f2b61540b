"""Experiment configuration stored as an INI file.

Sections mirror the owning modules: ``[descriptor]``, ``[hdp]``, ``[teacher]``,
``[paths]`` and ``[run]``.  Missing keys keep their defaults, unknown keys are
rejected, and :func:`format_config` writes every key so that parsing its
output reproduces the configuration exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .descriptors import DescriptorConfig, DescriptorError
from .localhdp import HdpHyperparams, ModelError
from .protocol import ProtocolError, TeacherConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    dataset: str = ""
    checkpoint: str = ""
    arguments: str = ""
    report_dir: str = ""


@dataclass
class RunConfig:
    seed: int = 0
    epochs: int = 1
    spin_only: bool = False
    oracle_labels: bool = False
    # labels covering less than this fraction of an object's keypoints are ignored by ABL
    min_fraction: float = 0.1
    max_subset: int = 2

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if not 0.0 <= self.min_fraction < 1.0:
            raise ConfigError("min_fraction must lie in [0, 1)")
        if self.max_subset < 1:
            raise ConfigError("max_subset must be positive")


# section name -> (attribute on ExperimentConfig, dataclass)
SECTIONS = {
    "descriptor": ("descriptor", DescriptorConfig),
    "hdp": ("hdp", HdpHyperparams),
    "teacher": ("teacher", TeacherConfig),
    "paths": ("paths", PathsConfig),
    "run": ("run", RunConfig),
}
# spin_only lives in [run]; the descriptor copy is derived from it
_SKIP = {("descriptor", "spin_only"), ("teacher", "seed")}


@dataclass
class ExperimentConfig:
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    hdp: HdpHyperparams = field(default_factory=HdpHyperparams)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def descriptor_config(self) -> DescriptorConfig:
        return dataclasses.replace(self.descriptor, spin_only=self.run.spin_only)

    def teacher_config(self) -> TeacherConfig:
        return dataclasses.replace(self.teacher, seed=self.run.seed)

    def with_run(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            return low == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or default is None:
            # fields defaulting to None are optional reals
            return None if text.lower() == "none" else float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {text!r} ({exc})") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {', '.join(sorted(unknown))}")
    parts = {}
    for section, (attr, cls) in SECTIONS.items():
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)} - {k for s, k in _SKIP if s == section}
        kwargs = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in names:
                    raise ConfigError(f"{source}: unknown key {section}.{key}")
                kwargs[key] = _parse_value(raw, getattr(defaults, key), f"{source}: {section}.{key}")
        try:
            parts[attr] = cls(**kwargs)
        except (DescriptorError, ModelError, ProtocolError, ConfigError) as exc:
            raise ConfigError(f"{source}: [{section}] {exc}") from None
    return ExperimentConfig(**parts)


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for section, (attr, cls) in SECTIONS.items():
        obj = getattr(config, attr)
        lines.append(f"[{section}]")
        for f in dataclasses.fields(cls):
            if (section, f.name) in _SKIP:
                continue
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(format_config(config))


def synthetic_config(seed: int = 0) -> ExperimentConfig:
    """Configuration used for the synthetic experiments and the acceptance suite."""
    from .synthetic import synthetic_settings

    descriptor, hdp = synthetic_settings()
    return ExperimentConfig(descriptor=descriptor, hdp=hdp, run=RunConfig(seed=seed))


def occlusion_config(seed: int = 0) -> ExperimentConfig:
    """Configuration of the synthetic occlusion study (spin-only words throughout)."""
    from .synthetic import occlusion_settings

    descriptor, hdp, min_fraction = occlusion_settings()
    return ExperimentConfig(descriptor=dataclasses.replace(descriptor, spin_only=False), hdp=hdp,
                            run=RunConfig(seed=seed, spin_only=True, min_fraction=min_fraction))


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, spin_only: Optional[bool] = None,
                    oracle_labels: Optional[bool] = None) -> ExperimentConfig:
    changes = {k: v for k, v in (("seed", seed), ("spin_only", spin_only), ("oracle_labels", oracle_labels))
               if v is not None}
    return config.with_run(**changes) if changes else config
