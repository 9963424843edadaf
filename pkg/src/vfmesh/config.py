"""Run configuration: declarative key=value files with flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    pass


ANTIALIAS_MODES = ("off", "pinch", "full")
CONFLICT_POLICIES = ("connect", "separate", "majority")


@dataclass
class RunConfig:
    """Everything a pipeline run needs; flags win over file values."""

    geometry: str = ""
    format: str | None = None
    cell_size: float = 1.0
    rotation: float = 0.0            # radians, 2D grids
    offset: tuple[float, float] = (0.0, 0.0)
    padding: int = 0
    samples: int | None = None       # per-axis sample count (even); None = default
    threshold: float = 0.5
    min_cells: int = 1
    conflict_policy: str = "separate"
    antialias: str = "pinch"         # off | pinch | full
    report_boundary: bool = False
    port: int = 8765

    def validate(self) -> None:
        if self.cell_size <= 0:
            raise ConfigError("cell_size must be positive")
        if self.samples is not None and (self.samples < 2 or self.samples % 2):
            raise ConfigError("samples must be even and >= 2")
        if self.threshold < 0:
            raise ConfigError("threshold must be non-negative")
        if self.antialias not in ANTIALIAS_MODES:
            raise ConfigError(f"antialias must be one of {ANTIALIAS_MODES}")
        if self.conflict_policy not in CONFLICT_POLICIES:
            raise ConfigError(f"conflict_policy must be one of {CONFLICT_POLICIES}")
        if self.min_cells < 0:
            raise ConfigError("min_cells must be non-negative")


_PARSERS = {
    "geometry": str,
    "format": str,
    "cell_size": float,
    "rotation": float,
    "padding": int,
    "samples": int,
    "threshold": float,
    "min_cells": int,
    "conflict_policy": str,
    "antialias": str,
    "report_boundary": lambda v: v.lower() in ("1", "true", "yes", "on"),
    "port": int,
}


def load_config(path) -> RunConfig:
    cfg = RunConfig()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "offset":
                parts = value.split(",")
                if len(parts) != 2:
                    raise ConfigError(f"{path}:{lineno}: offset needs 'x,y'")
                cfg.offset = (float(parts[0]), float(parts[1]))
            elif key in _PARSERS:
                try:
                    setattr(cfg, key, _PARSERS[key](value))
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return cfg


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """Copy CLI-provided values (non-None) over the config."""
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    return cfg
