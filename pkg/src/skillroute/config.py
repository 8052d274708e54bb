"""Engine configuration: defaults, range checks and the flat ``key = value`` file format."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .predictor import SCHEMES
from .selector import MODES

PREDICTOR_SOURCES = ("trained", "similarity", "observed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    delta: float = 0.5
    dim: int = 256
    kappa: float = 0.0
    rho: float = 0.5
    tau: float = 0.5
    k: int = 3
    nmf_iterations: int = 200
    lr: float = 0.1
    epochs: int = 500
    l2: float = 1e-3
    seed: int = 42
    scheme: str = "concat"
    predictor: str = "similarity"
    budget: float | None = None
    latency_budget: float | None = None
    mode: str = "single_budget"
    weights: tuple[float, float, float] = (1.0, 0.0, 0.0)
    use_imputed: bool = False
    theta: float = 0.7

    def __post_init__(self):
        problems = list(self._problems())
        if problems:
            raise ConfigError("; ".join(problems))

    def _problems(self):
        if not 0.0 < self.delta <= 2.0:
            yield f"delta must lie in (0, 2], got {self.delta}"
        if self.dim < 1:
            yield f"dim must be positive, got {self.dim}"
        for name in ("kappa", "rho", "tau", "theta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                yield f"{name} must lie in [0, 1], got {v}"
        if self.k < 1:
            yield f"k must be >= 1, got {self.k}"
        for name in ("nmf_iterations", "epochs"):
            if getattr(self, name) < 1:
                yield f"{name} must be >= 1, got {getattr(self, name)}"
        if not (self.lr > 0 and math.isfinite(self.lr)):
            yield f"lr must be positive, got {self.lr}"
        if not self.l2 >= 0:
            yield f"l2 must be >= 0, got {self.l2}"
        if self.scheme not in SCHEMES:
            yield f"scheme must be one of {SCHEMES}, got {self.scheme!r}"
        if self.predictor not in PREDICTOR_SOURCES:
            yield f"predictor must be one of {PREDICTOR_SOURCES}, got {self.predictor!r}"
        if self.mode not in MODES:
            yield f"mode must be one of {MODES}, got {self.mode!r}"
        for name in ("budget", "latency_budget"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                yield f"{name} must be >= 0, got {v}"
        w = self.weights
        if len(w) != 3 or any(x < 0 for x in w) or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
            yield f"weights must be 3 non-negative numbers summing to 1, got {w}"

    def with_overrides(self, overrides: Mapping[str, Any]) -> "EngineConfig":
        clean = {k: coerce(k, v) for k, v in overrides.items() if v is not None}
        return replace(self, **clean)


FIELD_TYPES = {f.name: f.type for f in fields(EngineConfig)}


def coerce(name: str, value: Any) -> Any:
    """Convert a raw (string) value to the type of config field ``name``."""
    if name not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    kind = FIELD_TYPES[name]
    if not isinstance(value, str):
        if name == "weights":
            return tuple(float(x) for x in value)
        return value
    text = value.strip()
    try:
        if name == "weights":
            parts = [p for p in text.replace(",", " ").split() if p]
            return tuple(float(p) for p in parts)
        if name == "use_imputed":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "float" in kind:
            if text.lower() in ("", "none"):
                return None
            return float(text)
        if kind == "int":
            return int(text)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {name}") from None
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys map to underscores."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = coerce(key, value)
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> EngineConfig:
    """Defaults, then the config file, then explicit overrides (CLI flags)."""
    merged: dict[str, Any] = {}
    if path is not None:
        merged.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = coerce(k, v)
    return EngineConfig(**merged)
