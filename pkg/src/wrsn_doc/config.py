"""Network configuration, shared value types and the flat key-value config format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, NamedTuple


class ConfigError(ValueError):
    """Raised when a configuration file or record cannot be accepted."""


class Point(NamedTuple):
    x: float
    y: float


def distance(a, b) -> float:
    """Euclidean distance between two points (anything indexable as ``(x, y)``)."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class Weights:
    """Fusion weights for the four maliciousness sub-scores."""

    w_C: float = 0.25
    w_E: float = 0.25
    w_R: float = 0.25
    w_eta: float = 0.25

    def as_array(self):
        import numpy as np

        return np.array([self.w_C, self.w_E, self.w_R, self.w_eta], dtype=float)

    def violations(self) -> list[str]:
        out = []
        vals = (self.w_C, self.w_E, self.w_R, self.w_eta)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            out.append("weights must be finite and non-negative")
        if abs(math.fsum(vals) - 1.0) > 1e-12:
            out.append(f"weights must sum to 1 (got {math.fsum(vals)!r})")
        return out


@dataclass(frozen=True)
class NetworkConfig:
    """Physical parameters of the simulated WRSN.

    Distances in meters, energies in joules, times in seconds.
    ``circumradius`` defaults to the square's diagonal when left as ``None``.
    """

    area_side: float = 200.0
    node_count: int = 100
    comm_range: float = 50.0
    sense_range: float = 25.0
    node_capacity: float = 0.5
    energy_threshold_fraction: float = 0.3
    node_consumption_rate: float = 1e-4
    mcv_count: int = 10
    mcv_capacity: float = 10_000.0
    mcv_min_energy_fraction: float = 0.1
    charging_rate: float = 0.05
    mcv_speed: float = 5.0
    travel_cost: float = 5.0
    circumradius: float | None = None
    time_step: float = 1.0
    horizon: float = 10_000.0
    rng_seed: int = 0
    mcv_roaming: bool = False
    roam_pause: float = 0.0

    @property
    def energy_threshold(self) -> float:
        return self.energy_threshold_fraction * self.node_capacity

    @property
    def mcv_min_energy(self) -> float:
        return self.mcv_min_energy_fraction * self.mcv_capacity

    @property
    def circle(self) -> float:
        if self.circumradius is None:
            return self.area_side * math.sqrt(2.0)
        return self.circumradius

    @property
    def depot(self) -> Point:
        return Point(self.area_side / 2.0, self.area_side / 2.0)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.time_step))

    @property
    def baseline_request_rate(self) -> float:
        """Requests per second of an honest node in steady charge/drain cycles."""
        refill = (1.0 - self.energy_threshold_fraction) * self.node_capacity
        return self.node_consumption_rate / refill

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        # truthy when the config is admissible
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


_POSITIVE = (
    "area_side",
    "comm_range",
    "sense_range",
    "node_capacity",
    "node_consumption_rate",
    "mcv_capacity",
    "charging_rate",
    "mcv_speed",
    "travel_cost",
    "time_step",
)
_FRACTIONS = ("energy_threshold_fraction", "mcv_min_energy_fraction")


def validate_config(config: NetworkConfig, weights: Weights | None = None) -> ValidationReport:
    """List every violated invariant; an empty report means the config is admissible."""
    report = ValidationReport()
    v = report.violations
    for name in _POSITIVE:
        val = getattr(config, name)
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            v.append(f"{name} must be finite and > 0 (got {val!r})")
    for name in _FRACTIONS:
        val = getattr(config, name)
        if not (isinstance(val, (int, float)) and 0.0 < val < 1.0):
            v.append(f"{name} must lie in (0, 1) (got {val!r})")
    if not (isinstance(config.node_count, int) and 1 <= config.node_count <= 100_000):
        v.append(f"node_count must be an integer in [1, 100000] (got {config.node_count!r})")
    if not (isinstance(config.mcv_count, int) and 1 <= config.mcv_count):
        v.append(f"mcv_count must be an integer >= 1 (got {config.mcv_count!r})")
    elif isinstance(config.node_count, int) and config.mcv_count > config.node_count:
        v.append("mcv_count must not exceed node_count")
    if config.comm_range <= config.sense_range:
        v.append("comm_range must exceed sense_range")
    cc = config.circle
    if not (math.isfinite(cc) and cc > 0):
        v.append(f"circumradius must be finite and > 0 (got {cc!r})")
    elif cc > config.area_side * math.sqrt(2.0) * (1 + 1e-12):
        v.append("circumradius must not exceed area_side * sqrt(2)")
    if not (math.isfinite(config.horizon) and config.horizon >= 0):
        v.append(f"horizon must be finite and >= 0 (got {config.horizon!r})")
    if not (math.isfinite(config.roam_pause) and config.roam_pause >= 0):
        v.append("roam_pause must be >= 0")
    if not isinstance(config.rng_seed, int) or not (0 <= config.rng_seed < 2**64):
        v.append("rng_seed must be a 64-bit unsigned integer")
    if weights is not None:
        v.extend(weights.violations())
    return report


# --- flat key = value files -------------------------------------------------


def parse_kv_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv_file(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return parse_kv_text(text, str(path))


def coerce(value: str, annotation: Any, key: str) -> Any:
    """Convert a raw string to the type named by a dataclass annotation."""
    ann = str(annotation)
    try:
        if value.lower() in ("none", "") and "None" in ann:
            return None
        if ann.startswith("bool"):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if ann.startswith("int"):
            return int(value)
        if ann.startswith("float"):
            return float(value)
        if ann.startswith("tuple"):
            return tuple(float(p) for p in value.split(","))
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def build_dataclass(cls, raw: dict[str, str], *, consumed: set[str] | None = None):
    """Instantiate ``cls`` from the subset of ``raw`` matching its field names."""
    kwargs = {}
    for f in fields(cls):
        if f.name in raw:
            kwargs[f.name] = coerce(raw[f.name], f.type, f.name)
            if consumed is not None:
                consumed.add(f.name)
    return cls(**kwargs)


def dataclass_to_kv(*records) -> str:
    lines = []
    for rec in records:
        for f in fields(rec):
            val = getattr(rec, f.name)
            if isinstance(val, tuple):
                val = ",".join(repr(x) for x in val)
            lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def field_names(*classes) -> Iterable[str]:
    for cls in classes:
        for f in fields(cls):
            yield f.name
