"""One scenario = network + attack + detector + controller settings.

A scenario file is a flat ``key = value`` file whose keys are the field
names of :class:`NetworkConfig`, :class:`AttackSpec`, :class:`DetectorParams`
and :class:`ControllerParams`, plus ``controller = on|off``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .attack import AttackSpec
from .config import (
    ConfigError,
    NetworkConfig,
    build_dataclass,
    dataclass_to_kv,
    field_names,
    read_kv_file,
    validate_config,
)
from .detection import MODES, DetectorParams
from .metrics import ScenarioResult, scenario_result
from .simulation import run_simulation
from .trace import TraceLog
from .twin import ControllerParams, DigitalTwinController

EXTRA_KEYS = ("controller",)


@dataclass
class Scenario:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    attack: AttackSpec = field(default_factory=AttackSpec)
    detector: DetectorParams = field(default_factory=DetectorParams)
    control: ControllerParams = field(default_factory=ControllerParams)
    controller: bool = True

    def replace(self, **changes) -> "Scenario":
        """Return a copy with flat field overrides routed to the right record."""
        parts = {"network": {}, "attack": {}, "detector": {}, "control": {}}
        top = {}
        owners = {
            "network": NetworkConfig,
            "attack": AttackSpec,
            "detector": DetectorParams,
            "control": ControllerParams,
        }
        for key, val in changes.items():
            if key == "controller":
                top["controller"] = val
                continue
            for part, cls in owners.items():
                if key in {f.name for f in dataclasses.fields(cls)}:
                    parts[part][key] = val
                    break
            else:
                raise ConfigError(f"unknown scenario key {key!r}")
        return Scenario(
            network=dataclasses.replace(self.network, **parts["network"]),
            attack=dataclasses.replace(self.attack, **parts["attack"]),
            detector=dataclasses.replace(self.detector, **parts["detector"]),
            control=dataclasses.replace(self.control, **parts["control"]),
            controller=top.get("controller", self.controller),
        )

    def validate(self):
        problems = list(validate_config(self.network, self.detector.weights))
        problems += self.attack.violations()
        if self.detector.score_mode not in MODES:
            problems.append(f"score_mode must be one of {MODES}")
        if not 0.0 <= self.detector.theta_doc <= 1.0:
            problems.append("theta_doc must lie in [0, 1]")
        if self.control.controller_interval <= 0:
            problems.append("controller_interval must be > 0")
        if self.control.sync_latency < 0:
            problems.append("sync_latency must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_kv(self) -> str:
        return dataclass_to_kv(self.network, self.attack, self.detector, self.control) + (
            f"controller = {'on' if self.controller else 'off'}\n"
        )


def known_keys() -> set[str]:
    return set(field_names(NetworkConfig, AttackSpec, DetectorParams, ControllerParams)) | set(EXTRA_KEYS)


def scenario_from_kv(raw: dict[str, str], source: str = "<config>") -> Scenario:
    unknown = sorted(set(raw) - known_keys())
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    sc = Scenario(
        network=build_dataclass(NetworkConfig, raw),
        attack=build_dataclass(AttackSpec, raw),
        detector=build_dataclass(DetectorParams, raw),
        control=build_dataclass(ControllerParams, raw),
    )
    if "controller" in raw:
        sc.controller = parse_on_off(raw["controller"], "controller")
    return sc


def parse_on_off(value: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"{key} must be on or off (got {value!r})")


def load_scenario(path) -> Scenario:
    return scenario_from_kv(read_kv_file(path), str(path)).validate()


def make_controller(sc: Scenario) -> DigitalTwinController | None:
    if not sc.controller:
        return None
    return DigitalTwinController(sc.network, sc.detector, sc.control)


def simulate(sc: Scenario) -> TraceLog:
    sc.validate()
    attack = sc.attack if sc.attack.fraction > 0 else None
    return run_simulation(sc.network, attack, make_controller(sc))


def run(sc: Scenario) -> tuple[TraceLog, ScenarioResult]:
    trace = simulate(sc)
    return trace, scenario_result(trace, tier=sc.attack.attack_tier, seed=sc.network.rng_seed,
                                  controller="on" if sc.controller else "off")
