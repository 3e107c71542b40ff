"""Denial-of-charging attackers: selection, labels and behavioral perturbations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError

log = logging.getLogger(__name__)

TIER_BANDS = {
    "LAI": (0.05, 0.10),
    "MAI": (0.20, 0.30),
    "HAI": (0.40, 0.50),
}

# flood factor range, charging efficiency, energy-anomaly factor
TIER_DEFAULTS = {
    "LAI": ((2.0, 3.0), 0.7, 0.5),
    "MAI": ((3.0, 5.0), 0.5, 0.3),
    "HAI": ((5.0, 8.0), 0.3, 0.1),
}

TIER_FRACTION = {"LAI": 0.075, "MAI": 0.25, "HAI": 0.45}


@dataclass(frozen=True)
class AttackProfile:
    node_id: int
    request_flood_factor: float = 1.0
    energy_anomaly_factor: float = 1.0
    disruption_efficiency: float = 1.0
    active_from: float = 0.0

    def __post_init__(self):
        if not all(
            math.isfinite(v)
            for v in (self.request_flood_factor, self.energy_anomaly_factor, self.disruption_efficiency)
        ):
            raise ValueError("attack factors must be finite")
        if self.request_flood_factor < 1:
            raise ValueError("request_flood_factor must be >= 1")
        if self.energy_anomaly_factor < 0:
            raise ValueError("energy_anomaly_factor must be >= 0")
        if not 0 < self.disruption_efficiency <= 1:
            raise ValueError("disruption_efficiency must lie in (0, 1]")

    @property
    def neutral(self) -> bool:
        return (
            self.request_flood_factor == 1.0
            and self.energy_anomaly_factor == 1.0
            and self.disruption_efficiency == 1.0
        )

    def active(self, clock: float) -> bool:
        return clock >= self.active_from


@dataclass(frozen=True)
class AttackSpec:
    """How many nodes turn malicious and how they misbehave.

    ``attack_fraction`` of ``None`` takes the tier's default fraction.
    Factor ranges are closed intervals sampled uniformly per node.
    """

    attack_tier: str = "none"
    attack_fraction: float | None = None
    flood_range: tuple[float, float] | None = None
    efficiency_range: tuple[float, float] | None = None
    energy_factor_range: tuple[float, float] | None = None
    attack_active_from: float = 0.0
    attack_seed: int | None = None

    @property
    def fraction(self) -> float:
        if self.attack_fraction is not None:
            return self.attack_fraction
        return TIER_FRACTION.get(self.attack_tier, 0.0)

    def ranges(self):
        flood, eff, energy = TIER_DEFAULTS.get(self.attack_tier, ((1.0, 1.0), 1.0, 1.0))
        return (
            self.flood_range or flood,
            self.efficiency_range or (eff, eff),
            self.energy_factor_range or (energy, energy),
        )

    def violations(self) -> list[str]:
        out = []
        if self.attack_tier not in (*TIER_BANDS, "custom", "none"):
            out.append(f"unknown attack tier {self.attack_tier!r}")
        f = self.fraction
        if not 0.0 <= f < 1.0:
            out.append("attack fraction must lie in [0, 1)")
        band = TIER_BANDS.get(self.attack_tier)
        if band and not band[0] - 1e-12 <= f <= band[1] + 1e-12:
            out.append(f"{self.attack_tier} requires a fraction in [{band[0]}, {band[1]}]")
        flood, eff, energy = self.ranges()
        if flood[0] < 1 or flood[1] < flood[0]:
            out.append("flood_range must be an interval within [1, inf)")
        if not 0 < eff[0] <= eff[1] <= 1:
            out.append("efficiency_range must be an interval within (0, 1]")
        if energy[0] < 0 or energy[1] < energy[0]:
            out.append("energy_factor_range must be a non-negative interval")
        return out

    def validate(self):
        bad = self.violations()
        if bad:
            raise ConfigError("; ".join(bad))


def assign_malicious_nodes(n_nodes: int, spec: AttackSpec, rng=None):
    """Pick ``floor(fraction * n)`` distinct nodes and draw their attack profiles.

    Returns ``(profiles, ground_truth, warnings)`` where ``profiles`` maps node
    id to :class:`AttackProfile`.
    """
    spec.validate()
    if rng is None:
        rng = np.random.default_rng(spec.attack_seed)
    k = int(math.floor(spec.fraction * n_nodes + 1e-9))
    warnings = []
    if k < 1:
        if spec.fraction > 0:
            warnings.append(f"attack fraction {spec.fraction} of {n_nodes} nodes rounds to zero attackers")
            log.warning(warnings[-1])
        return {}, frozenset(), warnings
    chosen = np.sort(rng.choice(n_nodes, size=k, replace=False))
    flood, eff, energy = spec.ranges()
    profiles = {}
    for node in chosen:
        profiles[int(node)] = AttackProfile(
            node_id=int(node),
            request_flood_factor=float(rng.uniform(*flood)),
            energy_anomaly_factor=float(rng.uniform(*energy)),
            disruption_efficiency=float(rng.uniform(*eff)),
            active_from=spec.attack_active_from,
        )
    return profiles, frozenset(profiles), warnings


def flood_rate(profile: AttackProfile, baseline_rate: float) -> float:
    """Fake requests per second; zero for a neutral flood factor (sampler bypassed)."""
    if profile.request_flood_factor == 1.0:
        return 0.0
    return profile.request_flood_factor * baseline_rate


def apply_request_flood(profile: AttackProfile, clock: float, rng, *, dt: float, baseline_rate: float,
                        forged_residual: float) -> list:
    """Forged charging requests a malicious node emits during one step."""
    from .simulation import ChargingRequest

    if not profile.active(clock):
        return []
    rate = flood_rate(profile, baseline_rate)
    if rate <= 0:
        return []
    n = int(rng.poisson(rate * dt))
    return [ChargingRequest(profile.node_id, clock, forged_residual, forged=True) for _ in range(n)]


def apply_energy_anomaly(profile: AttackProfile | None, consumption_rate: float, dt: float,
                         clock: float = math.inf) -> float:
    if profile is None or not profile.active(clock):
        return consumption_rate * dt
    return profile.energy_anomaly_factor * consumption_rate * dt


def apply_charging_disruption(profile: AttackProfile | None, sent: float, clock: float = math.inf) -> float:
    if sent < 0:
        raise ValueError("sent energy must be non-negative")
    if profile is None or not profile.active(clock):
        return sent
    return profile.disruption_efficiency * sent
