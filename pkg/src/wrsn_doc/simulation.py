"""Fixed-step simulation of the physical rechargeable sensor network.

Node state lives in numpy arrays on :class:`SimulationState`; mobile chargers
(MCVs) are a short list of :class:`Mcv` records. One call to
:func:`advance_step` performs, in order: node drain, request emission, queue
update, MCV dispatch/motion/charging, and node deaths.
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackProfile, AttackSpec, assign_malicious_nodes, flood_rate
from .config import ConfigError, NetworkConfig, Point, distance, validate_config
from .trace import TraceLog

FULL_TOL = 1e-12


class Mode(str, enum.Enum):
    IDLE = "Idle"
    ROAMING = "Roaming"
    DISPATCHED = "Dispatched"
    CHARGING = "Charging"
    RETURNING = "Returning"


@dataclass
class Mcv:
    id: int
    x: float
    y: float
    residual: float
    capacity: float
    mode: Mode = Mode.IDLE
    target: int | None = None
    odometer: float = 0.0
    energy_sent_total: float = 0.0
    travel_energy_total: float = 0.0
    waypoint: tuple[float, float] | None = None
    pause_until: float = 0.0
    session_acked: float = 0.0
    session_need: float = 0.0

    @property
    def position(self) -> Point:
        return Point(self.x, self.y)


@dataclass(frozen=True)
class SensorNode:
    id: int
    position: Point
    residual: float
    capacity: float
    consumption_rate: float
    alive: bool = True
    pending_request: bool = False
    attack: AttackProfile | None = None


@dataclass(frozen=True)
class ChargingRequest:
    node_id: int
    issued_at: float
    residual_at_issue: float
    forged: bool = False


@dataclass
class QueueUpdate:
    """Controller decision: service order plus currently excluded nodes."""

    order: list[int]
    excluded: dict[int, str] = field(default_factory=dict)
    issued_at: float = 0.0
    keys: list[tuple[float, float]] = field(default_factory=list)  # (reported residual, issued at) per entry

    def to_record(self) -> dict:
        return {
            "type": "queue_update",
            "t": self.issued_at,
            "order": list(self.order),
            "keys": [list(k) for k in self.keys],
            "excluded": sorted(self.excluded),
        }


@dataclass
class SimulationState:
    config: NetworkConfig
    positions: np.ndarray
    residual: np.ndarray
    alive: np.ndarray
    pending: np.ndarray
    forged: np.ndarray
    reported: np.ndarray
    drained_total: np.ndarray
    received_total: np.ndarray
    acked_total: np.ndarray
    sent_total: np.ndarray
    request_total: np.ndarray
    mcvs: list[Mcv]
    queue: list[ChargingRequest] = field(default_factory=list)
    excluded: set[int] = field(default_factory=set)
    step_count: int = 0
    depot_energy_drawn: float = 0.0
    flood_rng: np.random.Generator | None = None
    roam_rng: np.random.Generator | None = None
    # attacker ground truth; physical-plane only
    _profiles: dict[int, AttackProfile] = field(default_factory=dict, repr=False)
    _drain_factor: np.ndarray | None = field(default=None, repr=False)
    _efficiency: np.ndarray | None = field(default=None, repr=False)
    _flood_rate: np.ndarray | None = field(default=None, repr=False)
    _active_from: np.ndarray | None = field(default=None, repr=False)

    @property
    def clock(self) -> float:
        return self.step_count * self.config.time_step

    @property
    def n_nodes(self) -> int:
        return len(self.residual)

    @property
    def nodes(self) -> list[SensorNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    def node(self, i: int) -> SensorNode:
        cfg = self.config
        return SensorNode(
            id=i,
            position=Point(*self.positions[i]),
            residual=float(self.residual[i]),
            capacity=cfg.node_capacity,
            consumption_rate=cfg.node_consumption_rate,
            alive=bool(self.alive[i]),
            pending_request=bool(self.pending[i]),
            attack=self._profiles.get(i),
        )

    def queued_nodes(self) -> list[int]:
        return [r.node_id for r in self.queue]

    def busy_targets(self) -> set[int]:
        return {m.target for m in self.mcvs if m.mode in (Mode.DISPATCHED, Mode.CHARGING)}

    def forged_level(self) -> float:
        return self.config.energy_threshold * (1.0 - 1e-3)


# --- placement and construction ---------------------------------------------------


def mcv_initial_position(j: int, m: int, circumradius: float) -> Point:
    """Offset of MCV ``j`` (1-based) from the depot on a circle of diameter ``circumradius``."""
    if not (isinstance(j, (int, np.integer)) and 1 <= j <= m):
        raise ValueError(f"MCV index {j} outside 1..{m}")
    if circumradius <= 0:
        raise ValueError("circumradius must be positive")
    ang = math.pi * (2 * j - 1) / m
    return Point(circumradius / 2 * math.cos(ang), circumradius / 2 * math.sin(ang))


def _streams(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def initialize_network(config: NetworkConfig) -> SimulationState:
    report = validate_config(config)
    if not report:
        raise ConfigError("; ".join(report.violations))
    deploy_rng, _attack_rng, flood_rng, roam_rng = _streams(config.rng_seed)
    n = config.node_count
    positions = deploy_rng.uniform(0.0, config.area_side, size=(n, 2))
    depot = config.depot
    mcvs = []
    for j in range(1, config.mcv_count + 1):
        off = mcv_initial_position(j, config.mcv_count, config.circle)
        x = min(max(depot.x + off.x, 0.0), config.area_side)
        y = min(max(depot.y + off.y, 0.0), config.area_side)
        mcvs.append(Mcv(id=j - 1, x=x, y=y, residual=config.mcv_capacity, capacity=config.mcv_capacity))
    full = np.full(n, config.node_capacity)
    return SimulationState(
        config=config,
        positions=positions,
        residual=full.copy(),
        alive=np.ones(n, dtype=bool),
        pending=np.zeros(n, dtype=bool),
        forged=np.zeros(n, dtype=bool),
        reported=full.copy(),
        drained_total=np.zeros(n),
        received_total=np.zeros(n),
        acked_total=np.zeros(n),
        sent_total=np.zeros(n),
        request_total=np.zeros(n, dtype=np.int64),
        mcvs=mcvs,
        flood_rng=flood_rng,
        roam_rng=roam_rng,
        _drain_factor=np.ones(n),
        _efficiency=np.ones(n),
        _flood_rate=np.zeros(n),
        _active_from=np.zeros(n),
    )


def install_attack(state: SimulationState, spec: AttackSpec | None):
    """Assign attackers per ``spec``; returns ``(state, ground_truth, warnings)``."""
    if spec is None or spec.fraction == 0:
        return state, frozenset(), []
    seed = spec.attack_seed
    rng = _streams(state.config.rng_seed)[1] if seed is None else np.random.default_rng(seed)
    profiles, truth, warnings = assign_malicious_nodes(state.n_nodes, spec, rng)
    set_profiles(state, profiles)
    return state, truth, warnings


def set_profiles(state: SimulationState, profiles: dict[int, AttackProfile]):
    base = state.config.baseline_request_rate
    state._profiles = dict(profiles)
    for i, p in profiles.items():
        state._drain_factor[i] = p.energy_anomaly_factor
        state._efficiency[i] = p.disruption_efficiency
        state._flood_rate[i] = flood_rate(p, base)
        state._active_from[i] = p.active_from


# --- MCV primitives ----------------------------------------------------------------


def mcv_move(mcv: Mcv, destination, dt: float, config: NetworkConfig) -> Mcv:
    """Straight-line motion of at most ``speed * dt`` toward ``destination``."""
    out = copy.copy(mcv)
    d = distance(mcv.position, destination)
    step = min(config.mcv_speed * dt, d)
    if step <= 0:
        return out
    if step >= d:
        out.x, out.y = float(destination[0]), float(destination[1])
    else:
        f = step / d
        out.x = mcv.x + (destination[0] - mcv.x) * f
        out.y = mcv.y + (destination[1] - mcv.y) * f
    cost = step * config.travel_cost
    out.odometer += step
    out.residual -= cost
    out.travel_energy_total += cost
    return out


def charge_transfer(mcv: Mcv, node: SensorNode, dt: float, config: NetworkConfig, max_send: float | None = None,
                    clock: float = math.inf):
    """One step of energy transfer; returns ``(mcv, node, sent, received)``.

    Honest nodes are sent only what they can absorb, so ``sent == received``.
    An active attacker absorbs at most ``efficiency * sent`` (capped by its
    headroom); the MCV cannot tell and keeps sending at full rate.
    """
    if not node.alive:
        return copy.copy(mcv), node, 0.0, 0.0
    honest = node.attack is None or not node.attack.active(clock)
    eff = 1.0 if honest else node.attack.disruption_efficiency
    headroom = max(node.capacity - node.residual, 0.0)
    budget = mcv.residual if max_send is None else min(mcv.residual, max_send)
    sent = max(min(config.charging_rate * dt, budget), 0.0)
    if honest:
        sent = min(sent, headroom)
    received = min(sent * eff, headroom)
    if headroom - received <= FULL_TOL:
        received = headroom
    out = copy.copy(mcv)
    out.residual -= sent
    out.energy_sent_total += sent
    return out, _replace_node(node, residual=node.residual + received), sent, received


def _replace_node(node: SensorNode, **kw) -> SensorNode:
    import dataclasses

    return dataclasses.replace(node, **kw)


def return_cost(mcv: Mcv, config: NetworkConfig, frm=None) -> float:
    return distance(frm if frm is not None else mcv.position, config.depot) * config.travel_cost


def assign_requests(state: SimulationState, order=None) -> list[tuple[int, int]]:
    """Greedy nearest-feasible assignment of queued requests to free MCVs.

    Walks the queue (or ``order``) and hands each unserved request to the
    nearest Idle/Roaming MCV that can afford travel, the expected charge and
    the trip back to the depot plus the reserve. A nearest MCV that cannot
    afford it is sent to refill. Returns ``(mcv_id, node_id)`` pairs; the MCVs
    are switched to Dispatched.
    """
    cfg = state.config
    free = [m for m in state.mcvs if m.mode in (Mode.IDLE, Mode.ROAMING)]
    if not free:
        return []
    busy = state.busy_targets()
    depot = cfg.depot
    if order is None:
        order = state.queued_nodes()
    out = []
    for node in order:
        if not free:
            break
        if node in busy or node in state.excluded or not state.alive[node] or not state.pending[node]:
            continue
        pos = state.positions[node]
        need_charge = max(cfg.node_capacity - state.reported[node], 0.0)
        back = distance(pos, depot) * cfg.travel_cost
        for m in sorted(free, key=lambda m: (distance(m.position, pos), m.id)):
            need = distance(m.position, pos) * cfg.travel_cost + need_charge + back + cfg.mcv_min_energy
            if m.residual >= need:
                m.mode, m.target, m.waypoint = Mode.DISPATCHED, node, None
                free.remove(m)
                busy.add(node)
                out.append((m.id, node))
                break
            m.mode, m.target, m.waypoint = Mode.RETURNING, None, None
            free.remove(m)
    return out


def apply_queue_update(state: SimulationState, update: QueueUpdate) -> list[dict]:
    """Reorder the queue, install exclusions and abort sessions at excluded nodes."""
    events = []
    by_node = {r.node_id: r for r in state.queue}
    head = [by_node[n] for n in update.order if n in by_node]
    seen = {r.node_id for r in head}
    state.queue = head + [r for r in state.queue if r.node_id not in seen]
    state.excluded = set(update.excluded)
    for m, node in revoke_flagged(update, state.mcvs):
        events.append({"type": "revoke", "t": state.clock, "mcv": m.id, "node": node})
    return events


def revoke_flagged(update: QueueUpdate, mcvs: list[Mcv]) -> list[tuple[Mcv, int]]:
    """Abort every MCV heading to or charging an excluded node; returns the aborted pairs."""
    aborted = []
    for m in mcvs:
        if m.target is not None and m.target in update.excluded:
            aborted.append((m, m.target))
            m.mode, m.target = Mode.IDLE, None
    return aborted


# --- stepping ------------------------------------------------------------------------


def advance_step(state: SimulationState, update: QueueUpdate | None = None):
    """Advance ``state`` in place by one time step; returns ``(state, events)``."""
    cfg = state.config
    dt = cfg.time_step
    t0 = state.clock
    t1 = (state.step_count + 1) * dt
    events: list[dict] = []

    # (1) drain
    active = state._active_from <= t0
    factor = np.where(active, state._drain_factor, 1.0)
    drain = np.where(state.alive, np.minimum(cfg.node_consumption_rate * factor * dt, state.residual), 0.0)
    state.residual -= drain
    state.drained_total += drain

    # (2) requests
    e_th = cfg.energy_threshold
    honest_req = state.alive & ~state.pending & (state.residual < e_th)
    counts = honest_req.astype(np.int64)
    fake_counts = np.zeros_like(counts)
    flooders = np.flatnonzero((state._flood_rate > 0) & active & state.alive)
    if flooders.size:
        fake_counts[flooders] = state.flood_rng.poisson(state._flood_rate[flooders] * dt)
    counts += fake_counts
    state.request_total += counts
    new_requests = []
    forged_level = state.forged_level()
    for i in np.flatnonzero(counts):
        i = int(i)
        if honest_req[i]:
            events.append({"type": "request", "t": t1, "node": i, "residual": float(state.residual[i]),
                           "forged": False})
            new_requests.append(ChargingRequest(i, t1, float(state.residual[i])))
            state.pending[i] = True
        for _ in range(int(fake_counts[i])):
            events.append({"type": "request", "t": t1, "node": i, "residual": forged_level, "forged": True})
            if not state.pending[i]:
                new_requests.append(ChargingRequest(i, t1, forged_level, forged=True))
                state.pending[i] = True
                state.forged[i] = True

    # (3) queue
    if update is not None:
        events.extend(apply_queue_update(state, update))
    queued = set(state.queued_nodes())
    state.queue.extend(r for r in new_requests if r.node_id not in queued)
    state.reported = np.where(state.forged, forged_level, state.residual)

    # (4) chargers
    for mid, node in assign_requests(state):
        events.append({"type": "dispatch", "t": t1, "mcv": mid, "node": node})
    for k, m in enumerate(state.mcvs):
        state.mcvs[k] = _act(state, m, dt, t1, events)

    # (5) deaths
    dying = state.alive & (state.residual <= 0.0)
    for i in np.flatnonzero(dying):
        i = int(i)
        state.alive[i] = False
        state.residual[i] = 0.0
        _close_request(state, i)
        for m in state.mcvs:
            if m.target == i:
                m.mode, m.target = Mode.IDLE, None
        events.append({"type": "death", "t": t1, "node": i})
    state.reported = np.where(state.forged, forged_level, state.residual)
    state.step_count += 1
    return state, events


def _reports_full(state: SimulationState, node: SensorNode, m: Mcv) -> bool:
    """Honest nodes report full when they are; disruptors once the acknowledged energy covers their claim."""
    if node.attack is None or not node.attack.active(state.clock):
        return node.residual >= node.capacity
    return m.session_acked >= m.session_need - FULL_TOL


def _close_request(state: SimulationState, node: int):
    state.pending[node] = False
    state.forged[node] = False
    state.queue = [r for r in state.queue if r.node_id != node]


def _act(state: SimulationState, m: Mcv, dt: float, t1: float, events: list) -> Mcv:
    cfg = state.config
    depot = cfg.depot
    if m.mode is Mode.DISPATCHED:
        node = m.target
        if not state.alive[node]:
            m.mode, m.target = Mode.IDLE, None
            return m
        dest = state.positions[node]
        m = mcv_move(m, dest, dt, cfg)
        if m.x == dest[0] and m.y == dest[1]:
            m.mode = Mode.CHARGING
            m.session_acked = 0.0
            m.session_need = max(cfg.node_capacity - float(state.reported[node]), 0.0)
            events.append({"type": "arrive", "t": t1, "mcv": m.id, "node": node})
        return m
    if m.mode is Mode.CHARGING:
        node = m.target
        rec = state.node(node)
        max_send = m.residual - return_cost(m, cfg)
        m, rec, sent, received = charge_transfer(m, rec, dt, cfg, max_send=max(max_send, 0.0), clock=state.clock)
        acked = received
        if rec.attack is not None and rec.attack.active(state.clock):
            acked = sent * rec.attack.disruption_efficiency
        if sent > 0:
            state.residual[node] = rec.residual
            state.received_total[node] += received
            state.acked_total[node] += acked
            state.sent_total[node] += sent
            m.session_acked += acked
            events.append({"type": "charge", "t": t1, "mcv": m.id, "node": node, "sent": sent,
                           "received": received})
        if _reports_full(state, rec, m):
            _close_request(state, node)
            events.append({"type": "served", "t": t1, "mcv": m.id, "node": node})
            m.mode, m.target = Mode.IDLE, None
        elif sent <= 0:
            # out of budget mid-session; the request stays queued
            m.mode, m.target = Mode.RETURNING, None
        return m
    if m.mode is Mode.RETURNING:
        m = mcv_move(m, depot, dt, cfg)
        if m.x == depot.x and m.y == depot.y:
            drawn = m.capacity - m.residual
            state.depot_energy_drawn += drawn
            m.residual = m.capacity
            m.mode = Mode.IDLE
            events.append({"type": "refill", "t": t1, "mcv": m.id, "drawn": drawn})
        return m
    # Idle / Roaming
    if m.residual <= cfg.mcv_min_energy + return_cost(m, cfg) + cfg.mcv_speed * dt * cfg.travel_cost:
        m.mode, m.waypoint = Mode.RETURNING, None
        return _act(state, m, dt, t1, events)
    if not cfg.mcv_roaming:
        return m
    if m.waypoint is None:
        if t1 <= m.pause_until:
            return m
        m.waypoint = tuple(state.roam_rng.uniform(0.0, cfg.area_side, size=2))
        m.mode = Mode.ROAMING
    m = mcv_move(m, m.waypoint, dt, cfg)
    if (m.x, m.y) == m.waypoint:
        m.waypoint = None
        m.pause_until = t1 + cfg.roam_pause
    return m


def step_summary(state: SimulationState) -> dict:
    return {
        "type": "step",
        "t": state.clock,
        "alive": int(state.alive.sum()),
        "queue": len(state.queue),
        "mcvs": [[m.x, m.y, m.residual, m.odometer] for m in state.mcvs],
    }


def run_simulation(config: NetworkConfig, attack_spec: AttackSpec | None = None, controller=None,
                   state: SimulationState | None = None) -> TraceLog:
    """Run from time zero to the horizon and return the full trace.

    ``controller`` needs an ``interval`` attribute and a ``tick(state)``
    method returning ``(QueueUpdate, records)``.
    """
    if state is None:
        state = initialize_network(config)
        state, truth, warnings = install_attack(state, attack_spec)
    else:
        truth, warnings = frozenset(state._profiles), []
    header = {
        "config": _plain(config.__dict__),
        "attack": None if attack_spec is None else _plain(attack_spec.__dict__),
        "controller": None if controller is None else controller.describe(),
        "ground_truth": sorted(truth),
        "initial_mcv_energy": [m.residual for m in state.mcvs],
        "initial_node_energy": float(state.residual.sum()),
    }
    trace = TraceLog(header)
    for w in warnings:
        trace.append({"type": "warning", "t": 0.0, "message": w})
    trace.append(step_summary(state))
    every = None
    if controller is not None:
        every = max(int(round(controller.interval / config.time_step)), 1)
    update = None
    for _ in range(config.n_steps):
        state, events = advance_step(state, update)
        update = None
        trace.extend(events)
        if controller is not None and controller.wants_every_step:
            controller.on_step(state)
        if every is not None and state.step_count % every == 0:
            update, records = controller.tick(state)
            trace.extend(records)
        trace.append(step_summary(state))
    trace.final_state = state
    return trace


def _plain(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out
