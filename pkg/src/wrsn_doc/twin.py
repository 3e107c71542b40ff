"""Digital-twin replica and the detection/queue-control loop.

The twin only ever sees what the physical plane reports: node positions,
beaconed residual energy, request messages (with the residual the node
claims), liveness, and per-node charge-session totals from the chargers.
Attack profiles stay on the physical side.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .config import NetworkConfig, Weights
from .detection import DetectorParams, EstimatorBank, ReputationChain, combined_score
from .simulation import QueueUpdate, SimulationState, assign_requests, revoke_flagged

__all__ = [
    "ControllerParams",
    "DigitalTwinController",
    "Snapshot",
    "TwinState",
    "controller_tick",
    "dispatch_mcvs",
    "revoke_flagged",
    "snapshot_of",
    "sync_twin",
]


@dataclass
class ControllerParams:
    controller_interval: float = 50.0
    sync_latency: float = 0.0
    sticky_ban_after: int = 0
    controller_seed: int = 0


@dataclass(frozen=True)
class Snapshot:
    """Observables reported by the physical plane at one instant."""

    clock: float
    alive: np.ndarray
    reported: np.ndarray
    request_total: np.ndarray
    drained_total: np.ndarray
    received_total: np.ndarray
    sent_total: np.ndarray
    pending: tuple  # (node, issued_at, claimed residual) per queued request


def snapshot_of(state: SimulationState) -> Snapshot:
    return Snapshot(
        clock=state.clock,
        alive=state.alive.copy(),
        reported=state.reported.copy(),
        request_total=state.request_total.copy(),
        drained_total=state.drained_total.copy(),
        received_total=state.acked_total.copy(),
        sent_total=state.sent_total.copy(),
        pending=tuple((r.node_id, r.issued_at, r.residual_at_issue) for r in state.queue),
    )


@dataclass
class TwinState:
    positions: np.ndarray
    estimators: EstimatorBank
    adjacency: sparse.csr_matrix
    clock: float = -1.0
    alive: np.ndarray | None = None
    reported: np.ndarray | None = None
    pending: dict = field(default_factory=dict)
    last: Snapshot | None = None
    window: dict | None = None
    scores: np.ndarray | None = None
    combined: np.ndarray | None = None
    flagged: np.ndarray | None = None
    consecutive: np.ndarray | None = None
    banned: set = field(default_factory=set)
    chain: ReputationChain | None = None
    sync_latency: float = 0.0
    scored_nodes: np.ndarray | None = None

    @classmethod
    def create(cls, positions, network: NetworkConfig, params: DetectorParams, interval: float,
               sync_latency: float = 0.0, seed: int = 0) -> "TwinState":
        positions = np.asarray(positions, dtype=float)
        n = len(positions)
        params = params.resolved(network, interval)
        tree = cKDTree(positions)
        adj = tree.sparse_distance_matrix(tree, network.comm_range, output_type="coo_matrix")
        adj = sparse.csr_matrix((np.ones_like(adj.data), (adj.row, adj.col)), shape=(n, n))
        adj.setdiag(0)
        adj.eliminate_zeros()
        chain = ReputationChain(n, blend=params.chain_blend, seed=seed) if params.reputation_chain else None
        return cls(
            positions=positions,
            estimators=EstimatorBank(n, params),
            adjacency=adj,
            alive=np.ones(n, dtype=bool),
            reported=np.full(n, network.node_capacity),
            scores=np.zeros((n, 4)),
            combined=np.zeros(n),
            flagged=np.zeros(n, dtype=bool),
            consecutive=np.zeros(n, dtype=int),
            chain=chain,
            sync_latency=sync_latency,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    def has_neighbor(self) -> np.ndarray:
        return (self.adjacency @ self.alive.astype(float)) > 0


def sync_twin(physical, twin: TwinState) -> TwinState:
    """Mirror the latest observables and stage the new observation window.

    ``physical`` is a :class:`SimulationState` or a :class:`Snapshot`.
    Syncing the same instant twice leaves the twin unchanged.
    """
    snap = physical if isinstance(physical, Snapshot) else snapshot_of(physical)
    if snap.clock <= twin.clock:
        return twin
    prev = twin.last
    if prev is None:
        zeros = np.zeros(len(snap.alive))
        prev_req, prev_drain, prev_recv, prev_sent = zeros, zeros, zeros, zeros
    else:
        prev_req, prev_drain = prev.request_total, prev.drained_total
        prev_recv, prev_sent = prev.received_total, prev.sent_total
    twin.window = {
        "counts": snap.request_total - prev_req,
        "energy": snap.drained_total - prev_drain,
        "received": snap.received_total - prev_recv,
        "sent": snap.sent_total - prev_sent,
        "alive": snap.alive.copy(),
    }
    twin.alive = snap.alive.copy()
    twin.reported = snap.reported.copy()
    twin.pending = {}
    for node, issued, claimed in snap.pending:
        twin.pending[node] = (issued, claimed)
    twin.last = snap
    twin.clock = snap.clock
    return twin


def controller_tick(twin: TwinState, weights: Weights | None = None, theta: float | None = None,
                    sticky_after: int = 0) -> QueueUpdate:
    """Score the staged window, flag nodes and build the next queue order.

    Pending requesters that are not flagged are ordered by ascending reported
    residual, then issue time, then node id.
    """
    params = twin.estimators.params
    weights = weights or params.weights
    theta = params.theta_doc if theta is None else theta
    if twin.window is not None:
        nodes = np.flatnonzero(twin.window["alive"])
        w = twin.window
        sub = twin.estimators.observe(
            nodes, w["counts"][nodes], w["energy"][nodes], w["sent"][nodes], w["received"][nodes],
            twin.has_neighbor()[nodes], twin.chain,
        )
        m = combined_score(sub, weights) if nodes.size else np.zeros(0)
        twin.scores[nodes] = sub
        twin.combined[nodes] = m
        flags = np.zeros(twin.n_nodes, dtype=bool)
        flags[nodes] = m > theta
        twin.consecutive = np.where(flags, twin.consecutive + 1, 0)
        if sticky_after > 0:
            twin.banned.update(int(i) for i in np.flatnonzero(twin.consecutive >= sticky_after))
        twin.flagged = flags
        twin.scored_nodes = nodes
        twin.window = None
    excluded = {int(i): f"score {twin.combined[i]:.4f} > {theta}" for i in np.flatnonzero(twin.flagged)}
    for i in twin.banned:
        excluded.setdefault(i, "banned after consecutive flags")
    waiting = [(float(twin.reported[n]), issued, n) for n, (issued, _) in twin.pending.items()
               if n not in excluded and twin.alive[n]]
    waiting.sort()
    return QueueUpdate(order=[n for _, _, n in waiting], excluded=excluded, issued_at=twin.clock,
                       keys=[(r, t) for r, t, _ in waiting])


def dispatch_mcvs(update: QueueUpdate, state: SimulationState) -> list[tuple[int, int]]:
    """Greedy nearest-feasible assignment following ``update``'s order."""
    state.excluded = set(update.excluded)
    revoke_flagged(update, state.mcvs)
    return assign_requests(state, order=update.order)


class DigitalTwinController:
    """Runs sync + scoring + queue update every ``interval`` simulated seconds."""

    def __init__(self, network: NetworkConfig, detector: DetectorParams | None = None,
                 params: ControllerParams | None = None, positions=None):
        self.network = network
        self.detector = detector or DetectorParams()
        self.params = params or ControllerParams()
        self.interval = self.params.controller_interval
        self.twin: TwinState | None = None
        self._positions = positions
        self._history: deque = deque()

    @property
    def wants_every_step(self) -> bool:
        return self.params.sync_latency > 0

    def describe(self) -> dict:
        return {"detector": asdict(self.detector), "controller": asdict(self.params)}

    def _ensure(self, state: SimulationState):
        if self.twin is None:
            self.twin = TwinState.create(
                state.positions, self.network, self.detector, self.interval,
                sync_latency=self.params.sync_latency, seed=self.params.controller_seed,
            )

    def on_step(self, state: SimulationState):
        self._history.append(snapshot_of(state))
        horizon = state.clock - self.params.sync_latency
        while len(self._history) > 1 and self._history[1].clock <= horizon:
            self._history.popleft()

    def tick(self, state: SimulationState):
        self._ensure(state)
        if self.params.sync_latency > 0:
            target = state.clock - self.params.sync_latency
            snaps = [s for s in self._history if s.clock <= target]
            if snaps:
                sync_twin(snaps[-1], self.twin)
        else:
            sync_twin(state, self.twin)
        update = controller_tick(self.twin, sticky_after=self.params.sticky_ban_after)
        update.issued_at = state.clock
        return update, self.records(update)

    def records(self, update: QueueUpdate) -> list[dict]:
        twin = self.twin
        out = []
        t = update.issued_at
        nodes = twin.scored_nodes if twin.scored_nodes is not None else []
        for i in nodes:
            s = twin.scores[i]
            out.append({
                "type": "score", "t": t, "node": int(i),
                "m_C": float(s[0]), "m_E": float(s[1]), "m_R": float(s[2]), "m_eta": float(s[3]),
                "m": float(twin.combined[i]), "flag": bool(twin.flagged[i]),
            })
        twin.scored_nodes = None
        out.append(update.to_record())
        return out
