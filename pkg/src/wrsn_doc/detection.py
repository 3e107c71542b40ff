"""Maliciousness scoring of charging-request nodes.

Four per-node sub-scores (request pattern, energy consumption, reputation,
charging efficiency) are fused by a weighted sum and thresholded.

Every scorer has two modes:

``tail`` (default)
    one minus the two-sided tail probability of an observation at least as
    extreme as the one seen. Well defined for any density scale.
``literal``
    one minus the probability mass/density of the observation, clamped to
    [0, 1]. Densities above one collapse to a score of zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import stats
from .config import Weights

log = logging.getLogger(__name__)

MODES = ("tail", "literal")
REPUTATION_EPS = 1e-9


class ContractError(ValueError):
    """An operation was called outside its documented domain."""


def _check_mode(mode):
    if mode not in MODES:
        raise ContractError(f"unknown score mode {mode!r}; expected one of {MODES}")


def request_pattern_score(count, lam, mode: str = "tail"):
    """Request-count anomaly score against a Poisson(lam) baseline."""
    _check_mode(mode)
    count = np.asarray(count)
    if np.any(count < 0):
        raise ContractError("request count must be non-negative")
    if np.any(np.asarray(lam) <= 0):
        raise ContractError("request rate estimate must be positive")
    if mode == "literal":
        p = stats.poisson_pmf(count, lam)
    else:
        p = stats.poisson_two_sided_tail(count, lam)
    return _unit(1.0 - p)


def _gaussian_score(observed, mu, var, mode, var_floor):
    _check_mode(mode)
    var = np.asarray(var, dtype=float)
    if np.any(var < var_floor) or np.any(var <= 0):
        raise ContractError(f"variance below floor {var_floor!r}")
    if mode == "literal":
        p = stats.gaussian_pdf(observed, mu, var)
    else:
        p = stats.gaussian_two_sided_tail(observed, mu, var)
    return _unit(1.0 - p)


def energy_score(observed, mu, var, mode: str = "tail", var_floor: float = 0.0):
    """Energy-consumption anomaly score against N(mu, var)."""
    return _gaussian_score(observed, mu, var, mode, var_floor)


def efficiency_score(eta, mu, var, mode: str = "tail", var_floor: float = 0.0):
    """Charging-efficiency anomaly score against N(mu, var)."""
    return _gaussian_score(eta, mu, var, mode, var_floor)


def update_reputation(alpha: float, beta: float, outcome: str) -> tuple[float, float]:
    """Conjugate Beta update from one interaction outcome."""
    if alpha <= 0 or beta <= 0:
        raise ContractError("Beta parameters must be positive")
    if outcome == "consistent":
        return alpha + 1.0, beta
    if outcome == "anomalous":
        return alpha, beta + 1.0
    raise ContractError(f"unknown outcome {outcome!r}")


def reputation_estimate(alpha, beta):
    return np.asarray(alpha, dtype=float) / (np.asarray(alpha) + np.asarray(beta))


def reputation_score(R, alpha, beta, mode: str = "tail"):
    """Score how implausible reputation level ``R`` is under Beta(alpha, beta)."""
    _check_mode(mode)
    if np.any(np.asarray(alpha) <= 0) or np.any(np.asarray(beta) <= 0):
        raise ContractError("Beta parameters must be positive")
    R = np.clip(np.asarray(R, dtype=float), REPUTATION_EPS, 1.0 - REPUTATION_EPS)
    if mode == "literal":
        p = stats.beta_pdf(R, alpha, beta)
    else:
        p = stats.beta_two_sided_tail(R, alpha, beta)
    return _unit(1.0 - p)


def charging_efficiency(received, sent):
    """received / sent, or ``None`` when nothing was sent."""
    if sent <= 0:
        return None
    if received < 0 or received > sent * (1 + 1e-12):
        raise ContractError("received energy must lie in [0, sent]")
    return min(received / sent, 1.0)


def combined_score(components, weights: Weights):
    """Weighted sum of the four sub-scores; ``components`` has a trailing axis of 4."""
    comp = np.asarray(components, dtype=float)
    if comp.shape[-1] != 4:
        raise ContractError("expected four sub-scores")
    if np.any((comp < 0) | (comp > 1)) or not np.all(np.isfinite(comp)):
        raise ContractError("sub-scores must lie in [0, 1]")
    bad = weights.violations()
    if bad:
        raise ContractError("; ".join(bad))
    w = weights.as_array()
    m = comp @ w
    return _unit(m)


def detect(m, theta):
    """1 where the combined score strictly exceeds the threshold."""
    return (np.asarray(m) > theta).astype(int)


def _unit(x):
    out = np.clip(x, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


# --- reputation Markov chain --------------------------------------------------


class ReputationChain:
    """Quantized reputation levels with a row-stochastic transition matrix.

    Used as an optional smoother of the reputation level fed to
    :func:`reputation_score`.
    """

    def __init__(self, n_nodes: int, P=None, levels=None, blend: float = 0.5, seed=0, initial=None):
        if levels is None:
            n = 5 if P is None else len(P)
            levels = (np.arange(n) + 0.5) / n
        self.levels = np.asarray(levels, dtype=float)
        k = len(self.levels)
        if P is None:
            P = default_transition_matrix(k)
        P = np.asarray(P, dtype=float)
        if P.shape != (k, k):
            raise ContractError("transition matrix shape does not match the level count")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ContractError("transition matrix must be row-stochastic")
        if not 0.0 <= blend <= 1.0:
            raise ContractError("blend weight must lie in [0, 1]")
        self.P = P
        self.blend = blend
        self.rng = np.random.default_rng(seed)
        start = k - 1 if initial is None else initial
        self.state = np.full(n_nodes, start, dtype=int)

    def nearest_level(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        return np.abs(value[..., None] - self.levels).argmin(axis=-1)

    def next_state_distribution(self, node: int) -> np.ndarray:
        return self.P[self.state[node]]

    def level(self, nodes=None) -> np.ndarray:
        idx = self.state if nodes is None else self.state[nodes]
        return self.levels[idx]


def default_transition_matrix(k: int, stay: float = 0.8) -> np.ndarray:
    P = np.zeros((k, k))
    for i in range(k):
        nbrs = [j for j in (i - 1, i + 1) if 0 <= j < k]
        P[i, i] = stay
        for j in nbrs:
            P[i, j] = (1.0 - stay) / len(nbrs)
    return P


def reputation_transition(chain: ReputationChain, node: int, observed_level: float) -> ReputationChain:
    """Advance one node's chain state: sample the row, then pull toward the observation."""
    sampled = chain.rng.choice(len(chain.levels), p=chain.P[chain.state[node]])
    target = int(chain.nearest_level(observed_level))
    blended = (1.0 - chain.blend) * sampled + chain.blend * target
    chain.state[node] = int(math.floor(blended + 0.5))
    return chain


def stationary_distribution(P) -> np.ndarray:
    """Left eigenvector of P for eigenvalue one, normalized to sum to one."""
    P = np.asarray(P, dtype=float)
    w, v = np.linalg.eig(P.T)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return vec / vec.sum()


# --- baselines ------------------------------------------------------------------


@dataclass
class DetectorParams:
    """Tunables of the detection engine.

    ``None`` floors and priors are derived from the network configuration by
    :meth:`resolved`.
    """

    w_C: float = 0.25
    w_E: float = 0.25
    w_R: float = 0.25
    w_eta: float = 0.25
    theta_doc: float = 0.4
    score_mode: str = "tail"
    warmup_windows: int = 10
    baseline_windows: int = 10
    event_threshold: float = 0.9
    request_rate_floor: float | None = None
    energy_var_floor: float = 1e-8
    efficiency_var_floor: float = 1e-4
    nominal_energy: float | None = None
    nominal_efficiency: float = 1.0
    reputation_prior_alpha: float = 1.0
    reputation_prior_beta: float = 1.0
    trusted_alpha: float = 9.0
    trusted_beta: float = 1.0
    neighbor_feedback: bool = True
    reputation_chain: bool = False
    chain_blend: float = 0.5

    @property
    def weights(self) -> Weights:
        return Weights(self.w_C, self.w_E, self.w_R, self.w_eta)

    def resolved(self, network, interval: float) -> "DetectorParams":
        import dataclasses

        changes = {}
        if self.request_rate_floor is None:
            changes["request_rate_floor"] = network.baseline_request_rate * interval
        if self.nominal_energy is None:
            changes["nominal_energy"] = network.node_consumption_rate * interval
        return dataclasses.replace(self, **changes)


@dataclass
class EstimatorState:
    """Baseline estimates for one node."""

    lam: float
    energy_mean: float
    energy_var: float
    eff_mean: float
    eff_var: float
    alpha: float = 1.0
    beta: float = 1.0
    window: float = 50.0
    warm: bool = False
    n_windows: int = 0


def estimate_baselines(
    request_counts: Sequence[float],
    energies: Sequence[float],
    efficiencies: Sequence[float] = (),
    *,
    lam_floor: float = 1e-3,
    energy_var_floor: float = 1e-8,
    eff_var_floor: float = 1e-4,
    warmup: int = 10,
    window_len: int | None = None,
    prior_energy: float | None = None,
    prior_efficiency: float = 1.0,
    window: float = 50.0,
) -> EstimatorState:
    """Sample moments over the most recent windows, with floors applied.

    ``window_len`` keeps only the last that many observations (default: all).
    Means fall back to the priors when a series is empty.
    """
    def tail(xs):
        xs = list(xs)
        return xs[-window_len:] if window_len else xs

    counts = np.asarray(tail(request_counts), dtype=float)
    en = np.asarray(tail(energies), dtype=float)
    eff = np.asarray(tail(efficiencies), dtype=float)
    lam = max(counts.mean() if counts.size else 0.0, lam_floor)
    if en.size:
        e_mu, e_var = en.mean(), en.var()
    else:
        e_mu, e_var = (prior_energy if prior_energy is not None else 0.0), 0.0
    if eff.size:
        f_mu, f_var = eff.mean(), eff.var()
    else:
        f_mu, f_var = prior_efficiency, 0.0
    return EstimatorState(
        lam=float(lam),
        energy_mean=float(e_mu),
        energy_var=float(max(e_var, energy_var_floor)),
        eff_mean=float(f_mu),
        eff_var=float(max(f_var, eff_var_floor)),
        window=window,
        warm=len(request_counts) >= warmup,
        n_windows=len(request_counts),
    )


class EstimatorBank:
    """Online per-node baselines for a whole network, held as arrays.

    Each window observation enters a node's rolling baseline only when it is
    consistent with the current baseline (sub-score at or below the per-event
    threshold), so persistent anomalies never become the node's normal.
    Empty baselines fall back to the nominal priors.
    """

    def __init__(self, n_nodes: int, params: DetectorParams):
        W = params.baseline_windows
        self.params = params
        self.n = n_nodes
        self.counts = _Ring(n_nodes, W)
        self.energy = _Ring(n_nodes, W)
        self.eff = _Ring(n_nodes, W)
        self.windows_seen = np.zeros(n_nodes, dtype=int)
        self.alpha = np.full(n_nodes, params.reputation_prior_alpha, dtype=float)
        self.beta = np.full(n_nodes, params.reputation_prior_beta, dtype=float)
        self.last_eta_score = np.zeros(n_nodes)

    def lam(self):
        p = self.params
        return np.maximum(self.counts.mean(default=0.0), p.request_rate_floor)

    def energy_moments(self):
        p = self.params
        return (
            self.energy.mean(default=p.nominal_energy),
            np.maximum(self.energy.var(), p.energy_var_floor),
        )

    def eff_moments(self):
        p = self.params
        return (
            self.eff.mean(default=p.nominal_efficiency),
            np.maximum(self.eff.var(), p.efficiency_var_floor),
        )

    def observe(self, nodes, counts, energy, sent, received, has_neighbor=None, chain=None):
        """Score one observation window for ``nodes`` and advance their baselines.

        Returns an ``(len(nodes), 4)`` array of sub-scores ordered
        (request, energy, reputation, efficiency). Nodes still in warm-up get
        zeros, although their baselines and reputation advance normally.
        """
        p = self.params
        mode = p.score_mode
        nodes = np.asarray(nodes, dtype=int)
        counts = np.asarray(counts, dtype=float)
        energy = np.asarray(energy, dtype=float)
        sent = np.asarray(sent, dtype=float)
        received = np.asarray(received, dtype=float)
        if nodes.size == 0:
            return np.zeros((0, 4))

        m_c = np.atleast_1d(request_pattern_score(counts, self.lam()[nodes], mode))
        mu_e, var_e = self.energy_moments()
        m_e = np.atleast_1d(energy_score(energy, mu_e[nodes], var_e[nodes], mode, p.energy_var_floor))

        charged = sent > 0
        fresh_eta = np.zeros(nodes.size)
        if charged.any():
            mu_f, var_f = self.eff_moments()
            eta = np.minimum(received[charged] / sent[charged], 1.0)
            fresh_eta[charged] = efficiency_score(
                eta, mu_f[nodes[charged]], var_f[nodes[charged]], mode, p.efficiency_var_floor
            )
            self.last_eta_score[nodes[charged]] = fresh_eta[charged]
            ok = fresh_eta[charged] <= p.event_threshold
            self.eff.push(nodes[charged][ok], eta[ok])
        m_eta = self.last_eta_score[nodes]

        self.counts.push(nodes[m_c <= p.event_threshold], counts[m_c <= p.event_threshold])
        self.energy.push(nodes[m_e <= p.event_threshold], energy[m_e <= p.event_threshold])

        anomalous = (m_c > p.event_threshold) | (m_e > p.event_threshold) | (fresh_eta > p.event_threshold)
        self.alpha[nodes] += ~anomalous
        self.beta[nodes] += anomalous
        if p.neighbor_feedback and has_neighbor is not None:
            fb = charged & np.asarray(has_neighbor, dtype=bool)
            bad = fb & (fresh_eta > p.event_threshold)
            self.alpha[nodes] += fb & ~bad
            self.beta[nodes] += bad

        R = reputation_estimate(self.alpha[nodes], self.beta[nodes])
        if chain is not None:
            for node, level in zip(nodes, R):
                reputation_transition(chain, int(node), float(level))
            R = chain.level(nodes)
        m_r = np.atleast_1d(reputation_score(R, p.trusted_alpha, p.trusted_beta, mode))

        self.windows_seen[nodes] += 1
        out = np.column_stack([m_c, m_e, m_r, m_eta])
        cold = self.windows_seen[nodes] <= p.warmup_windows
        out[cold] = 0.0
        return out

    def state(self, node: int) -> EstimatorState:
        mu_e, var_e = self.energy_moments()
        mu_f, var_f = self.eff_moments()
        return EstimatorState(
            lam=float(self.lam()[node]),
            energy_mean=float(mu_e[node]),
            energy_var=float(var_e[node]),
            eff_mean=float(mu_f[node]),
            eff_var=float(var_f[node]),
            alpha=float(self.alpha[node]),
            beta=float(self.beta[node]),
            warm=bool(self.windows_seen[node] >= self.params.warmup_windows),
            n_windows=int(self.windows_seen[node]),
        )


class _Ring:
    """Fixed-width per-row ring buffer of floats."""

    def __init__(self, rows: int, width: int):
        self.buf = np.zeros((rows, width))
        self.filled = np.zeros(rows, dtype=int)
        self.pos = np.zeros(rows, dtype=int)
        self.width = width

    def push(self, rows, values):
        rows = np.asarray(rows, dtype=int)
        if rows.size == 0:
            return
        self.buf[rows, self.pos[rows]] = values
        self.pos[rows] = (self.pos[rows] + 1) % self.width
        self.filled[rows] = np.minimum(self.filled[rows] + 1, self.width)

    def _mask(self):
        return np.arange(self.width)[None, :] < self.filled[:, None]

    def mean(self, default=0.0):
        mask = self._mask()
        n = self.filled
        s = np.where(mask, self.buf, 0.0).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, s / np.maximum(n, 1), default)

    def var(self):
        mask = self._mask()
        n = np.maximum(self.filled, 1)
        mu = np.where(mask, self.buf, 0.0).sum(axis=1) / n
        dev = np.where(mask, self.buf - mu[:, None], 0.0)
        return (dev**2).sum(axis=1) / n


# --- threshold calibration --------------------------------------------------------


@dataclass
class CalibrationResult:
    theta: float
    false_positive_rate: float
    detection_rate: float | None
    n_honest: int
    n_malicious: int
    warning: str | None = None

    def report(self) -> str:
        dr = "undefined" if self.detection_rate is None else f"{100 * self.detection_rate:.2f}%"
        lines = [
            f"theta_doc = {self.theta:.6f}",
            f"false_positive_rate = {100 * self.false_positive_rate:.2f}%",
            f"detection_rate = {dr}",
            f"honest_nodes = {self.n_honest}",
            f"malicious_nodes = {self.n_malicious}",
        ]
        if self.warning:
            lines.append(f"warning = {self.warning}")
        return "\n".join(lines)


def calibrate_threshold(scores, labels, target_fpr: float) -> CalibrationResult:
    """Smallest threshold whose false-positive rate is at most ``target_fpr``.

    ``scores`` are per-node combined scores (typically the maximum over the
    run) and ``labels`` are 1 for malicious nodes. A node counts as flagged
    when its score strictly exceeds the threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.size == 0:
        raise ContractError("calibration set is empty")
    if scores.shape != labels.shape:
        raise ContractError("scores and labels differ in shape")
    honest = np.sort(scores[~labels])
    malicious = scores[labels]

    def rates(theta):
        fpr = float(np.mean(honest > theta)) if honest.size else 0.0
        dr = float(np.mean(malicious > theta)) if malicious.size else None
        return fpr, dr

    if target_fpr < 0:
        fpr, dr = rates(1.0)
        msg = f"target false-positive rate {target_fpr} is unreachable; using theta = 1"
        log.warning(msg)
        return CalibrationResult(1.0, fpr, dr, honest.size, malicious.size, msg)
    # fpr(theta) is a non-increasing step function that only drops at honest scores
    candidates = np.unique(np.concatenate([[0.0], honest]))
    for theta in candidates:
        fpr, dr = rates(theta)
        if fpr <= target_fpr:
            return CalibrationResult(float(theta), fpr, dr, honest.size, malicious.size)
    fpr, dr = rates(1.0)  # pragma: no cover - the largest honest score always qualifies
    return CalibrationResult(1.0, fpr, dr, honest.size, malicious.size, "unreachable")
