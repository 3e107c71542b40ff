import math

import mpmath
import numpy as np
import pytest

from wrsn_doc.config import NetworkConfig, Weights
from wrsn_doc.detection import (
    ContractError,
    DetectorParams,
    EstimatorBank,
    ReputationChain,
    calibrate_threshold,
    charging_efficiency,
    combined_score,
    detect,
    efficiency_score,
    energy_score,
    estimate_baselines,
    reputation_estimate,
    reputation_score,
    reputation_transition,
    request_pattern_score,
    stationary_distribution,
    update_reputation,
)


# request pattern


def test_literal_request_score_at_lambda_two():
    pmf = mpmath.mpf(2) ** 2 * mpmath.exp(-2) / 2
    assert request_pattern_score(2, 2.0, "literal") == pytest.approx(float(1 - pmf), abs=1e-12)
    assert float(pmf) == pytest.approx(0.270670566, abs=1e-9)


def test_tail_request_score_minimal_at_mode():
    scores = [request_pattern_score(k, 2.0) for k in range(15)]
    assert int(np.argmin(scores)) == 2


def test_tail_request_score_far_tail():
    assert request_pattern_score(20, 1.0) > 0.999999


def test_request_score_rejects_negative_count():
    with pytest.raises(ContractError):
        request_pattern_score(-1, 2.0)


# gaussian scorers


def test_energy_score_zero_at_mean():
    assert energy_score(3.0, 3.0, 0.5) == 0.0


def test_energy_score_at_two_sided_95():
    sd = 0.3
    assert energy_score(1.0 + 1.959964 * sd, 1.0, sd**2) == pytest.approx(0.95, abs=1e-5)


def test_energy_literal_density_peak():
    assert energy_score(2.0, 2.0, 1 / (2 * math.pi), "literal") == pytest.approx(0.0, abs=1e-12)


def test_energy_score_variance_floor():
    with pytest.raises(ContractError):
        energy_score(1.0, 1.0, 1e-10, var_floor=1e-8)


def test_efficiency_score_examples():
    assert efficiency_score(0.9, 0.9, 0.01) == 0.0
    assert efficiency_score(0.9 - 3 * 0.1, 0.9, 0.01) == pytest.approx(0.9973, abs=1e-4)
    assert efficiency_score(0.5, 0.5, 1 / (2 * math.pi), "literal") == pytest.approx(0.0, abs=1e-12)


# reputation


def test_reputation_updates():
    assert update_reputation(1, 1, "consistent") == (2, 1)
    assert reputation_estimate(2, 1) == pytest.approx(2 / 3)
    assert update_reputation(1, 1, "anomalous") == (1, 2)
    a, b = 1, 1
    for o in ["consistent"] * 10 + ["anomalous"] * 10:
        a, b = update_reputation(a, b, o)
    assert (a, b) == (11, 11)
    assert reputation_estimate(a, b) == 0.5


def test_reputation_score_examples():
    for R in (0.1, 0.5, 0.93):
        assert reputation_score(R, 1.0, 1.0, "literal") == pytest.approx(0.0, abs=1e-12)
    assert reputation_score(0.5, 2.0, 2.0) == pytest.approx(0.0, abs=1e-9)
    assert reputation_score(0.8, 5.0, 2.0) == pytest.approx(0.0, abs=1e-9)


def test_reputation_score_clamps_boundary():
    assert 0.0 <= reputation_score(0.0, 0.5, 0.5, "literal") <= 1.0
    assert 0.0 <= reputation_score(1.0, 0.5, 0.5) <= 1.0


# Markov chain


def test_identity_chain_never_moves():
    chain = ReputationChain(3, P=np.eye(5), blend=0.0, seed=1, initial=2)
    for _ in range(50):
        reputation_transition(chain, 1, 0.05)
    assert chain.state.tolist() == [2, 2, 2]


def test_uniform_row_distribution():
    chain = ReputationChain(1, P=np.full((5, 5), 0.2))
    assert chain.next_state_distribution(0).tolist() == [0.2] * 5


def test_two_state_stationary_distribution():
    P = np.array([[0.9, 0.1], [0.5, 0.5]])
    pi = np.array([1.0, 0.0])
    for _ in range(2000):
        pi = pi @ P
    assert np.allclose(stationary_distribution(P), [5 / 6, 1 / 6], atol=1e-12)
    assert np.allclose(pi, [5 / 6, 1 / 6], atol=1e-12)


def test_non_stochastic_matrix_rejected():
    with pytest.raises(ContractError):
        ReputationChain(2, P=np.array([[0.5, 0.4], [0.5, 0.5]]))


# efficiency, fusion, threshold


def test_charging_efficiency_examples():
    assert charging_efficiency(0.05, 0.10) == 0.5
    assert charging_efficiency(0.3, 0.3) == 1.0
    assert charging_efficiency(0.0, 0.2) == 0.0
    assert charging_efficiency(0.0, 0.0) is None


def test_combined_score_examples():
    w = Weights()
    assert combined_score([0.8, 0.6, 0.4, 0.2], w) == pytest.approx(0.5)
    assert combined_score([0, 0, 0, 0], w) == 0.0
    assert combined_score([0.37, 0.1, 0.2, 0.9], Weights(1, 0, 0, 0)) == 0.37


def test_combined_score_rejects_out_of_range():
    with pytest.raises(ContractError):
        combined_score([1.2, 0, 0, 0], Weights())
    with pytest.raises(ContractError):
        combined_score([0.1, 0, 0, 0], Weights(0.5, 0.5, 0.5, 0.0))


def test_detect_is_strict():
    assert detect(0.75, 0.7) == 1
    assert detect(0.7, 0.7) == 0
    assert detect(0.0, 0.3) == 0


# baselines


def test_estimate_baselines_examples(rng):
    assert estimate_baselines([2, 1, 3], [1.0, 1.0, 1.0]).lam == 2.0
    st = estimate_baselines([1, 1], [0.4, 0.4, 0.4], energy_var_floor=1e-6)
    assert st.energy_var == 1e-6
    big = estimate_baselines(np.ones(10_000), rng.normal(5.0, 1.0, 10_000))
    assert abs(big.energy_mean - 5.0) < 3 / math.sqrt(10_000) + 0.02


def test_bank_reports_zero_during_warmup():
    net = NetworkConfig()
    params = DetectorParams(warmup_windows=3).resolved(net, 50.0)
    bank = EstimatorBank(2, params)
    nodes = np.array([0, 1])
    for _ in range(3):
        out = bank.observe(nodes, [9, 0], [0.005, 0.005], [0, 0], [0, 0])
        assert np.all(out == 0)
    out = bank.observe(nodes, [9, 0], [0.005, 0.005], [0, 0], [0, 0])
    assert out[0, 0] > 0.99
    assert out[1, 0] < 0.5


def test_bank_flags_disruptor_efficiency():
    net = NetworkConfig()
    params = DetectorParams(warmup_windows=0).resolved(net, 50.0)
    bank = EstimatorBank(2, params)
    out = bank.observe(np.array([0, 1]), [0, 0], [0.005, 0.005], [1.0, 1.0], [1.0, 0.5])
    assert out[0, 3] == 0.0
    assert out[1, 3] > 0.99
    # efficiency score persists until the next session
    out = bank.observe(np.array([0, 1]), [0, 0], [0.005, 0.005], [0.0, 0.0], [0.0, 0.0])
    assert out[1, 3] > 0.99


# calibration


def test_calibration_separated():
    res = calibrate_threshold([0.1, 0.2, 0.3, 0.8, 0.9], [0, 0, 0, 1, 1], 0.0)
    assert res.false_positive_rate == 0.0
    assert res.detection_rate == 1.0
    assert res.theta == pytest.approx(0.3)


def test_calibration_zero_target_overlapping():
    scores = [0.1, 0.5, 0.7, 0.4, 0.6, 0.9]
    labels = [0, 0, 0, 1, 1, 1]
    res = calibrate_threshold(scores, labels, 0.0)
    assert res.theta >= 0.7
    assert res.detection_rate == pytest.approx(1 / 3)


def test_calibration_vacuous_and_unreachable_targets():
    assert calibrate_threshold([0.3, 0.6], [0, 1], 1.0).theta == 0.0
    res = calibrate_threshold([0.3, 0.6], [0, 1], -0.1)
    assert res.theta == 1.0
    assert res.warning
    with pytest.raises(ContractError):
        calibrate_threshold([], [], 0.05)
