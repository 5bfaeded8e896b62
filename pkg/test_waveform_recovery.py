#!/usr/bin/env python3
"""
Tests for least-squares waveform recovery, factorisation, support matching
and scoring.
"""

from dataclasses import replace
from itertools import permutations

import numpy as np
import pytest

from lifted_operators import sample_rows
from signal_model import (ChannelParams, Dimensions, Variant, WaveformCoefficients, decode_index,
                          draw_scenario, synth_measurement)
from support_localizer import SupportEstimate
from waveform_recovery import (DegenerateEstimateError, IllPosedDesignError, aligned_error, build_design_matrix,
                               canonical_gauge, factor_estimate, match_supports, oracle_estimate, recover,
                               score, solve_waveforms)


def true_supports(scenario, delay_only_comms: bool = False):
    radar = SupportEstimate(scenario.radar.supports, np.ones(scenario.radar.count), "radar")
    comms_points = scenario.comms.supports.copy()
    if delay_only_comms:
        comms_points[:, 1] = 0.0
    comms = SupportEstimate(comms_points, np.ones(scenario.comms.count), "comms", delay_only_comms)
    return radar, comms


def recover_with_truth(scenario, measurement, delay_only_comms: bool = False):
    radar, comms = true_supports(scenario, delay_only_comms)
    return recover(measurement, [radar], [comms], [scenario.bases], [scenario.bases])


def test_design_matrix_matches_naive_construction(small_scenario):
    dims = small_scenario.dims
    bases = small_scenario.bases
    r_r = small_scenario.radar.supports
    r_c = small_scenario.comms.supports
    W0 = build_design_matrix(r_r, r_c, bases, dims)
    assert W0.shape == (dims.length, dims.radar_dim + dims.comms_dim)
    radar_rows = sample_rows("radar", bases, dims)
    for m in range(dims.length):
        n, p, _ = decode_index(m, dims)
        phase_r = np.exp(-2j * np.pi * (n * r_r[0, 0] + p * r_r[0, 1]))
        phase_c = np.exp(-2j * np.pi * (n * r_c[0, 0] + p * r_c[0, 1]))
        assert np.allclose(W0[m, :dims.radar_dim], phase_r * radar_rows[m])
        assert np.allclose(W0[m, dims.radar_dim:], phase_c * bases.D[m])


def test_true_blocks_reproduce_measurement(small_scenario, small_measurement):
    W0 = build_design_matrix(small_scenario.radar.supports, small_scenario.comms.supports,
                             small_scenario.bases, small_scenario.dims)
    z = np.concatenate([np.kron(small_scenario.radar.gains, small_scenario.u),
                        np.kron(small_scenario.comms.gains, small_scenario.v)])
    assert np.allclose(W0 @ z, small_measurement.y)
    z_hat, residual = solve_waveforms(small_measurement.y, W0)
    assert np.allclose(z_hat, z)
    assert residual < 1e-10


def test_recovery_with_true_supports_succeeds(small_scenario, small_measurement):
    estimate = recover_with_truth(small_scenario, small_measurement)
    metrics = score(estimate, small_scenario)
    assert metrics["success"]
    assert metrics["radar_support_error"] == 0.0
    assert metrics["message_error"] < 1e-8
    assert metrics["waveform_error"] < 1e-8
    assert metrics["radar_z_error"] < 1e-8
    assert metrics["comms_z_error"] < 1e-8
    assert np.allclose(np.abs(estimate.gains_r), 1.0)
    assert np.linalg.norm(estimate.u_hat) == pytest.approx(1.0)


def test_block_layout_recovers_message_per_pulse():
    dims = Dimensions(M=7, P=3, J=2, L=1, Q=1)
    scenario = draw_scenario(dims, Variant.baseline(), seed=21, layout="block",
                             radar_channels=[{"delays": [0.4], "dopplers": [0.3]}],
                             comms_channels=[{"delays": [0.8], "dopplers": [0.55]}])
    measurement = synth_measurement(scenario)
    estimate = recover_with_truth(scenario, measurement, delay_only_comms=True)
    metrics = score(estimate, scenario)
    assert estimate.residual < 1e-8
    assert metrics["message_error"] < 1e-8
    assert np.isnan(metrics["comms_doppler_error"])
    assert metrics["success"]


def test_gauge_invariance(small_scenario, small_measurement):
    """(u e^{j theta}, alpha e^{-j theta}) gives the same measurement and the same estimate."""
    theta = 0.917
    rotated = replace(small_scenario,
                      coefficients=WaveformCoefficients(small_scenario.u * np.exp(1j * theta), small_scenario.v),
                      radar=ChannelParams(small_scenario.radar.gains * np.exp(-1j * theta),
                                          small_scenario.radar.delays, small_scenario.radar.dopplers))
    rotated_measurement = synth_measurement(rotated)
    assert np.allclose(rotated_measurement.y, small_measurement.y)
    first = recover_with_truth(small_scenario, small_measurement)
    second = recover_with_truth(rotated, rotated_measurement)
    assert np.allclose(first.u_hat, second.u_hat, atol=1e-9)
    assert np.allclose(first.gains_r, second.gains_r, atol=1e-9)
    assert score(second, rotated)["success"]


def test_canonical_gauge_and_factorisation():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    x /= np.linalg.norm(x)
    gauged = canonical_gauge(x)
    assert gauged[0].imag == pytest.approx(0.0)
    assert gauged[0].real > 0
    gains = np.exp(2j * np.pi * np.array([0.1, 0.7]))
    blocks = np.outer(gains, x).ravel()
    dims = Dimensions(M=5, P=2, J=3)
    g_hat, x_hat, stacked = factor_estimate(blocks, dims, dim=3)
    assert np.allclose(x_hat, gauged)
    assert np.allclose(np.outer(g_hat, x_hat), stacked)


def test_degenerate_block_rejected():
    dims = Dimensions(M=5, P=2, J=2)
    z = np.zeros(4, dtype=complex)
    with pytest.raises(DegenerateEstimateError):
        factor_estimate(z, dims, dim=2)


def test_ill_posed_design_names_coherent_pair(small_scenario, small_measurement):
    duplicated = SupportEstimate([[0.3, 0.6], [0.3, 0.6]], [1.0, 1.0], "radar")
    _, comms = true_supports(small_scenario)
    with pytest.raises(IllPosedDesignError) as info:
        recover(small_measurement, [duplicated], [comms], [small_scenario.bases], [small_scenario.bases])
    assert info.value.pair is not None
    assert "0.300000" in info.value.pair[0]


def test_matching_agrees_with_brute_force():
    rng = np.random.default_rng(9)
    est = rng.uniform(size=(4, 2))
    truth = rng.uniform(size=(4, 2))
    rows, cols, dist = match_supports(est, truth)

    def torus(a, b):
        d = np.abs(a - b)
        d = np.minimum(d, 1 - d)
        return np.sqrt(np.sum(d ** 2))

    best = min(sum(torus(est[i], truth[perm[i]]) for i in range(4)) for perm in permutations(range(4)))
    assert dist.sum() == pytest.approx(best)
    assert sorted(rows.tolist()) == [0, 1, 2, 3]


def test_aligned_error_ignores_scale():
    rng = np.random.default_rng(2)
    t = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    assert aligned_error(t, 0.3j * t) == pytest.approx(0.0, abs=1e-12)
    phases = np.repeat(np.exp(1j * np.array([0.1, 1.2, 2.3])), 4)
    assert aligned_error(t, phases * t, block=4) == pytest.approx(0.0, abs=1e-12)
    assert aligned_error(t, phases * t) > 0.1


def test_shifted_support_fails_success(small_scenario):
    estimate = oracle_estimate(small_scenario)
    assert score(estimate, small_scenario)["success"]
    shifted = estimate.radar[0].supports.supports + np.array([0.01, 0.0])
    estimate.radar[0].supports = SupportEstimate(shifted, [1.0], "radar")
    metrics = score(estimate, small_scenario)
    assert metrics["radar_support_error"] == pytest.approx(0.01)
    assert not metrics["success"]


def test_empty_truth_and_empty_supports():
    dims = Dimensions(M=5, P=3, J=2, L=0, Q=0)
    scenario = draw_scenario(dims, seed=1)
    measurement = synth_measurement(scenario)
    assert not np.any(measurement.y)
    estimate = recover(measurement, [SupportEstimate.empty("radar")], [SupportEstimate.empty("comms", True)],
                       [scenario.bases], [scenario.bases])
    assert estimate.radar_supports.count == 0
    assert not score(estimate, scenario)["success"]


def test_count_mismatch_fails(small_scenario, small_measurement):
    radar, comms = true_supports(small_scenario)
    extra = SupportEstimate(np.vstack([radar.supports, [[0.9, 0.05]]]), [1.0, 0.99], "radar")
    estimate = recover(small_measurement, [extra], [comms], [small_scenario.bases], [small_scenario.bases])
    metrics = score(estimate, small_scenario)
    assert metrics["radar_count"] == 2
    assert not metrics["success"]


def test_least_squares_matches_normal_equations(small_scenario):
    rng = np.random.default_rng(17)
    dims = small_scenario.dims
    W0 = build_design_matrix(small_scenario.radar.supports, small_scenario.comms.supports,
                             small_scenario.bases, dims)
    y = rng.standard_normal(dims.length) + 1j * rng.standard_normal(dims.length)
    z_hat, residual = solve_waveforms(y, W0)
    z_normal = np.linalg.solve(W0.conj().T @ W0, W0.conj().T @ y)
    assert np.allclose(z_hat, z_normal, atol=1e-8)
    assert residual == pytest.approx(np.linalg.norm(y - W0 @ z_normal))


def test_absolute_errors_are_reported_with_relative_ones(small_scenario):
    rng = np.random.default_rng(5)
    t = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    e = t + 0.01 * rng.standard_normal(8)
    assert aligned_error(t, e, relative=False) == pytest.approx(aligned_error(t, e) * np.linalg.norm(t))

    estimate = oracle_estimate(small_scenario)
    estimate.comms[0].signal = estimate.comms[0].signal + 1e-3 * rng.standard_normal(estimate.comms[0].signal.size)
    metrics = score(estimate, small_scenario)
    message = small_scenario.bases.D @ small_scenario.v
    waveform = small_scenario.bases.B @ small_scenario.u
    assert metrics["message_error_abs"] == pytest.approx(metrics["message_error"] * np.linalg.norm(message))
    assert metrics["waveform_error_abs"] == pytest.approx(metrics["waveform_error"] * np.linalg.norm(waveform))
    assert metrics["message_error_abs"] > 0
