#!/usr/bin/env python3
"""
Tests for the signal model: dimensions, index map, atoms, scenario draws and
measurement synthesis.
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from signal_model import (ChannelParams, Dimensions, Measurement, ModelDomainError, Scenario, Variant,
                          WaveformCoefficients, block_mask, comms_component, decode_index, draw_bases,
                          draw_scenario, encode_index, radar_component, sample_atoms, steering_atom,
                          steering_atoms, synth_measurement)


def test_dimensions_validation():
    dims = Dimensions(M=13, P=9, J=3, L=3, Q=3)
    assert dims.N == 6
    assert dims.MP == 117
    assert dims.length == 117
    test_cases = [
        dict(M=12, P=9, J=3),
        dict(M=13, P=0, J=3),
        dict(M=13, P=9, J=0),
        dict(M=13, P=9, J=3, L=-1),
    ]
    for kwargs in test_cases:
        with pytest.raises(ModelDomainError):
            Dimensions(**kwargs)


def test_dimensions_dict_rejects_inconsistent_n():
    with pytest.raises(ModelDomainError):
        Dimensions.from_dict({"M": 5, "N": 3, "P": 2, "J": 1})


def test_index_map_is_a_bijection():
    dims = Dimensions(M=5, P=3, J=2, sub_symbols=2)
    seen = set()
    for m in range(dims.length):
        n, p, sub = decode_index(m, dims)
        assert encode_index(n, p, dims, sub) == m
        seen.add((n, p, sub))
    assert len(seen) == dims.length
    assert encode_index(-2, 0, dims) == 0
    assert encode_index(2, 2, dims, 1) == dims.length - 1
    with pytest.raises(ModelDomainError):
        encode_index(3, 0, dims)


def test_steering_atom_entries():
    dims = Dimensions(M=5, P=3, J=1)
    tau, nu = 0.17, 0.42
    atom = steering_atom((tau, nu), dims)
    for n in range(-dims.N, dims.N + 1):
        for p in range(dims.P):
            expected = np.exp(2j * np.pi * (tau * n + nu * p))
            assert atom[n + dims.N + dims.M * p] == pytest.approx(expected)
    atoms = steering_atoms([[tau, nu], [0.5, 0.0]], dims)
    assert np.allclose(atoms[:, 0], atom)
    assert atoms.shape == (dims.MP, 2)
    with pytest.raises(ModelDomainError):
        steering_atom((1.0, 0.2), dims)


def test_sample_atoms_follow_phase_cells():
    dims = Dimensions(M=3, P=2, J=1, sub_symbols=2)
    atoms = sample_atoms([[0.25, 0.5]], dims)
    assert atoms.shape == (dims.length, 1)
    # both sub-symbols of pulse p see the same phase
    assert np.allclose(atoms[0:3, 0], atoms[3:6, 0])


def test_channel_params_validation():
    with pytest.raises(ModelDomainError):
        ChannelParams(np.array([2.0 + 0j]), np.array([0.1]), np.array([0.1]))
    with pytest.raises(ModelDomainError):
        ChannelParams(np.array([1.0 + 0j]), np.array([1.0]), np.array([0.1]))
    with pytest.raises(ModelDomainError):
        ChannelParams(np.ones(2, dtype=complex), np.array([0.1]), np.array([0.1]))
    assert ChannelParams.empty().count == 0


def test_waveform_coefficients_normalised():
    coeffs = WaveformCoefficients(np.array([3.0, 4.0]), np.array([1j, 1j, 1j, 1j]))
    assert np.linalg.norm(coeffs.u) == pytest.approx(1.0)
    assert np.linalg.norm(coeffs.v) == pytest.approx(1.0)
    with pytest.raises(ModelDomainError):
        WaveformCoefficients(np.zeros(2), np.ones(2))


def test_variant_validation():
    with pytest.raises(ModelDomainError):
        Variant(kind="noisy")
    with pytest.raises(ModelDomainError):
        Variant(kind="unsync", rho=0.0)
    with pytest.raises(ModelDomainError):
        Variant(kind="baseline", n_radar=2)
    with pytest.raises(ModelDomainError):
        Variant(kind="quantum")
    assert Variant.unsync(0.1, rho=2.0).radar_bound == 2.0
    assert Variant.baseline().radar_bound == 1.0


def test_bases_layouts():
    dims = Dimensions(M=5, P=3, J=2)
    block = draw_bases(dims, seed=3, layout="block")
    dense = draw_bases(dims, seed=3, layout="dense")
    block.check(dims)
    dense.check(dims)
    mask = block_mask(dims)
    assert np.all(block.D[~mask] == 0)
    assert np.allclose(np.abs(block.D[mask]), 1.0)
    assert np.allclose(np.abs(dense.D), 1.0)
    assert np.allclose(np.abs(block.B), 1.0)
    assert np.allclose(block.B, draw_bases(dims, seed=3).B)


def test_draw_scenario_is_deterministic():
    dims = Dimensions(M=7, P=5, J=2, L=2, Q=2)
    first = synth_measurement(draw_scenario(dims, seed=5))
    second = synth_measurement(draw_scenario(dims, seed=5))
    other = synth_measurement(draw_scenario(dims, seed=6))
    assert np.array_equal(first.y, second.y)
    assert not np.allclose(first.y, other.y)


def test_fixed_channels_and_separation():
    dims = Dimensions(M=13, P=9, J=3, L=3, Q=3)
    scenario = draw_scenario(dims, seed=1, layout="dense",
                             radar_channels=[{"delays": [0.23, 0.68, 0.87], "dopplers": [0.45, 0.42, 0.71]}],
                             comms_channels=[{"delays": [0.12, 0.21, 0.95], "dopplers": [0.09, 0.25, 0.87]}])
    assert np.allclose(scenario.radar.delays, [0.23, 0.68, 0.87])
    assert np.allclose(np.abs(scenario.radar.gains), 1.0)
    separated = draw_scenario(dims, seed=2, enforce_separation=True)
    d_tau, d_nu = separated.separation()
    assert d_tau >= 1.0 / dims.M
    assert d_nu >= 1.0 / dims.P
    with pytest.raises(ModelDomainError):
        draw_scenario(dims, seed=1, radar_channels=[])


def test_measurement_is_sum_of_components(small_scenario, small_measurement):
    dims = small_scenario.dims
    radar, comms = small_scenario.radar_emitters()[0], small_scenario.comms_emitters()[0]
    expected = radar_component(radar, dims) + comms_component(comms, dims)
    assert np.allclose(small_measurement.y, expected)
    # radar sample m = b_n^H u * sum_k alpha_k e^{-j2pi(n tau_k + p nu_k)}
    n, p = 1, 2
    m = encode_index(n, p, dims)
    waveform = small_scenario.bases.B[n + dims.N] @ small_scenario.u
    channel = np.sum(small_scenario.radar.gains *
                     np.exp(-2j * np.pi * (n * small_scenario.radar.delays + p * small_scenario.radar.dopplers)))
    assert radar_component(radar, dims)[m] == pytest.approx(waveform * channel)


def test_noise_matches_requested_snr():
    dims = Dimensions(M=17, P=13, J=3, L=4, Q=4)
    noisy = draw_scenario(dims, Variant.noisy(snr_db=10.0), seed=9)
    measurement = synth_measurement(noisy)
    clean = synth_measurement(replace(noisy, variant=Variant.baseline()))
    assert np.allclose(measurement.y - measurement.noise_realization, clean.y)
    ratio = np.linalg.norm(clean.y) ** 2 / np.linalg.norm(measurement.noise_realization) ** 2
    # per-entry variance is set exactly; the realised ratio is within a few dB
    assert 10 ** 0.7 < ratio < 10 ** 1.3
    assert measurement.noise_norm == pytest.approx(np.linalg.norm(measurement.noise_realization))


def test_unequal_pri_dimensions():
    dims = Dimensions(M=5, P=3, J=2, L=1, Q=1)
    scenario = draw_scenario(dims, Variant.unequal_pri(3), seed=4)
    assert scenario.dims.sub_symbols == 3
    assert scenario.u.size == 6
    assert synth_measurement(scenario).y.size == 5 * 3 * 3


def test_multi_emitter_scenario():
    dims = Dimensions(M=7, P=5, J=2, L=1, Q=1)
    scenario = draw_scenario(dims, Variant.multi_emitter(2, 3), seed=4)
    assert len(scenario.radar_emitters()) == 2
    assert len(scenario.comms_emitters()) == 3
    silent = draw_scenario(dims, Variant.multi_emitter(1, 0), seed=4)
    assert silent.comms_emitters() == []


def test_scenario_survives_json(small_scenario, small_measurement):
    payload = json.loads(json.dumps(small_scenario.to_dict()))
    restored = Scenario.from_dict(payload)
    assert np.allclose(synth_measurement(restored).y, small_measurement.y)
    measurement = Measurement.from_dict(json.loads(json.dumps(small_measurement.to_dict())))
    assert np.allclose(measurement.y, small_measurement.y)


def test_sync_lag_of_one_equals_no_lag():
    dims = Dimensions(M=7, P=5, J=2, L=2, Q=1)
    fixed = dict(radar_channels=[{"delays": [0.1, 0.55], "dopplers": [0.3, 0.8]}],
                 comms_channels=[{"delays": [0.4], "dopplers": [0.2]}])
    test_cases = [(0.0, 1.0), (0.25, 1.25), (0.4, 2.4)]
    for lag, shifted in test_cases:
        first = synth_measurement(draw_scenario(dims, Variant.unsync(lag), seed=6, **fixed))
        second = synth_measurement(draw_scenario(dims, Variant.unsync(shifted), seed=6, **fixed))
        assert np.allclose(first.y, second.y, atol=1e-9), (lag, shifted)
    unlagged = synth_measurement(draw_scenario(dims, Variant.unsync(0.0), seed=6, **fixed))
    lagged = synth_measurement(draw_scenario(dims, Variant.unsync(0.25), seed=6, **fixed))
    assert not np.allclose(lagged.y, unlagged.y)


def test_variants_reduce_to_baseline():
    dims = Dimensions(M=7, P=5, J=2, L=2, Q=2)
    baseline = synth_measurement(draw_scenario(dims, Variant.baseline(), seed=13))
    for variant in (Variant.unsync(0.0, rho=1.0), Variant.multi_emitter(1, 1)):
        scenario = draw_scenario(dims, variant, seed=13)
        assert scenario.extra_radar == () and scenario.extra_comms == ()
        assert np.array_equal(synth_measurement(scenario).y, baseline.y), variant.kind


def test_synthesis_is_linear_in_the_channel():
    dims = Dimensions(M=7, P=5, J=2, L=1, Q=1)
    scenario = draw_scenario(dims, Variant.baseline(), seed=21, layout="dense")
    first = ChannelParams(np.exp(2j * np.pi * np.array([0.1, 0.7])), [0.12, 0.5], [0.33, 0.9])
    second = ChannelParams(np.exp(2j * np.pi * np.array([0.45])), [0.81], [0.05])
    union = ChannelParams(np.concatenate([first.gains, second.gains]),
                          np.concatenate([first.delays, second.delays]),
                          np.concatenate([first.dopplers, second.dopplers]))
    comms = synth_measurement(replace(scenario, radar=ChannelParams.empty())).y

    def measured(channel):
        return synth_measurement(replace(scenario, radar=channel)).y

    assert np.allclose(measured(union), measured(first) + measured(second) - comms)

    # the comms channel enters the same way
    def with_comms(channel):
        return synth_measurement(replace(scenario, comms=channel)).y

    radar = with_comms(ChannelParams.empty())
    assert np.allclose(with_comms(union), with_comms(first) + with_comms(second) - radar)
