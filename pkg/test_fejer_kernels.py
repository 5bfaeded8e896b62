#!/usr/bin/env python3
"""
Tests for the squared Fejer kernels and the wrap-around separation helpers.
"""

from types import SimpleNamespace

import numpy as np
import pytest

from fejer_kernels import (FejerSpec, coefficient_at, fejer_1d, fejer_2d, fejer_2d_from_coeffs,
                           fejer_coeffs, fejer_from_coeffs, min_separation, torus_dist, weights,
                           wraparound_dist)
from signal_model import Dimensions


def test_kernel_peaks_at_integers():
    """The kernel equals 1 at integer arguments and stays within [0, 1]."""
    for N in (2, 5, 6, 8):
        spec = FejerSpec(N)
        assert fejer_1d(spec, 0.0) == pytest.approx(1.0)
        assert fejer_1d(spec, 1.0) == pytest.approx(1.0)
        values = fejer_1d(spec, np.linspace(0.0, 1.0, 257))
        assert np.all(values >= -1e-15)
        assert np.all(values <= 1.0 + 1e-12)


def test_coefficients_reproduce_kernel():
    """Summing g_N(n) e^{j 2 pi tau n} over the full support gives the closed form."""
    taus = np.linspace(0.0, 1.0, 101)
    for N in (2, 3, 4, 7, 10):
        spec = FejerSpec(N)
        assert np.allclose(fejer_from_coeffs(spec, taus), fejer_1d(spec, taus), atol=1e-12)


def test_coefficient_shape_and_symmetry():
    spec = FejerSpec(6)
    g = fejer_coeffs(spec)
    assert spec.T == 4
    assert g.size == 2 * spec.support + 1
    assert np.allclose(g, g[::-1])
    assert g.sum() == pytest.approx(1.0)
    assert coefficient_at(spec, spec.support + 1) == 0.0
    # the support covers every sampled frequency
    assert np.all(coefficient_at(spec, np.arange(-6, 7)) > 0)


def test_odd_order_support_covers_samples():
    spec = FejerSpec(5)
    assert spec.support >= 5
    assert np.all(coefficient_at(spec, np.arange(-5, 6)) > 0)


def test_invalid_order_rejected():
    with pytest.raises(ValueError):
        FejerSpec(0)


def test_weights_are_positive_and_ordered():
    dims = Dimensions(M=7, P=4, J=2)
    w = weights(dims)
    assert w.shape == (dims.MP,)
    assert np.all(w > 0)
    # p-major, n-minor: the first M entries share the same pulse factor
    first = w[:dims.M]
    assert np.allclose(first, first[::-1])


def test_2d_kernel_matches_coefficients():
    dims = Dimensions(M=9, P=5, J=2)
    taus = np.linspace(0.0, 1.0, 17)
    nus = np.linspace(0.0, 1.0, 13)
    assert np.allclose(fejer_2d(dims, taus, nus), fejer_2d_from_coeffs(dims, taus, nus), atol=1e-12)
    assert fejer_2d(dims, 0.0, 0.0)[0, 0] == pytest.approx(1.0)


def test_wraparound_distance():
    test_cases = [
        (0.8, 0.1, 0.3),
        (0.05, 0.95, 0.1),
        (0.2, 0.2, 0.0),
        (0.0, 0.5, 0.5),
    ]
    for a, b, expected in test_cases:
        assert wraparound_dist(a, b) == pytest.approx(expected)
        assert wraparound_dist(b, a) == pytest.approx(expected)
    assert torus_dist((0.95, 0.0), (0.05, 0.1)) == pytest.approx(np.sqrt(0.02))


def test_min_separation_over_channel_sets():
    radar = SimpleNamespace(delays=np.array([0.1, 0.95]), dopplers=np.array([0.2, 0.6]))
    comms = SimpleNamespace(delays=np.array([0.3, 0.5]), dopplers=np.array([0.0, 0.9]))
    d_tau, d_nu = min_separation(radar, comms)
    assert d_tau == pytest.approx(0.15)
    assert d_nu == pytest.approx(0.1)
    single = SimpleNamespace(delays=np.array([0.4]), dopplers=np.array([0.4]))
    assert min_separation(single) == (np.inf, np.inf)


def test_weights_match_coefficient_products():
    """1 / omega^2 = g_N(n) g_P(p) / (N P) on every sampled cell."""
    dims = Dimensions(M=9, P=5, J=1)
    g_n = coefficient_at(FejerSpec(dims.N), np.arange(-dims.N, dims.N + 1))
    g_p = coefficient_at(FejerSpec(dims.P), np.arange(dims.P))
    expected = np.outer(g_p, g_n).ravel() / (dims.N * dims.P)
    assert np.allclose(1.0 / weights(dims) ** 2, expected, atol=1e-10)
