#!/usr/bin/env python3
"""
Tests for the lifted measurement maps, their adjoints and the dual polynomials.
"""

import numpy as np
import pytest

from lifted_operators import (adjoint_comms, adjoint_radar, eval_poly_c, eval_poly_grid, eval_poly_r,
                              forward_comms, forward_radar, inner_product, lifted_matrix, poly_norm_grid,
                              sample_rows)
from signal_model import (Dimensions, ModelDomainError, Variant, comms_component, decode_index, draw_bases,
                          draw_scenario, radar_component, steering_atom)


def _random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("layout", ["block", "dense"])
def test_adjoint_identity(layout, rng):
    """<A(Z), q> equals <Z, A*(q)> for both channels."""
    dims = Dimensions(M=5, P=3, J=2)
    bases = draw_bases(dims, seed=2, layout=layout)
    q = _random_complex(rng, dims.length)
    for forward, adjoint, dim in ((forward_radar, adjoint_radar, dims.radar_dim),
                                  (forward_comms, adjoint_comms, dims.comms_dim)):
        Z = _random_complex(rng, dim, dims.MP)
        lhs = inner_product(forward(Z, bases, dims), q)
        rhs = inner_product(Z, adjoint(q, bases, dims))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_adjoint_identity_with_sub_symbols(rng):
    dims = Dimensions(M=3, P=2, J=2, sub_symbols=3)
    bases = draw_bases(dims, seed=8)
    q = _random_complex(rng, dims.length)
    Z = _random_complex(rng, dims.radar_dim, dims.MP)
    assert inner_product(forward_radar(Z, bases, dims), q) == \
        pytest.approx(inner_product(Z, adjoint_radar(q, bases, dims)))


def test_forward_of_lifted_truth_is_component(small_scenario):
    dims = small_scenario.dims
    radar = small_scenario.radar_emitters()[0]
    comms = small_scenario.comms_emitters()[0]
    assert np.allclose(forward_radar(lifted_matrix(radar, dims), radar.bases, dims), radar_component(radar, dims))
    assert np.allclose(forward_comms(lifted_matrix(comms, dims), comms.bases, dims), comms_component(comms, dims))


def test_polynomial_matches_naive_sum(small_scenario, rng):
    """f(r) = sum_m q_m e^{j2pi(n tau + p nu)} b_n evaluated sample by sample."""
    dims = small_scenario.dims
    bases = small_scenario.bases
    q = _random_complex(rng, dims.length)
    r = (0.37, 0.81)
    naive_r = np.zeros(dims.radar_dim, dtype=complex)
    naive_c = np.zeros(dims.comms_dim, dtype=complex)
    for m in range(dims.length):
        n, p, _ = decode_index(m, dims)
        phase = np.exp(2j * np.pi * (n * r[0] + p * r[1]))
        naive_r += q[m] * phase * np.conj(bases.B[n + dims.N])
        naive_c += q[m] * phase * np.conj(bases.D[m])
    assert np.allclose(eval_poly_r(q, r, bases, dims), naive_r)
    assert np.allclose(eval_poly_c(q, r, bases, dims), naive_c)
    # f(r) = A*(q) a(r)
    assert np.allclose(adjoint_radar(q, bases, dims) @ steering_atom(r, dims), naive_r)


def test_grid_evaluation_matches_pointwise(small_scenario, rng):
    dims = small_scenario.dims
    bases = small_scenario.bases
    q = _random_complex(rng, dims.length)
    taus = np.array([0.0, 0.25, 0.6])
    nus = np.array([0.1, 0.9])
    values = eval_poly_grid(q, "comms", taus, nus, bases, dims)
    for i, tau in enumerate(taus):
        for k, nu in enumerate(nus):
            assert np.allclose(values[i, k], eval_poly_c(q, (tau, nu), bases, dims))
    norms = poly_norm_grid(q, "comms", taus, nus, bases, dims, chunk=1)
    assert np.allclose(norms, np.linalg.norm(values, axis=2))


def test_block_comms_polynomial_ignores_doppler(rng):
    dims = Dimensions(M=5, P=4, J=2)
    bases = draw_bases(dims, seed=1, layout="block")
    q = _random_complex(rng, dims.length)
    norms = poly_norm_grid(q, "comms", np.linspace(0, 0.9, 10), np.linspace(0, 0.9, 7), bases, dims)
    assert np.allclose(norms, norms[:, :1])


def test_shape_checks(small_scenario):
    dims = small_scenario.dims
    bases = small_scenario.bases
    with pytest.raises(ModelDomainError):
        sample_rows("sonar", bases, dims)
    with pytest.raises(ModelDomainError):
        adjoint_radar(np.zeros(dims.length + 1), bases, dims)
    with pytest.raises(ModelDomainError):
        forward_radar(np.zeros((dims.radar_dim + 1, dims.MP)), bases, dims)
    with pytest.raises(ModelDomainError):
        eval_poly_r(np.zeros(dims.length), (1.2, 0.0), bases, dims)


def test_lifted_matrix_of_multi_emitter():
    dims = Dimensions(M=5, P=3, J=2, L=1, Q=1)
    scenario = draw_scenario(dims, Variant.multi_emitter(2, 1), seed=3, layout="dense")
    extra = scenario.radar_emitters()[1]
    Z = lifted_matrix(extra, dims)
    assert Z.shape == (dims.radar_dim, dims.MP)
    assert np.linalg.matrix_rank(Z) == 1
