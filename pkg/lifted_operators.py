#!/usr/bin/env python3
"""
Lifted measurement operators and dual polynomials.

The radar map sends a J~ x MP matrix Z_r to the samples b_n^H Z_r e_c(m), where
c(m) = n + N + M p is the phase cell of sample m; the comms map does the same
with d_m. Their adjoints spread a dual vector q back onto the cells, and the
dual polynomials f(tau, nu) = adjoint(q) a(tau, nu) are evaluated either
pointwise or on separable grids.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from signal_model import (Dimensions, Emitter, ModelDomainError, SubspaceBases,
                          sample_grid, steering_atoms)

logger = logging.getLogger(__name__)

KINDS = ("radar", "comms")
# complex entries of one grid chunk before norms are reduced
GRID_CHUNK_ENTRIES = 4_000_000


def inner_product(a, b) -> float:
    """Real inner product <A, B> = Re Tr(B^H A)."""
    return float(np.real(np.vdot(np.asarray(b), np.asarray(a))))


def sample_rows(kind: str, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """Per-sample basis rows: b_n^H for radar, d_m^H for comms (length x dim)."""
    if kind == "radar":
        if bases.B.shape != (dims.M, dims.radar_dim):
            raise ModelDomainError(f"B has shape {bases.B.shape}, expected {(dims.M, dims.radar_dim)}")
        return bases.B[sample_grid(dims).n + dims.N]
    if kind == "comms":
        if bases.D.shape != (dims.length, dims.comms_dim):
            raise ModelDomainError(f"D has shape {bases.D.shape}, expected {(dims.length, dims.comms_dim)}")
        return bases.D
    raise ModelDomainError(f"kind must be one of {KINDS}, got '{kind}'")


def _check_dual(q, dims: Dimensions) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    if q.shape != (dims.length,):
        raise ModelDomainError(f"dual vector has shape {q.shape}, expected ({dims.length},)")
    return q


def _forward(Z, rows: np.ndarray, dims: Dimensions) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    if Z.shape != (rows.shape[1], dims.MP):
        raise ModelDomainError(f"lifted matrix has shape {Z.shape}, expected {(rows.shape[1], dims.MP)}")
    return np.einsum("mj,jm->m", rows, Z[:, sample_grid(dims).cell])


def _adjoint(q: np.ndarray, rows: np.ndarray, dims: Dimensions) -> np.ndarray:
    spread = np.zeros((dims.MP, rows.shape[1]), dtype=complex)
    np.add.at(spread, sample_grid(dims).cell, q[:, None] * np.conj(rows))
    return spread.T


def forward_radar(Z_r, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    return _forward(Z_r, sample_rows("radar", bases, dims), dims)


def forward_comms(Z_c, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    return _forward(Z_c, sample_rows("comms", bases, dims), dims)


def adjoint_radar(q, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """sum_m q_m b_n e_c(m)^T as a J~ x MP matrix."""
    return _adjoint(_check_dual(q, dims), sample_rows("radar", bases, dims), dims)


def adjoint_comms(q, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    return _adjoint(_check_dual(q, dims), sample_rows("comms", bases, dims), dims)


def cell_coefficients(q, kind: str, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """Dual polynomial coefficients arranged as (P, M, dim): entry [p, n + N] multiplies e^{j2pi(n tau + p nu)}."""
    q = _check_dual(q, dims)
    spread = _adjoint(q, sample_rows(kind, bases, dims), dims)
    return spread.T.reshape(dims.P, dims.M, -1)


def _eval_poly(q, r, kind: str, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    q = _check_dual(q, dims)
    tau, nu = float(r[0]), float(r[1])
    if not (0.0 <= tau < 1.0 and 0.0 <= nu < 1.0):
        raise ModelDomainError(f"(tau, nu) = ({tau}, {nu}) outside [0, 1)^2")
    grid = sample_grid(dims)
    phases = np.exp(2j * np.pi * (grid.n * tau + grid.p * nu))
    return (q * phases) @ np.conj(sample_rows(kind, bases, dims))


def eval_poly_r(q, r, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """f_r(r) = sum_m q_m e^{j2pi(n tau + p nu)} b_n."""
    return _eval_poly(q, r, "radar", bases, dims)


def eval_poly_c(q, c, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """f_c(c) = sum_m q_m e^{j2pi(n tau + p nu)} d_m."""
    return _eval_poly(q, c, "comms", bases, dims)


def _exp_tables(taus: np.ndarray, nus: np.ndarray, dims: Dimensions):
    n = np.arange(-dims.N, dims.N + 1)
    p = np.arange(dims.P)
    return np.exp(2j * np.pi * np.outer(taus, n)), np.exp(2j * np.pi * np.outer(nus, p))


def eval_poly_grid(q, kind: str, taus: Sequence[float], nus: Sequence[float],
                   bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """Polynomial values on the outer grid taus x nus, shape (G_tau, G_nu, dim)."""
    coeffs = cell_coefficients(q, kind, bases, dims)
    e_tau, e_nu = _exp_tables(np.asarray(taus, dtype=float), np.asarray(nus, dtype=float), dims)
    partial = np.einsum("in,pnd->pid", e_tau, coeffs)
    return np.einsum("kp,pid->ikd", e_nu, partial)


def poly_norm_grid(q, kind: str, taus: Sequence[float], nus: Sequence[float],
                   bases: SubspaceBases, dims: Dimensions,
                   chunk: Optional[int] = None) -> np.ndarray:
    """||f(tau_i, nu_k)||_2 on the outer grid, computed in tau chunks to bound memory."""
    taus = np.asarray(taus, dtype=float)
    nus = np.asarray(nus, dtype=float)
    coeffs = cell_coefficients(q, kind, bases, dims)
    e_tau, e_nu = _exp_tables(taus, nus, dims)
    dim = coeffs.shape[2]
    if chunk is None:
        chunk = max(1, GRID_CHUNK_ENTRIES // max(1, nus.size * dim))
    norms = np.empty((taus.size, nus.size))
    for start in range(0, taus.size, chunk):
        stop = min(start + chunk, taus.size)
        partial = np.einsum("in,pnd->pid", e_tau[start:stop], coeffs)
        values = np.einsum("kp,pid->ikd", e_nu, partial)
        norms[start:stop] = np.sqrt(np.sum(np.abs(values) ** 2, axis=2))
    return norms


def lifted_matrix(emitter: Emitter, dims: Dimensions) -> np.ndarray:
    """Ground-truth lifted matrix sum_k alpha_k x a(r_k)^H for an emitter with coefficients x."""
    atoms = steering_atoms(emitter.channel.supports, dims)
    channel = np.conj(atoms) @ emitter.channel.gains if atoms.shape[1] else np.zeros(dims.MP, dtype=complex)
    return np.outer(emitter.coefficients, channel)
