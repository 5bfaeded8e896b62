#!/usr/bin/env python3
"""
Squared Fejer kernels, their Fourier coefficients, interpolation weights and
wrap-around separation helpers.

These are oracle utilities:
1. fejer_1d evaluates the squared Fejer kernel (peak 1 at integer arguments)
2. fejer_coeffs returns its Fourier coefficients on the full support
3. weights builds the per-sample weights used by the interpolation argument
4. wraparound_dist / min_separation measure distances on the unit torus
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FejerSpec:
    """Order N of a squared Fejer kernel; T is the integer Fejer width."""
    N: int
    T: int = field(init=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"Fejer order must be a positive integer, got {self.N}")
        # T = N/2 + 1 for even N; odd N rounds up so the support still covers |n| <= N
        object.__setattr__(self, "T", int(math.ceil(self.N / 2)) + 1)

    @property
    def support(self) -> int:
        """Largest |n| with a nonzero coefficient."""
        return 2 * (self.T - 1)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.support, self.support + 1)


def fejer_1d(spec: FejerSpec, tau) -> np.ndarray:
    """phi_N(tau) = (sin(T pi tau) / (T sin(pi tau)))^4, equal to 1 at integer tau."""
    tau = np.asarray(tau, dtype=float)
    frac = tau - np.round(tau)
    den = spec.T * np.sin(np.pi * frac)
    num = np.sin(spec.T * np.pi * frac)
    singular = np.abs(den) < 1e-14
    ratio = np.divide(num, den, out=np.ones_like(frac), where=~singular)
    value = ratio ** 4
    return value if value.ndim else float(value)


def fejer_coeffs(spec: FejerSpec) -> np.ndarray:
    """Coefficients g_N(n) for n = -support..support so that phi_N(tau) = sum_n g_N(n) e^{j 2 pi tau n}."""
    T = spec.T
    ks = np.arange(-(T - 1), T)
    tri = 1.0 - np.abs(ks) / T
    # the kernel is the square of a Fejer kernel, so g is a triangle self-convolution
    g = np.convolve(tri, tri) / T ** 2
    return g


def coefficient_at(spec: FejerSpec, n) -> np.ndarray:
    """Look up g_N(n) for integer n (zero outside the support)."""
    n = np.asarray(n, dtype=int)
    g = fejer_coeffs(spec)
    out = np.zeros(n.shape, dtype=float)
    inside = np.abs(n) <= spec.support
    out[inside] = g[n[inside] + spec.support]
    return out


def fejer_from_coeffs(spec: FejerSpec, tau) -> np.ndarray:
    """Evaluate sum_n g_N(n) e^{j 2 pi tau n}; real by symmetry."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    phases = np.exp(2j * np.pi * np.outer(tau, spec.indices))
    return np.real(phases @ fejer_coeffs(spec))


def weights(dims) -> np.ndarray:
    """
    Per-sample weights omega = sqrt(N / g_N(n)) * sqrt(P / g_P(p)), ordered
    like the measurement (p-major, n-minor).
    """
    N_spec = FejerSpec(max(dims.N, 1))
    P_spec = FejerSpec(dims.P)
    n = np.arange(-dims.N, dims.N + 1)
    p = np.arange(dims.P)
    g_n = coefficient_at(N_spec, n)
    g_p = coefficient_at(P_spec, p)
    if np.any(g_n <= 0) or np.any(g_p <= 0):
        raise ValueError("Fejer coefficients vanish inside the sampling range")
    w_n = np.sqrt(max(dims.N, 1) / g_n)
    w_p = np.sqrt(dims.P / g_p)
    return np.outer(w_p, w_n).ravel()


def fejer_2d(dims, tau, nu) -> np.ndarray:
    """Separable 2-D squared Fejer kernel phi_N(tau) * phi_P(nu) on an outer grid."""
    phi_tau = np.atleast_1d(fejer_1d(FejerSpec(max(dims.N, 1)), tau))
    phi_nu = np.atleast_1d(fejer_1d(FejerSpec(dims.P), nu))
    return np.outer(phi_tau, phi_nu)


def fejer_2d_from_coeffs(dims, tau, nu) -> np.ndarray:
    """The same 2-D kernel assembled from the product coefficients g_N(n) g_P(p)."""
    n_spec = FejerSpec(max(dims.N, 1))
    p_spec = FejerSpec(dims.P)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    e_tau = np.exp(2j * np.pi * np.outer(tau, n_spec.indices)) * fejer_coeffs(n_spec)
    e_nu = np.exp(2j * np.pi * np.outer(nu, p_spec.indices)) * fejer_coeffs(p_spec)
    return np.real(e_tau.sum(axis=1)[:, None] * e_nu.sum(axis=1)[None, :])


def wraparound_dist(a, b):
    """Distance on [0,1) with wrap-around, e.g. |0.8 - 0.1| -> 0.3."""
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0))
    d = np.minimum(d, 1.0 - d)
    return d if np.ndim(d) else float(d)


def torus_dist(r1, r2) -> float:
    """Euclidean distance between two (tau, nu) points on the unit torus."""
    d = wraparound_dist(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float))
    return float(np.sqrt(np.sum(np.square(d))))


def _min_pairwise(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return math.inf
    d = wraparound_dist(values[:, None], values[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def min_separation(radar, comms: Optional[object] = None) -> Tuple[float, float]:
    """
    Smallest pairwise wrap-around separation (delta_tau, delta_nu) taken over
    pairs inside each channel set. Objects need .delays and .dopplers.
    """
    channel_sets: Iterable = [radar] if comms is None else [radar, comms]
    d_tau, d_nu = math.inf, math.inf
    for params in channel_sets:
        d_tau = min(d_tau, _min_pairwise(params.delays))
        d_nu = min(d_nu, _min_pairwise(params.dopplers))
    return d_tau, d_nu
