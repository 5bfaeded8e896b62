#!/usr/bin/env python3
"""
Support localization from dual polynomials.

1. Scan ||f(tau, nu)|| on a uniform torus grid
2. Keep grid local maxima (8 neighbours, wrapping edges) near the bound
3. Refine each candidate by damped Newton ascent on ||f||^2
4. Merge candidates closer than merge_radius, keeping the higher peak

Comms polynomials built on block-diagonal bases do not depend on Doppler;
those are localized on the delay profile alone.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from fejer_kernels import torus_dist, wraparound_dist
from lifted_operators import cell_coefficients, poly_norm_grid
from signal_model import Dimensions, ModelDomainError, SubspaceBases

logger = logging.getLogger(__name__)

DEFAULT_GRID = (256, 256)
DEFAULT_EPS_LOC = 1e-2
DEFAULT_REFINE_ITERS = 50
STATIONARITY_TOL = 1e-10


def default_merge_radius(dims: Dimensions) -> float:
    return 0.25 * min(1.0 / dims.M, 1.0 / dims.P)


def is_delay_only(kind: str, bases: SubspaceBases) -> bool:
    """Comms polynomials on block bases are constant along Doppler."""
    return kind == "comms" and bases.layout == "block"


@dataclass(eq=False)
class SupportEstimate:
    supports: np.ndarray
    peak_norms: np.ndarray
    kind: str
    delay_only: bool = False

    def __post_init__(self):
        self.supports = np.asarray(self.supports, dtype=float).reshape(-1, 2)
        self.peak_norms = np.asarray(self.peak_norms, dtype=float).ravel()

    @property
    def count(self) -> int:
        return int(self.supports.shape[0])

    @classmethod
    def empty(cls, kind: str, delay_only: bool = False) -> "SupportEstimate":
        return cls(np.zeros((0, 2)), np.zeros(0), kind, delay_only)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "delay_only": self.delay_only, "supports": self.supports.tolist(),
                "peak_norms": self.peak_norms.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "SupportEstimate":
        return cls(np.asarray(data["supports"], dtype=float), data["peak_norms"], data["kind"],
                   data.get("delay_only", False))


def grid_axes(grid: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    g_tau, g_nu = int(grid[0]), int(grid[1])
    if g_tau < 2 or g_nu < 2:
        raise ModelDomainError(f"grid must be at least 2x2, got {grid}")
    return np.arange(g_tau) / g_tau, np.arange(g_nu) / g_nu


def grid_scan(q, bases: SubspaceBases, dims: Dimensions, kind: str,
              grid: Tuple[int, int] = DEFAULT_GRID) -> np.ndarray:
    """||f(i/G_tau, k/G_nu)||_2 for every grid cell."""
    taus, nus = grid_axes(grid)
    return poly_norm_grid(q, kind, taus, nus, bases, dims)


def _wrap(values: np.ndarray) -> np.ndarray:
    values = np.mod(values, 1.0)
    values[values >= 1.0] = 0.0
    return values


class PolyNormModel:
    """||f||^2 with its gradient and Hessian in (tau, nu)."""

    def __init__(self, q, bases: SubspaceBases, dims: Dimensions, kind: str):
        self.coeffs = cell_coefficients(q, kind, bases, dims)
        self.w_n = 2j * np.pi * np.arange(-dims.N, dims.N + 1)
        self.w_p = 2j * np.pi * np.arange(dims.P)

    def value(self, point: np.ndarray) -> float:
        e_n = np.exp(self.w_n * point[0])
        e_p = np.exp(self.w_p * point[1])
        f = e_p @ np.einsum("n,pnd->pd", e_n, self.coeffs)
        return float(np.real(np.vdot(f, f)))

    def evaluate(self, point: np.ndarray):
        e_n = np.exp(self.w_n * point[0])
        e_p = np.exp(self.w_p * point[1])
        a0 = np.einsum("n,pnd->pd", e_n, self.coeffs)
        a1 = np.einsum("n,pnd->pd", self.w_n * e_n, self.coeffs)
        a2 = np.einsum("n,pnd->pd", self.w_n ** 2 * e_n, self.coeffs)
        f = e_p @ a0
        f_t = e_p @ a1
        f_tt = e_p @ a2
        f_n = (self.w_p * e_p) @ a0
        f_nn = (self.w_p ** 2 * e_p) @ a0
        f_tn = (self.w_p * e_p) @ a1

        def re(a, b):
            return float(np.real(np.vdot(a, b)))

        h = re(f, f)
        grad = 2.0 * np.array([re(f, f_t), re(f, f_n)])
        hess = 2.0 * np.array([
            [re(f_t, f_t) + re(f, f_tt), re(f_t, f_n) + re(f, f_tn)],
            [re(f_t, f_n) + re(f, f_tn), re(f_n, f_n) + re(f, f_nn)],
        ])
        return h, grad, hess


def _refine(model: PolyNormModel, start: np.ndarray, iters: int, delay_only: bool,
            max_step: float) -> Tuple[np.ndarray, float]:
    """Damped Newton ascent on ||f||^2; accepted steps never lower the value."""
    point = np.array(start, dtype=float)
    h, grad, hess = model.evaluate(point)
    active = 1 if delay_only else 2
    for _ in range(iters):
        g = grad[:active]
        H = hess[:active, :active]
        if np.linalg.norm(g) <= STATIONARITY_TOL:
            break
        eigs = np.linalg.eigvalsh(H)
        if eigs[-1] < 0:
            step = -np.linalg.solve(H, g)
        else:
            step = g / max(np.max(np.abs(eigs)), 1e-12)
        length = np.linalg.norm(step)
        if length > max_step:
            step *= max_step / length
        full = np.zeros(2)
        full[:active] = step
        t = 1.0
        accepted = False
        while t > 1e-10:
            candidate = _wrap(point + t * full)
            value = model.value(candidate)
            if value >= h:
                point = candidate
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        h, grad, hess = model.evaluate(point)
    return point, float(np.sqrt(max(h, 0.0)))


def _local_maxima(norms: np.ndarray, delay_only: bool) -> np.ndarray:
    if delay_only:
        profile = norms[:, 0]
        mask = (profile >= np.roll(profile, 1)) & (profile >= np.roll(profile, -1))
        idx = np.nonzero(mask)[0]
        return np.column_stack([idx, np.zeros_like(idx)])
    mask = np.ones_like(norms, dtype=bool)
    for di in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if di == 0 and dk == 0:
                continue
            mask &= norms >= np.roll(np.roll(norms, di, axis=0), dk, axis=1)
    return np.argwhere(mask)


def _merge(points: np.ndarray, peaks: np.ndarray, radius: float, delay_only: bool):
    order = np.argsort(-peaks, kind="stable")
    kept = []
    for i in order:
        if delay_only:
            close = any(wraparound_dist(points[i, 0], points[j, 0]) < radius for j in kept)
        else:
            close = any(torus_dist(points[i], points[j]) < radius for j in kept)
        if not close:
            kept.append(i)
    kept = sorted(kept, key=lambda i: (points[i, 0], points[i, 1]))
    return points[kept], peaks[kept]


def refine_supports(q, supports, bases: SubspaceBases, dims: Dimensions, kind: str,
                    refine_iters: int = DEFAULT_REFINE_ITERS,
                    delay_only: Optional[bool] = None) -> SupportEstimate:
    """Refine given support points without scanning."""
    delay_only = is_delay_only(kind, bases) if delay_only is None else delay_only
    supports = np.asarray(supports, dtype=float).reshape(-1, 2)
    model = PolyNormModel(q, bases, dims, kind)
    max_step = 0.5 * min(1.0 / dims.M, 1.0 / dims.P)
    refined, peaks = [], []
    for point in supports:
        r, peak = _refine(model, point, refine_iters, delay_only, max_step)
        refined.append(r)
        peaks.append(peak)
    return SupportEstimate(np.array(refined).reshape(-1, 2), np.array(peaks), kind, delay_only)


def locate_supports(q, bases: SubspaceBases, dims: Dimensions, kind: str,
                    eps_loc: float = DEFAULT_EPS_LOC, grid: Tuple[int, int] = DEFAULT_GRID,
                    refine_iters: int = DEFAULT_REFINE_ITERS, bound: float = 1.0,
                    merge_radius: Optional[float] = None,
                    delay_only: Optional[bool] = None,
                    norms: Optional[np.ndarray] = None) -> SupportEstimate:
    """
    Supports where ||f|| reaches the bound: grid local maxima within a
    2 eps_loc margin are refined, and refined peaks of at least
    bound (1 - eps_loc) are kept.
    """
    delay_only = is_delay_only(kind, bases) if delay_only is None else delay_only
    merge_radius = default_merge_radius(dims) if merge_radius is None else merge_radius
    taus, nus = grid_axes(grid)
    if norms is None:
        norms = grid_scan(q, bases, dims, kind, grid)
    cells = _local_maxima(norms, delay_only)
    values = norms[cells[:, 0], cells[:, 1]] if cells.size else np.zeros(0)
    cells = cells[values >= bound * (1.0 - 2.0 * eps_loc)]
    if cells.size == 0:
        logger.info(f"No {kind} candidates above {bound * (1.0 - 2.0 * eps_loc):.4f}")
        return SupportEstimate.empty(kind, delay_only)

    starts = np.column_stack([taus[cells[:, 0]], nus[cells[:, 1]]])
    refined = refine_supports(q, starts, bases, dims, kind, refine_iters, delay_only)
    keep = refined.peak_norms >= bound * (1.0 - eps_loc)
    points, peaks = refined.supports[keep], refined.peak_norms[keep]
    if delay_only:
        points[:, 1] = 0.0
    points, peaks = _merge(points, peaks, merge_radius, delay_only)
    logger.info(f"Located {len(peaks)} {kind} supports from {len(cells)} grid candidates")
    return SupportEstimate(points, peaks, kind, delay_only)


def write_grid_csv(path: str, norms: np.ndarray, grid: Optional[Tuple[int, int]] = None) -> None:
    """Write a norm surface as tau,nu,norm rows with 17 significant digits."""
    taus, nus = grid_axes(grid or norms.shape)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["tau", "nu", "norm"])
        for i, tau in enumerate(taus):
            for k, nu in enumerate(nus):
                writer.writerow([f"{tau:.17g}", f"{nu:.17g}", f"{norms[i, k]:.17g}"])
