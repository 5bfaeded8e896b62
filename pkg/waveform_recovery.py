#!/usr/bin/env python3
"""
Waveform, message and gain recovery from localized supports, and scoring
against simulation truth.

1. build_design_matrix stacks one column block per support: the basis rows
   weighted by the conjugate steering atom of that support
2. solve_waveforms solves the least-squares fit with a conditioning check
3. factor_estimate splits each emitter's blocks into a gauge-fixed unit
   coefficient vector and per-support gains
4. score matches supports to truth (Hungarian assignment on the torus) and
   reports support, waveform, message and lifted-matrix errors
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import linear_sum_assignment

from fejer_kernels import wraparound_dist
from lifted_operators import lifted_matrix, sample_rows
from signal_model import (Dimensions, Emitter, Measurement, Scenario, SubspaceBases,
                          complex_to_json, sample_grid, steering_atoms)
from support_localizer import SupportEstimate, is_delay_only

logger = logging.getLogger(__name__)

COND_LIMIT = 1e10
SUCCESS_THRESHOLD = 1e-3


class RecoveryError(RuntimeError):
    """Raised when waveforms cannot be recovered from the given supports."""


class IllPosedDesignError(RecoveryError):
    """The design matrix is too ill-conditioned; names the most coherent support pair."""

    def __init__(self, message: str, pair: Optional[Tuple[str, str]] = None, condition: float = np.inf):
        super().__init__(message)
        self.pair = pair
        self.condition = condition


class DegenerateEstimateError(RecoveryError):
    """A recovered coefficient block is identically zero."""


@dataclass(frozen=True)
class DesignBlock:
    """Column range of one support inside the design matrix."""
    kind: str
    emitter: int
    support: Tuple[float, float]
    start: int
    width: int

    @property
    def label(self) -> str:
        return f"{self.kind}[{self.emitter}]@({self.support[0]:.6f}, {self.support[1]:.6f})"


@dataclass(eq=False)
class EmitterEstimate:
    kind: str
    supports: SupportEstimate
    gains: np.ndarray
    coefficients: np.ndarray
    signal: np.ndarray
    blocks: np.ndarray

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "supports": self.supports.to_dict(), "gains": complex_to_json(self.gains),
                "coefficients": complex_to_json(self.coefficients), "signal": complex_to_json(self.signal)}


@dataclass(eq=False)
class Estimate:
    """Recovered supports, gains, coefficients and signals for every emitter."""
    radar: List[EmitterEstimate]
    comms: List[EmitterEstimate]
    residual: float
    diagnostics: Dict = field(default_factory=dict)

    def _first(self, emitters: List[EmitterEstimate], attr: str):
        return getattr(emitters[0], attr) if emitters else None

    @property
    def radar_supports(self) -> Optional[SupportEstimate]:
        return self._first(self.radar, "supports")

    @property
    def comms_supports(self) -> Optional[SupportEstimate]:
        return self._first(self.comms, "supports")

    @property
    def gains_r(self):
        return self._first(self.radar, "gains")

    @property
    def gains_c(self):
        return self._first(self.comms, "gains")

    @property
    def u_hat(self):
        return self._first(self.radar, "coefficients")

    @property
    def v_hat(self):
        return self._first(self.comms, "coefficients")

    @property
    def s_hat(self):
        return self._first(self.radar, "signal")

    @property
    def g_hat(self):
        return self._first(self.comms, "signal")

    def to_dict(self) -> Dict:
        return {"radar": [e.to_dict() for e in self.radar], "comms": [e.to_dict() for e in self.comms],
                "residual": self.residual, "diagnostics": self.diagnostics}


# ---------------------------------------------------------------------------
# Design matrix and least squares
# ---------------------------------------------------------------------------

def _support_array(supports) -> np.ndarray:
    if isinstance(supports, SupportEstimate):
        return supports.supports
    if supports is None:
        return np.zeros((0, 2))
    return np.asarray(supports, dtype=float).reshape(-1, 2)


def build_design(groups: Sequence[Tuple[str, SubspaceBases, object]],
                 dims: Dimensions) -> Tuple[np.ndarray, List[DesignBlock]]:
    """
    Design matrix for (kind, bases, supports) groups in order. Column block k
    of a group is conj(a(r_k)) at each sample's phase cell times that
    sample's basis row.
    """
    cell = sample_grid(dims).cell
    columns, blocks = [], []
    start = 0
    counters = {"radar": 0, "comms": 0}
    for kind, bases, supports in groups:
        emitter = counters[kind]
        counters[kind] += 1
        points = _support_array(supports)
        if points.shape[0] == 0:
            continue
        rows = sample_rows(kind, bases, dims)
        atoms = np.conj(steering_atoms(points, dims))[cell]
        for k, point in enumerate(points):
            columns.append(atoms[:, k:k + 1] * rows)
            blocks.append(DesignBlock(kind, emitter, (float(point[0]), float(point[1])), start, rows.shape[1]))
            start += rows.shape[1]
    if not columns:
        raise RecoveryError("no supports in any channel")
    return np.hstack(columns), blocks


def build_design_matrix(supports_r, supports_c, bases: SubspaceBases, dims: Dimensions) -> np.ndarray:
    """W0 = [W_r, W_c] for a single radar and a single comms emitter."""
    W0, _ = build_design([("radar", bases, supports_r), ("comms", bases, supports_c)], dims)
    return W0


def _most_coherent_pair(W0: np.ndarray, blocks: Sequence[DesignBlock]) -> Tuple[Optional[Tuple[str, str]], float]:
    bases = []
    for blk in blocks:
        Q, _ = np.linalg.qr(W0[:, blk.start:blk.start + blk.width])
        bases.append(Q)
    worst, pair = -1.0, None
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            coherence = float(np.linalg.svd(bases[i].conj().T @ bases[j], compute_uv=False)[0])
            if coherence > worst:
                worst, pair = coherence, (blocks[i].label, blocks[j].label)
    return pair, worst


def solve_waveforms(y, W0: np.ndarray, cond_limit: float = COND_LIMIT,
                    blocks: Optional[Sequence[DesignBlock]] = None) -> Tuple[np.ndarray, float]:
    """Least-squares z minimising ||y - W0 z||_2 via QR; returns (z, residual norm)."""
    y = np.asarray(y.y if isinstance(y, Measurement) else y, dtype=complex)
    W0 = np.asarray(W0, dtype=complex)
    if W0.shape[0] != y.size:
        raise RecoveryError(f"design has {W0.shape[0]} rows, measurement has {y.size}")
    if W0.shape[1] == 0:
        return np.zeros(0, dtype=complex), float(np.linalg.norm(y))
    singular = np.linalg.svd(W0, compute_uv=False)
    condition = np.inf if W0.shape[1] > W0.shape[0] or singular[-1] == 0 else singular[0] / singular[-1]
    if condition > cond_limit:
        pair, coherence = _most_coherent_pair(W0, blocks) if blocks and len(blocks) > 1 else (None, np.nan)
        message = f"design matrix condition number {condition:.3e} exceeds {cond_limit:.1e}"
        if pair is not None:
            message += f"; most coherent supports {pair[0]} and {pair[1]} (coherence {coherence:.6f})"
        raise IllPosedDesignError(message, pair, condition)
    Q, R = np.linalg.qr(W0)
    z = solve_triangular(R, Q.conj().T @ y)
    residual = float(np.linalg.norm(y - W0 @ z))
    logger.debug(f"Least squares: {W0.shape}, condition {condition:.3e}, residual {residual:.3e}")
    return z, residual


# ---------------------------------------------------------------------------
# Factorisation
# ---------------------------------------------------------------------------

def canonical_gauge(vec: np.ndarray) -> np.ndarray:
    """Rotate so the first non-negligible entry is real and positive."""
    vec = np.asarray(vec, dtype=complex)
    if vec.size == 0:
        return vec
    magnitudes = np.abs(vec)
    first = int(np.argmax(magnitudes > 1e-12 * magnitudes.max()))
    if magnitudes[first] == 0:
        return vec
    return vec * (np.conj(vec[first]) / magnitudes[first])


def _dominant_direction(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    U, S, _ = np.linalg.svd(matrix, full_matrices=False)
    return canonical_gauge(U[:, 0]), float(S[0])


def factor_estimate(z_hat: np.ndarray, dims: Dimensions, gauge: str = "global",
                    dim: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split one emitter's stacked blocks [z_1; ...; z_K] (each alpha_k x) into a
    unit coefficient vector x_hat and gains. gauge='per_pulse' fixes the
    phase of every length-J pulse block separately. Returns (gains, x_hat, blocks).
    """
    z_hat = np.asarray(z_hat, dtype=complex)
    if dim is None:
        raise RecoveryError("block width must be given")
    if z_hat.size == 0:
        return np.zeros(0, dtype=complex), np.zeros(dim, dtype=complex), np.zeros((0, dim), dtype=complex)
    if z_hat.size % dim:
        raise RecoveryError(f"z of length {z_hat.size} does not split into blocks of {dim}")
    blocks = z_hat.reshape(-1, dim)
    if not np.any(np.abs(blocks) > 0):
        raise DegenerateEstimateError("every recovered block is zero; the coefficient direction is undefined")
    stacked = blocks.T
    if gauge == "global":
        x_hat, _ = _dominant_direction(stacked)
    elif gauge == "per_pulse":
        pieces = []
        for start in range(0, dim, dims.J):
            direction, weight = _dominant_direction(stacked[start:start + dims.J])
            pieces.append(direction * weight)
        x_hat = np.concatenate(pieces)
        x_hat = x_hat / np.linalg.norm(x_hat)
    else:
        raise RecoveryError(f"unknown gauge '{gauge}'")
    gains = np.conj(x_hat) @ stacked
    return gains, x_hat, blocks


def _emitter_estimate(kind: str, supports: SupportEstimate, z_blocks: np.ndarray, bases: SubspaceBases,
                      dims: Dimensions) -> EmitterEstimate:
    dim = dims.radar_dim if kind == "radar" else dims.comms_dim
    gauge = "per_pulse" if is_delay_only(kind, bases) else "global"
    gains, x_hat, blocks = factor_estimate(z_blocks, dims, gauge, dim)
    signal = bases.B @ x_hat if kind == "radar" else bases.D @ x_hat
    return EmitterEstimate(kind, supports, gains, x_hat, signal, blocks)


def recover(measurement: Measurement, radar_supports: Sequence[SupportEstimate],
            comms_supports: Sequence[SupportEstimate], radar_bases: Sequence[SubspaceBases],
            comms_bases: Sequence[SubspaceBases], cond_limit: float = COND_LIMIT) -> Estimate:
    """Least-squares recovery for every emitter given its localized supports."""
    dims = measurement.dims
    groups = [("radar", b, s) for b, s in zip(radar_bases, radar_supports)] + \
             [("comms", b, s) for b, s in zip(comms_bases, comms_supports)]
    if all(_support_array(s).shape[0] == 0 for _, _, s in groups):
        logger.info("No supports localized; returning an empty estimate")
        return Estimate(
            [EmitterEstimate("radar", s, np.zeros(0, complex), np.zeros(dims.radar_dim, complex),
                             np.zeros(dims.M, complex), np.zeros((0, dims.radar_dim), complex))
             for s in radar_supports],
            [EmitterEstimate("comms", s, np.zeros(0, complex), np.zeros(dims.comms_dim, complex),
                             np.zeros(dims.length, complex), np.zeros((0, dims.comms_dim), complex))
             for s in comms_supports],
            float(np.linalg.norm(measurement.y)), {"empty": True})
    W0, blocks = build_design(groups, dims)
    z_hat, residual = solve_waveforms(measurement.y, W0, cond_limit, blocks)

    estimates = {"radar": [], "comms": []}
    counters = {"radar": 0, "comms": 0}
    for kind, bases, supports in groups:
        emitter = counters[kind]
        counters[kind] += 1
        mine = [blk for blk in blocks if blk.kind == kind and blk.emitter == emitter]
        z_blocks = np.concatenate([z_hat[blk.start:blk.start + blk.width] for blk in mine]) if mine \
            else np.zeros(0, dtype=complex)
        if not isinstance(supports, SupportEstimate):
            supports = SupportEstimate(_support_array(supports), np.ones(len(mine)), kind)
        estimates[kind].append(_emitter_estimate(kind, supports, z_blocks, bases, dims))
    return Estimate(estimates["radar"], estimates["comms"], residual,
                    {"design_shape": list(W0.shape), "relative_residual":
                     residual / max(float(np.linalg.norm(measurement.y)), 1e-300)})


def oracle_estimate(scenario: Scenario) -> Estimate:
    """Estimate assembled directly from the scenario truth."""
    dims = scenario.dims

    def build(emitter: Emitter) -> EmitterEstimate:
        kind = emitter.kind
        delay_only = is_delay_only(kind, emitter.bases)
        supports = SupportEstimate(emitter.channel.supports, np.ones(emitter.channel.count), kind, delay_only)
        x = emitter.coefficients
        signal = emitter.bases.B @ x if kind == "radar" else emitter.bases.D @ x
        blocks = np.outer(emitter.channel.gains, x)
        return EmitterEstimate(kind, supports, emitter.channel.gains.copy(), x.copy(), signal, blocks)

    return Estimate([build(e) for e in scenario.radar_emitters()],
                    [build(e) for e in scenario.comms_emitters()], 0.0, {"oracle": True})


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def match_supports(estimated: np.ndarray, truth: np.ndarray, delay_only: bool = False):
    """Minimum-cost assignment on the wrap-around metric; returns (est_idx, true_idx, distances)."""
    estimated = np.asarray(estimated, dtype=float).reshape(-1, 2)
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    if estimated.shape[0] == 0 or truth.shape[0] == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    d_tau = wraparound_dist(estimated[:, None, 0], truth[None, :, 0])
    if delay_only:
        cost = np.asarray(d_tau)
    else:
        d_nu = wraparound_dist(estimated[:, None, 1], truth[None, :, 1])
        cost = np.sqrt(np.square(d_tau) + np.square(d_nu))
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, cost[rows, cols]


def aligned_error(truth: np.ndarray, estimate: np.ndarray, block: Optional[int] = None,
                  relative: bool = True) -> float:
    """
    ||t - c e|| with the optimal complex scale c, per segment of length block
    if given, divided by ||t|| unless relative is False.
    """
    truth = np.asarray(truth, dtype=complex)
    estimate = np.asarray(estimate, dtype=complex)
    norm = np.linalg.norm(truth)
    if norm == 0:
        return float(np.linalg.norm(estimate))
    segments = [slice(0, truth.size)] if block is None else \
        [slice(i, i + block) for i in range(0, truth.size, block)]
    total = 0.0
    for seg in segments:
        t, e = truth[seg], estimate[seg]
        denom = np.vdot(e, e)
        c = np.vdot(e, t) / denom if abs(denom) > 0 else 0.0
        total += np.linalg.norm(t - c * e) ** 2
    return float(np.sqrt(total) / norm) if relative else float(np.sqrt(total))


def _lifted_error(truth: Emitter, estimate: EmitterEstimate, dims: Dimensions) -> float:
    Z = lifted_matrix(truth, dims)
    atoms = steering_atoms(estimate.supports.supports, dims) if estimate.supports.count else \
        np.zeros((dims.MP, 0), dtype=complex)
    if estimate.blocks.shape[0] != atoms.shape[1]:
        return float("nan")
    Z_hat = estimate.blocks.T @ np.conj(atoms).T
    norm = np.linalg.norm(Z)
    return float(np.linalg.norm(Z_hat - Z) / norm) if norm else float(np.linalg.norm(Z_hat))


def _score_channel(kind: str, truths: List[Emitter], estimates: List[EmitterEstimate], dims: Dimensions) -> Dict:
    sq_support, sq_delay, sq_doppler = 0.0, 0.0, 0.0
    found, expected = 0, 0
    counts_match = len(truths) == len(estimates)
    signal_errors, absolute_errors, lifted_errors, per_emitter = [], [], [], []
    delay_only = False
    for i, truth in enumerate(truths):
        expected += truth.channel.count
        if i >= len(estimates):
            counts_match = False
            continue
        est = estimates[i]
        delay_only = delay_only or est.supports.delay_only
        found += est.supports.count
        if est.supports.count != truth.channel.count:
            counts_match = False
        rows, cols, dist = match_supports(est.supports.supports, truth.channel.supports, est.supports.delay_only)
        d_tau = np.asarray(wraparound_dist(est.supports.supports[rows, 0], truth.channel.delays[cols]))
        d_nu = np.asarray(wraparound_dist(est.supports.supports[rows, 1], truth.channel.dopplers[cols]))
        sq_support += float(np.sum(np.square(dist)))
        sq_delay += float(np.sum(np.square(d_tau)))
        sq_doppler += float(np.sum(np.square(d_nu)))
        if kind == "radar":
            true_signal = truth.bases.B @ truth.coefficients
            block = None
        else:
            true_signal = truth.bases.D @ truth.coefficients
            block = dims.M if est.supports.delay_only else None
        signal_err = aligned_error(true_signal, est.signal, block)
        signal_errors.append(signal_err)
        absolute_errors.append(aligned_error(true_signal, est.signal, block, relative=False))
        lifted_errors.append(_lifted_error(truth, est, dims) if est.supports.count else float("nan"))
        per_emitter.append({"matched": [[int(r), int(c), float(d)] for r, c, d in zip(rows, cols, dist)],
                            "signal_error": signal_err})
    support_error = float(np.sqrt(sq_support))
    signal_error = max(signal_errors) if signal_errors else float("nan")
    supports_ok = counts_match and support_error < SUCCESS_THRESHOLD
    return {
        f"{kind}_true_count": expected,
        f"{kind}_count": found,
        f"{kind}_support_error": support_error if found else float("nan"),
        f"{kind}_delay_error": float(np.sqrt(sq_delay)) if found else float("nan"),
        f"{kind}_doppler_error": float("nan") if delay_only or not found else float(np.sqrt(sq_doppler)),
        f"{kind}_signal_error": signal_error,
        f"{kind}_signal_error_abs": max(absolute_errors) if absolute_errors else float("nan"),
        f"{kind}_z_error": max(lifted_errors) if lifted_errors else float("nan"),
        f"{kind}_success": bool(supports_ok),
        f"{kind}_emitters": per_emitter,
    }


def score(estimate: Estimate, truth: Scenario) -> Dict:
    """
    Metrics record. success requires both channels to have the true number
    of supports with an l2 support error below 1e-3 and a relative message
    error ||g - c g_hat|| / ||g|| below 1e-3, with c the least-squares complex
    scale. message_error_abs and waveform_error_abs hold the absolute
    ||g - c g_hat||_2 alongside.
    """
    dims = truth.dims
    record = {"residual": estimate.residual}
    record.update(_score_channel("radar", truth.radar_emitters(), estimate.radar, dims))
    record.update(_score_channel("comms", truth.comms_emitters(), estimate.comms, dims))
    record["waveform_error"] = record["radar_signal_error"]
    record["message_error"] = record["comms_signal_error"]
    record["waveform_error_abs"] = record["radar_signal_error_abs"]
    record["message_error_abs"] = record["comms_signal_error_abs"]
    message_ok = bool(np.isfinite(record["message_error"]) and record["message_error"] < SUCCESS_THRESHOLD)
    if record["comms_true_count"] == 0:
        message_ok = True
    radar_ok = record["radar_success"] or not truth.radar_emitters()
    comms_ok = record["comms_success"] or not truth.comms_emitters()
    has_truth = record["radar_true_count"] + record["comms_true_count"] > 0
    record["success"] = bool(has_truth and radar_ok and comms_ok and message_ok)
    return record
