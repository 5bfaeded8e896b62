#!/usr/bin/env python3
"""
Signal model for overlaid radar and communications returns.

This module:
1. Defines the domain value types (dimensions, channels, bases, coefficients,
   scenario variants, measurements)
2. Maps between the sample index m = n + N + M(s + S p) and (n, p, s)
3. Builds delay-Doppler steering atoms
4. Draws random subspace bases and complete scenarios from a seed
5. Synthesizes the overlaid frequency-domain measurement for every variant
6. Serializes scenarios and measurements to JSON (complex numbers as [re, im])
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fejer_kernels import min_separation, wraparound_dist

logger = logging.getLogger(__name__)

VARIANT_KINDS = ("baseline", "noisy", "unsync", "multi_emitter", "unequal_pri")
BASIS_LAYOUTS = ("block", "dense")


class ModelDomainError(ValueError):
    """Raised for out-of-range parameters, mismatched dimensions or inconsistent variants."""


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def complex_to_json(values) -> list:
    """Complex array -> nested lists with [re, im] leaves."""
    arr = np.asarray(values, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        return np.zeros(arr.shape[:-1] if arr.ndim > 1 else (0,), dtype=complex)
    return arr[..., 0] + 1j * arr[..., 1]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dimensions:
    """Problem sizes. M = 2N + 1 frequency samples, P pulses, J subspace size."""
    M: int
    P: int
    J: int
    L: int = 0
    Q: int = 0
    sub_symbols: int = 1
    N: int = field(init=False)

    def __post_init__(self):
        for name in ("M", "P", "J", "L", "Q", "sub_symbols"):
            value = getattr(self, name)
            if int(value) != value:
                raise ModelDomainError(f"{name} must be an integer, got {value}")
            object.__setattr__(self, name, int(value))
        if self.M < 1 or self.M % 2 == 0:
            raise ModelDomainError(f"M must be a positive odd integer, got {self.M}")
        object.__setattr__(self, "N", (self.M - 1) // 2)
        if self.P < 1 or self.J < 1 or self.sub_symbols < 1:
            raise ModelDomainError(f"P, J and sub_symbols must be positive, got P={self.P}, J={self.J}, "
                                   f"sub_symbols={self.sub_symbols}")
        if self.L < 0 or self.Q < 0:
            raise ModelDomainError(f"L and Q must be nonnegative, got L={self.L}, Q={self.Q}")
        if self.J > self.M:
            logger.warning(f"J={self.J} exceeds M={self.M}; recovery is likely ill-posed")

    @property
    def MP(self) -> int:
        """Number of distinct delay-Doppler phase cells (size of the Gram block)."""
        return self.M * self.P

    @property
    def length(self) -> int:
        """Number of measurement samples."""
        return self.M * self.P * self.sub_symbols

    @property
    def radar_dim(self) -> int:
        return self.J * self.sub_symbols

    @property
    def comms_dim(self) -> int:
        return self.P * self.sub_symbols * self.J

    def to_dict(self) -> Dict:
        return {"M": self.M, "N": self.N, "P": self.P, "J": self.J, "L": self.L,
                "Q": self.Q, "sub_symbols": self.sub_symbols}

    @classmethod
    def from_dict(cls, data: Dict) -> "Dimensions":
        dims = cls(M=data["M"], P=data["P"], J=data["J"], L=data.get("L", 0),
                   Q=data.get("Q", 0), sub_symbols=data.get("sub_symbols", 1))
        if "N" in data and data["N"] != dims.N:
            raise ModelDomainError(f"N={data['N']} inconsistent with M={dims.M}")
        return dims


@dataclass(frozen=True, eq=False)
class ChannelParams:
    """Sparse delay-Doppler channel with unit-modulus gains."""
    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        delays = np.atleast_1d(np.asarray(self.delays, dtype=float))
        dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if not (gains.shape == delays.shape == dopplers.shape) or gains.ndim != 1:
            raise ModelDomainError("gains, delays and dopplers must be vectors of equal length")
        if gains.size and np.max(np.abs(np.abs(gains) - 1.0)) > 1e-9:
            raise ModelDomainError("channel gains must have unit modulus")
        for name, values in (("delays", delays), ("dopplers", dopplers)):
            if values.size and (np.any(values < 0.0) or np.any(values >= 1.0)):
                raise ModelDomainError(f"{name} must lie in [0, 1): {values}")
        object.__setattr__(self, "gains", _frozen(gains))
        object.__setattr__(self, "delays", _frozen(delays))
        object.__setattr__(self, "dopplers", _frozen(dopplers))

    @property
    def count(self) -> int:
        return int(self.gains.size)

    @property
    def supports(self) -> np.ndarray:
        """(count x 2) array of (tau, nu) pairs."""
        return np.column_stack([self.delays, self.dopplers]).reshape(-1, 2)

    @classmethod
    def empty(cls) -> "ChannelParams":
        return cls(np.zeros(0, dtype=complex), np.zeros(0), np.zeros(0))

    def to_dict(self) -> Dict:
        return {"gains": complex_to_json(self.gains), "delays": self.delays.tolist(),
                "dopplers": self.dopplers.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "ChannelParams":
        return cls(complex_from_json(data["gains"]), np.asarray(data["delays"], dtype=float),
                   np.asarray(data["dopplers"], dtype=float))


@dataclass(frozen=True, eq=False)
class SubspaceBases:
    """
    Known subspace bases. Row n of B is b_n^H; row m of D is d_m^H.
    With the block layout D is block diagonal with one M x J block per
    (pulse, sub-symbol); with the dense layout every d_m spans all columns.
    """
    B: np.ndarray
    D: np.ndarray
    layout: str = "block"

    def __post_init__(self):
        if self.layout not in BASIS_LAYOUTS:
            raise ModelDomainError(f"unknown basis layout '{self.layout}'")
        object.__setattr__(self, "B", _frozen(np.asarray(self.B, dtype=complex)))
        object.__setattr__(self, "D", _frozen(np.asarray(self.D, dtype=complex)))
        if self.B.ndim != 2 or self.D.ndim != 2:
            raise ModelDomainError("bases must be matrices")

    def check(self, dims: Dimensions) -> None:
        """Raise ModelDomainError unless the bases match dims."""
        if self.B.shape != (dims.M, dims.radar_dim):
            raise ModelDomainError(f"B has shape {self.B.shape}, expected {(dims.M, dims.radar_dim)}")
        if self.D.shape != (dims.length, dims.comms_dim):
            raise ModelDomainError(f"D has shape {self.D.shape}, expected {(dims.length, dims.comms_dim)}")
        if self.layout == "block":
            mask = block_mask(dims)
            if np.any(np.abs(self.D[~mask]) > 0):
                raise ModelDomainError("block-layout D has entries off its diagonal blocks")

    def to_dict(self) -> Dict:
        return {"B": complex_to_json(self.B), "D": complex_to_json(self.D), "layout": self.layout}

    @classmethod
    def from_dict(cls, data: Dict) -> "SubspaceBases":
        return cls(complex_from_json(data["B"]), complex_from_json(data["D"]), data.get("layout", "block"))


@dataclass(frozen=True, eq=False)
class WaveformCoefficients:
    """Radar coefficients u (length J~) and comms coefficients v (length P S J), unit norm."""
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=complex))
        v = np.atleast_1d(np.asarray(self.v, dtype=complex))
        for name, vec in (("u", u), ("v", v)):
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ModelDomainError(f"{name} must be nonzero")
            if abs(norm - 1.0) > 1e-9:
                vec = vec / norm
            object.__setattr__(self, name, _frozen(vec))

    def to_dict(self) -> Dict:
        return {"u": complex_to_json(self.u), "v": complex_to_json(self.v)}

    @classmethod
    def from_dict(cls, data: Dict) -> "WaveformCoefficients":
        return cls(complex_from_json(data["u"]), complex_from_json(data["v"]))


@dataclass(frozen=True)
class Variant:
    """Scenario variant and its parameters."""
    kind: str = "baseline"
    snr_db: Optional[float] = None
    mu: Optional[float] = None
    sync_lag: float = 0.0
    rho: float = 1.0
    n_radar: int = 1
    n_comms: int = 1
    sub_symbols: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in VARIANT_KINDS:
            raise ModelDomainError(f"unknown variant '{self.kind}', expected one of {VARIANT_KINDS}")
        if self.kind == "noisy" and self.snr_db is None and self.mu is None:
            raise ModelDomainError("noisy variant needs snr_db or an explicit mu")
        if self.mu is not None and self.mu <= 0:
            raise ModelDomainError(f"mu must be positive, got {self.mu}")
        if self.kind == "unsync" and not (self.rho > 0):
            raise ModelDomainError(f"unsync variant needs rho > 0, got {self.rho}")
        if not math.isfinite(self.sync_lag):
            raise ModelDomainError("sync_lag must be finite")
        if self.n_radar < 0 or self.n_comms < 0:
            raise ModelDomainError("emitter counts must be nonnegative")
        if self.kind != "multi_emitter" and (self.n_radar, self.n_comms) != (1, 1):
            raise ModelDomainError("emitter counts other than 1 need the multi_emitter variant")
        if self.sub_symbols < 1 or (self.kind != "unequal_pri" and self.sub_symbols != 1):
            raise ModelDomainError("sub_symbols > 1 needs the unequal_pri variant")

    @classmethod
    def baseline(cls) -> "Variant":
        return cls()

    @classmethod
    def noisy(cls, snr_db: Optional[float] = None, mu: Optional[float] = None) -> "Variant":
        return cls(kind="noisy", snr_db=snr_db, mu=mu)

    @classmethod
    def unsync(cls, sync_lag: float, rho: float = 1.0) -> "Variant":
        return cls(kind="unsync", sync_lag=sync_lag, rho=rho)

    @classmethod
    def multi_emitter(cls, n_radar: int, n_comms: int) -> "Variant":
        return cls(kind="multi_emitter", n_radar=n_radar, n_comms=n_comms)

    @classmethod
    def unequal_pri(cls, sub_symbols: int) -> "Variant":
        return cls(kind="unequal_pri", sub_symbols=sub_symbols)

    @property
    def radar_bound(self) -> float:
        """Sup-norm bound of the radar dual polynomial."""
        return self.rho if self.kind == "unsync" else 1.0

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "snr_db": self.snr_db, "mu": self.mu, "sync_lag": self.sync_lag,
                "rho": self.rho, "n_radar": self.n_radar, "n_comms": self.n_comms,
                "sub_symbols": self.sub_symbols}

    @classmethod
    def from_dict(cls, data: Dict) -> "Variant":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True, eq=False)
class Emitter:
    """One radar or comms source: its bases, channel and unit-norm coefficients."""
    kind: str
    bases: SubspaceBases
    channel: ChannelParams
    coefficients: np.ndarray

    def __post_init__(self):
        if self.kind not in ("radar", "comms"):
            raise ModelDomainError(f"emitter kind must be radar or comms, got '{self.kind}'")
        coef = np.asarray(self.coefficients, dtype=complex)
        object.__setattr__(self, "coefficients", _frozen(coef / np.linalg.norm(coef)))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "bases": self.bases.to_dict(), "channel": self.channel.to_dict(),
                "coefficients": complex_to_json(self.coefficients)}

    @classmethod
    def from_dict(cls, data: Dict) -> "Emitter":
        return cls(data["kind"], SubspaceBases.from_dict(data["bases"]),
                   ChannelParams.from_dict(data["channel"]), complex_from_json(data["coefficients"]))


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete problem instance."""
    dims: Dimensions
    bases: SubspaceBases
    radar: ChannelParams
    comms: ChannelParams
    coefficients: WaveformCoefficients
    variant: Variant = field(default_factory=Variant)
    rng_seed: int = 0
    extra_radar: Tuple[Emitter, ...] = ()
    extra_comms: Tuple[Emitter, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "extra_radar", tuple(self.extra_radar))
        object.__setattr__(self, "extra_comms", tuple(self.extra_comms))
        self.validate()

    def validate(self) -> None:
        dims, variant = self.dims, self.variant
        self.bases.check(dims)
        if dims.sub_symbols != variant.sub_symbols:
            raise ModelDomainError(
                f"dims.sub_symbols={dims.sub_symbols} disagrees with variant sub_symbols={variant.sub_symbols}")
        if self.coefficients.u.size != dims.radar_dim or self.coefficients.v.size != dims.comms_dim:
            raise ModelDomainError("waveform coefficient lengths do not match dims")
        expected_radar = max(variant.n_radar - 1, 0)
        expected_comms = max(variant.n_comms - 1, 0)
        if len(self.extra_radar) != expected_radar or len(self.extra_comms) != expected_comms:
            raise ModelDomainError("emitter lists do not match the variant's emitter counts")
        for emitter in self.extra_radar + self.extra_comms:
            emitter.bases.check(dims)

    @property
    def u(self) -> np.ndarray:
        return self.coefficients.u

    @property
    def v(self) -> np.ndarray:
        return self.coefficients.v

    def radar_emitters(self) -> List[Emitter]:
        if self.variant.n_radar == 0:
            return []
        primary = Emitter("radar", self.bases, self.radar, self.coefficients.u)
        return [primary] + list(self.extra_radar)

    def comms_emitters(self) -> List[Emitter]:
        if self.variant.n_comms == 0:
            return []
        primary = Emitter("comms", self.bases, self.comms, self.coefficients.v)
        return [primary] + list(self.extra_comms)

    def separation(self) -> Tuple[float, float]:
        """Minimum wrap-around separation (delta_tau, delta_nu) over the primary channels."""
        return min_separation(self.radar, self.comms)

    def to_dict(self) -> Dict:
        return {
            "dims": self.dims.to_dict(),
            "bases": self.bases.to_dict(),
            "radar": self.radar.to_dict(),
            "comms": self.comms.to_dict(),
            "coefficients": self.coefficients.to_dict(),
            "variant": self.variant.to_dict(),
            "rng_seed": self.rng_seed,
            "extra_radar": [e.to_dict() for e in self.extra_radar],
            "extra_comms": [e.to_dict() for e in self.extra_comms],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Scenario":
        return cls(
            dims=Dimensions.from_dict(data["dims"]),
            bases=SubspaceBases.from_dict(data["bases"]),
            radar=ChannelParams.from_dict(data["radar"]),
            comms=ChannelParams.from_dict(data["comms"]),
            coefficients=WaveformCoefficients.from_dict(data["coefficients"]),
            variant=Variant.from_dict(data.get("variant", {})),
            rng_seed=int(data.get("rng_seed", 0)),
            extra_radar=tuple(Emitter.from_dict(e) for e in data.get("extra_radar", [])),
            extra_comms=tuple(Emitter.from_dict(e) for e in data.get("extra_comms", [])),
        )


@dataclass(frozen=True, eq=False)
class Measurement:
    """Observation vector y ordered p-major, n-minor (sub-symbols between them)."""
    y: np.ndarray
    dims: Dimensions
    noise_realization: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        if y.shape != (self.dims.length,):
            raise ModelDomainError(f"y has shape {y.shape}, expected ({self.dims.length},)")
        object.__setattr__(self, "y", _frozen(y))
        if self.noise_realization is not None:
            w = np.asarray(self.noise_realization, dtype=complex)
            if w.shape != y.shape:
                raise ModelDomainError("noise realization must match y")
            object.__setattr__(self, "noise_realization", _frozen(w))

    @property
    def noise_norm(self) -> Optional[float]:
        if self.noise_realization is None:
            return None
        return float(np.linalg.norm(self.noise_realization))

    def to_dict(self) -> Dict:
        return {
            "dims": self.dims.to_dict(),
            "y": complex_to_json(self.y),
            "noise_realization": None if self.noise_realization is None
            else complex_to_json(self.noise_realization),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Measurement":
        noise = data.get("noise_realization")
        return cls(complex_from_json(data["y"]), Dimensions.from_dict(data["dims"]),
                   None if noise is None else complex_from_json(noise))


# ---------------------------------------------------------------------------
# Index map
# ---------------------------------------------------------------------------

def encode_index(n: int, p: int, dims: Dimensions, sub: int = 0) -> int:
    """Sample index m = n + N + M (sub + S p); equals n + N + M p when S = 1."""
    if not (-dims.N <= n <= dims.N and 0 <= p < dims.P and 0 <= sub < dims.sub_symbols):
        raise ModelDomainError(f"index (n={n}, p={p}, sub={sub}) out of range for {dims}")
    return n + dims.N + dims.M * (sub + dims.sub_symbols * p)


def decode_index(m: int, dims: Dimensions) -> Tuple[int, int, int]:
    """Inverse of encode_index: returns (n, p, sub)."""
    if not 0 <= m < dims.length:
        raise ModelDomainError(f"sample index {m} out of range [0, {dims.length})")
    n = m % dims.M - dims.N
    block = m // dims.M
    return n, block // dims.sub_symbols, block % dims.sub_symbols


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Per-sample frequency index n, pulse p, sub-symbol s and phase-cell index n + N + M p."""
    n: np.ndarray
    p: np.ndarray
    sub: np.ndarray
    cell: np.ndarray


@lru_cache(maxsize=64)
def sample_grid(dims: Dimensions) -> SampleGrid:
    m = np.arange(dims.length)
    n = m % dims.M - dims.N
    block = m // dims.M
    p = block // dims.sub_symbols
    sub = block % dims.sub_symbols
    cell = n + dims.N + dims.M * p
    return SampleGrid(_frozen(n), _frozen(p), _frozen(sub), _frozen(cell))


def block_mask(dims: Dimensions) -> np.ndarray:
    """Boolean mask of the block-diagonal support of D."""
    grid = sample_grid(dims)
    block_of_row = grid.p * dims.sub_symbols + grid.sub
    block_of_col = np.arange(dims.comms_dim) // dims.J
    return block_of_row[:, None] == block_of_col[None, :]


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

def _check_unit_interval(values: np.ndarray, name: str) -> None:
    if np.any(~np.isfinite(values)) or np.any(values < 0.0) or np.any(values >= 1.0):
        raise ModelDomainError(f"{name} must lie in [0, 1): {values}")


def steering_atom(r: Sequence[float], dims: Dimensions) -> np.ndarray:
    """Atom a(r) over the MP phase cells: entry n + N + M p is e^{j 2 pi (tau n + nu p)}."""
    tau, nu = float(r[0]), float(r[1])
    _check_unit_interval(np.array([tau, nu]), "(tau, nu)")
    n = np.arange(-dims.N, dims.N + 1)
    p = np.arange(dims.P)
    return np.outer(np.exp(2j * np.pi * nu * p), np.exp(2j * np.pi * tau * n)).ravel()


def steering_atoms(supports, dims: Dimensions) -> np.ndarray:
    """Atoms for a (K x 2) support array, one per column (MP x K)."""
    supports = np.asarray(supports, dtype=float).reshape(-1, 2)
    if supports.shape[0] == 0:
        return np.zeros((dims.MP, 0), dtype=complex)
    _check_unit_interval(supports, "supports")
    n = np.arange(-dims.N, dims.N + 1)
    p = np.arange(dims.P)
    e_tau = np.exp(2j * np.pi * np.outer(n, supports[:, 0]))
    e_nu = np.exp(2j * np.pi * np.outer(p, supports[:, 1]))
    return (e_nu[:, None, :] * e_tau[None, :, :]).reshape(dims.MP, -1)


def sample_atoms(supports, dims: Dimensions) -> np.ndarray:
    """Atoms expanded to measurement length (one row per sample)."""
    return steering_atoms(supports, dims)[sample_grid(dims).cell]


# ---------------------------------------------------------------------------
# Random draws
# ---------------------------------------------------------------------------

def _streams(seed: int) -> Dict[str, np.random.Generator]:
    names = ("bases", "channels", "coefficients", "noise", "emitters")
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _vandermonde_rows(rng: np.random.Generator, rows: int, width: int) -> np.ndarray:
    """Rows [1, e^{j2 pi sigma}, ..., e^{j2 pi (width-1) sigma}] with sigma ~ N(0, 1)."""
    sigma = rng.standard_normal(rows)
    return np.exp(2j * np.pi * np.outer(sigma, np.arange(width)))


def _draw_bases(dims: Dimensions, rng: np.random.Generator, layout: str) -> SubspaceBases:
    if layout not in BASIS_LAYOUTS:
        raise ModelDomainError(f"unknown basis layout '{layout}'")
    B = np.conj(_vandermonde_rows(rng, dims.M, dims.radar_dim))
    if layout == "dense":
        D = np.conj(_vandermonde_rows(rng, dims.length, dims.comms_dim))
    else:
        D = np.zeros((dims.length, dims.comms_dim), dtype=complex)
        rows = np.conj(_vandermonde_rows(rng, dims.length, dims.J))
        grid = sample_grid(dims)
        col0 = (grid.p * dims.sub_symbols + grid.sub) * dims.J
        for j in range(dims.J):
            D[np.arange(dims.length), col0 + j] = rows[:, j]
    return SubspaceBases(B, D, layout)


def draw_bases(dims: Dimensions, seed: int, layout: str = "block") -> SubspaceBases:
    """Random unit-modulus Vandermonde-row bases, deterministic in seed."""
    return _draw_bases(dims, np.random.default_rng(int(seed)), layout)


def _draw_channel(rng: np.random.Generator, count: int, dims: Dimensions,
                  enforce_separation: bool, max_attempts: int) -> ChannelParams:
    gains = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, count))
    if not enforce_separation:
        return ChannelParams(gains, rng.uniform(0.0, 1.0, count), rng.uniform(0.0, 1.0, count))
    min_tau, min_nu = 1.0 / dims.M, 1.0 / dims.P
    delays: List[float] = []
    dopplers: List[float] = []
    for _ in range(count):
        for _attempt in range(max_attempts):
            tau, nu = rng.uniform(0.0, 1.0, 2)
            if all(wraparound_dist(tau, t) >= min_tau for t in delays) and \
                    all(wraparound_dist(nu, v) >= min_nu for v in dopplers):
                delays.append(tau)
                dopplers.append(nu)
                break
        else:
            raise ModelDomainError(
                f"could not place {count} supports with separation ({min_tau:.4f}, {min_nu:.4f})")
    return ChannelParams(gains, np.array(delays), np.array(dopplers))


def _fixed_channel(rng: np.random.Generator, support: Dict) -> ChannelParams:
    delays = np.asarray(support["delays"], dtype=float)
    dopplers = np.asarray(support["dopplers"], dtype=float)
    gains = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, delays.size))
    return ChannelParams(gains, delays, dopplers)


def _draw_coefficients(rng: np.random.Generator, size: int) -> np.ndarray:
    vec = rng.uniform(0.0, 1.0, size) + 1j * rng.uniform(0.0, 1.0, size)
    return vec / np.linalg.norm(vec)


def draw_scenario(dims: Dimensions, variant: Optional[Variant] = None, seed: int = 0,
                  layout: str = "block",
                  radar_channels: Optional[Sequence[Dict]] = None,
                  comms_channels: Optional[Sequence[Dict]] = None,
                  enforce_separation: bool = False,
                  max_attempts: int = 10000) -> Scenario:
    """
    Draw a complete scenario. radar_channels / comms_channels optionally fix the
    supports of every emitter as dicts with "delays" and "dopplers"; gains,
    bases and coefficients are still drawn from the seed.
    """
    variant = variant or Variant.baseline()
    variant.validate()
    if variant.kind == "unequal_pri" and dims.sub_symbols != variant.sub_symbols:
        dims = replace(dims, sub_symbols=variant.sub_symbols)
    streams = _streams(seed)

    def channels_for(kind: str, count: int, fixed: Optional[Sequence[Dict]]) -> List[ChannelParams]:
        per_emitter = dims.L if kind == "radar" else dims.Q
        if fixed is not None:
            if len(fixed) != count:
                raise ModelDomainError(f"{len(fixed)} fixed {kind} channels given, variant has {count} emitters")
            return [_fixed_channel(streams["channels"], support) for support in fixed]
        return [_draw_channel(streams["channels"], per_emitter, dims, enforce_separation, max_attempts)
                for _ in range(count)]

    radar = channels_for("radar", max(variant.n_radar, 1), radar_channels)
    comms = channels_for("comms", max(variant.n_comms, 1), comms_channels)
    if variant.n_radar == 0:
        radar = [ChannelParams.empty()]
    if variant.n_comms == 0:
        comms = [ChannelParams.empty()]

    bases = _draw_bases(dims, streams["bases"], layout)
    coefficients = WaveformCoefficients(_draw_coefficients(streams["coefficients"], dims.radar_dim),
                                        _draw_coefficients(streams["coefficients"], dims.comms_dim))

    extra_radar = [Emitter("radar", _draw_bases(dims, streams["emitters"], layout), channel,
                           _draw_coefficients(streams["emitters"], dims.radar_dim))
                   for channel in radar[1:]]
    extra_comms = [Emitter("comms", _draw_bases(dims, streams["emitters"], layout), channel,
                           _draw_coefficients(streams["emitters"], dims.comms_dim))
                   for channel in comms[1:]]

    scenario = Scenario(dims=dims, bases=bases, radar=radar[0], comms=comms[0],
                        coefficients=coefficients, variant=variant, rng_seed=int(seed),
                        extra_radar=tuple(extra_radar), extra_comms=tuple(extra_comms))
    d_tau, d_nu = scenario.separation()
    logger.debug(f"Drew scenario seed={seed} variant={variant.kind} separation=({d_tau:.4f}, {d_nu:.4f})")
    return scenario


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def _channel_response(channel: ChannelParams, dims: Dimensions, delay_shift: float = 0.0) -> np.ndarray:
    """Per-sample sum_k alpha_k e^{-j 2 pi (n (tau_k - shift) + p nu_k)}."""
    if channel.count == 0:
        return np.zeros(dims.length, dtype=complex)
    grid = sample_grid(dims)
    phase = np.outer(grid.n, channel.delays) + np.outer(grid.p, channel.dopplers)
    response = np.exp(-2j * np.pi * phase) @ channel.gains
    if delay_shift:
        response = response * np.exp(2j * np.pi * delay_shift * grid.n)
    return response


def radar_component(emitter: Emitter, dims: Dimensions, sync_lag: float = 0.0) -> np.ndarray:
    waveform = emitter.bases.B @ emitter.coefficients
    return waveform[sample_grid(dims).n + dims.N] * _channel_response(emitter.channel, dims, sync_lag)


def comms_component(emitter: Emitter, dims: Dimensions) -> np.ndarray:
    message = emitter.bases.D @ emitter.coefficients
    return message * _channel_response(emitter.channel, dims)


def synth_measurement(scenario: Scenario) -> Measurement:
    """Overlaid measurement y for the scenario's variant, noise included when noisy."""
    dims, variant = scenario.dims, scenario.variant
    lag = variant.sync_lag if variant.kind == "unsync" else 0.0
    y = np.zeros(dims.length, dtype=complex)
    for emitter in scenario.radar_emitters():
        y += radar_component(emitter, dims, lag)
    for emitter in scenario.comms_emitters():
        y += comms_component(emitter, dims)

    noise = None
    if variant.kind == "noisy" and variant.snr_db is not None:
        rng = _streams(scenario.rng_seed)["noise"]
        power = np.linalg.norm(y) ** 2 / (dims.length * 10.0 ** (variant.snr_db / 10.0))
        noise = np.sqrt(power / 2.0) * (rng.standard_normal(dims.length) + 1j * rng.standard_normal(dims.length))
        y = y + noise
        logger.debug(f"Added noise at {variant.snr_db} dB, |w| = {np.linalg.norm(noise):.4e}")
    return Measurement(y, dims, noise)
