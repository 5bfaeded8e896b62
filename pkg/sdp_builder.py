#!/usr/bin/env python3
"""
Dual semidefinite program builder.

Assembles the dual of the sum-of-atomic-norms problem in a solver-neutral
standard form:

    minimize    1/2 x' diag(quad) x + c' x (+ offset)
    subject to  E x = h
                H_b(x) = H_b0 + sum_i x_i H_bi  PSD for every block b

The free vector x holds Re q, Im q and the Hermitian parameters of the Gram
matrix K (diagonal, then Re and Im of the strict upper triangle). Each PSD
block is an affine Hermitian function of x kept as sparse upper-triangle
triplets, so the q-dependent off-diagonal blocks of the LMIs are linked to q
directly inside the block maps.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from lifted_operators import sample_rows
from signal_model import (Dimensions, Measurement, ModelDomainError, Scenario, SubspaceBases,
                          Variant, complex_from_json, complex_to_json, sample_grid)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ToeplitzIndex:
    """Offset (n1, n2) of an elementary two-level Toeplitz matrix; n1 along frequency, n2 along pulses."""
    n1: int
    n2: int


def enumerate_trace_constraints(dims: Dimensions) -> List[Tuple[ToeplitzIndex, float]]:
    """Half-plane of offsets (n1 = 0 implies n2 >= 0) with delta = 1 only at (0, 0)."""
    constraints = []
    for n1 in range(dims.M):
        for n2 in range(-(dims.P - 1), dims.P):
            if n1 == 0 and n2 < 0:
                continue
            constraints.append((ToeplitzIndex(n1, n2), 1.0 if n1 == 0 and n2 == 0 else 0.0))
    return constraints


@dataclass(eq=False)
class PsdBlock:
    """
    Affine Hermitian (or symmetric) matrix map stored as upper-triangle
    triplets (row <= col). var == -1 marks a constant term.
    """
    name: str
    side: int
    rows: np.ndarray
    cols: np.ndarray
    var: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.var = np.asarray(self.var, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=complex)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the block at x as a dense matrix."""
        x = np.asarray(x, dtype=float)
        coef = self.vals * np.where(self.var >= 0, x[np.maximum(self.var, 0)], 1.0)
        upper = np.zeros((self.side, self.side), dtype=complex)
        np.add.at(upper, (self.rows, self.cols), coef)
        return upper + np.conj(np.triu(upper, 1)).T

    def to_dict(self) -> Dict:
        return {"name": self.name, "side": self.side, "rows": self.rows.tolist(),
                "cols": self.cols.tolist(), "var": self.var.tolist(), "vals": complex_to_json(self.vals)}

    @classmethod
    def from_dict(cls, data: Dict) -> "PsdBlock":
        return cls(data["name"], int(data["side"]), data["rows"], data["cols"], data["var"],
                   complex_from_json(data["vals"]))


@dataclass(frozen=True, eq=False)
class LmiCoupling:
    """Per-sample basis rows and norm bound of one [[K, C], [C^H, bound^2 I]] block."""
    name: str
    rows: np.ndarray
    bound: float


@dataclass(frozen=True, eq=False)
class DualStructure:
    """
    What the structured solver needs to work on K and q directly instead of
    on the generic standard form: the measurement, the weight kappa of the
    1/2 kappa ||q||^2 term, the constant offset and the emitter LMIs.
    """
    dims: Dimensions
    y: np.ndarray
    kappa: float
    offset: float
    lmis: Tuple[LmiCoupling, ...]

    @property
    def usable(self) -> bool:
        return bool(self.lmis) and all(lmi.bound > 0 for lmi in self.lmis)


@dataclass(eq=False)
class ConicProblem:
    """Standard-form conic problem; field is 'complex' (Hermitian blocks) or 'real'."""
    field: str
    num_vars: int
    objective: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    psd_blocks: List[PsdBlock]
    quad_diag: Optional[np.ndarray] = None
    objective_offset: float = 0.0
    q_length: int = 0
    gram_side: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)
    # not serialised; problems read back from JSON use the generic solver
    structure: Optional[DualStructure] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float)
        self.eq_matrix = sp.csr_matrix(self.eq_matrix, shape=(self.eq_rhs.size, self.num_vars))
        if self.quad_diag is None:
            self.quad_diag = np.zeros(self.num_vars)
        self.quad_diag = np.asarray(self.quad_diag, dtype=float)
        self.check()

    def check(self) -> None:
        """Raise ModelDomainError if the problem is malformed."""
        if self.field not in ("complex", "real"):
            raise ModelDomainError(f"unknown field '{self.field}'")
        if self.objective.shape != (self.num_vars,) or self.quad_diag.shape != (self.num_vars,):
            raise ModelDomainError("objective vectors must have num_vars entries")
        names = set()
        for block in self.psd_blocks:
            if block.name in names:
                raise ModelDomainError(f"duplicate block name '{block.name}'")
            names.add(block.name)
            if block.rows.size == 0:
                continue
            if np.any(block.rows > block.cols) or block.cols.max() >= block.side or block.rows.min() < 0:
                raise ModelDomainError(f"block '{block.name}' has entries outside its upper triangle")
            if block.var.max() >= self.num_vars or block.var.min() < -1:
                raise ModelDomainError(f"block '{block.name}' references undeclared variables")
            diagonal = block.rows == block.cols
            if np.any(np.abs(block.vals[diagonal].imag) > 0):
                raise ModelDomainError(f"block '{block.name}' is not Hermitian on its diagonal")
            if self.field == "real" and np.any(np.abs(block.vals.imag) > 0):
                raise ModelDomainError(f"real problem has complex coefficients in '{block.name}'")

    @property
    def block_sides(self) -> Dict[str, int]:
        return {block.name: block.side for block in self.psd_blocks}

    def block(self, name: str) -> PsdBlock:
        for block in self.psd_blocks:
            if block.name == name:
                return block
        raise KeyError(name)

    def objective_value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.quad_diag * x) + self.objective @ x + self.objective_offset)

    def unpack(self, x: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        """Split x into the dual vector q and the Hermitian Gram matrix K."""
        if self.q_length == 0 and self.gram_side == 0:
            return None, None
        x = np.asarray(x, dtype=float)
        q = x[:self.q_length] + 1j * x[self.q_length:2 * self.q_length]
        K = gram_from_params(x[2 * self.q_length:], self.gram_side)
        return q, K

    def to_dict(self) -> Dict:
        eq = self.eq_matrix.tocoo()
        return {
            "format": "dbd-conic-problem",
            "version": 1,
            "field": self.field,
            "num_vars": self.num_vars,
            "objective": self.objective.tolist(),
            "quad_diag": self.quad_diag.tolist(),
            "objective_offset": self.objective_offset,
            "equalities": {"rows": eq.row.tolist(), "cols": eq.col.tolist(), "vals": eq.data.tolist(),
                           "rhs": self.eq_rhs.tolist()},
            "psd_blocks": [block.to_dict() for block in self.psd_blocks],
            "q_length": self.q_length,
            "gram_side": self.gram_side,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ConicProblem":
        eq = data["equalities"]
        rhs = np.asarray(eq["rhs"], dtype=float)
        matrix = sp.coo_matrix((eq["vals"], (eq["rows"], eq["cols"])),
                               shape=(rhs.size, data["num_vars"])).tocsr()
        return cls(field=data["field"], num_vars=int(data["num_vars"]), objective=data["objective"],
                   eq_matrix=matrix, eq_rhs=rhs,
                   psd_blocks=[PsdBlock.from_dict(b) for b in data["psd_blocks"]],
                   quad_diag=data.get("quad_diag"), objective_offset=data.get("objective_offset", 0.0),
                   q_length=data.get("q_length", 0), gram_side=data.get("gram_side", 0),
                   metadata=data.get("metadata", {}))

    def to_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_json(cls, path: str) -> "ConicProblem":
        with open(path, "r") as f:
            return cls.from_dict(json.load(f))


@dataclass(eq=False)
class ConicSolution:
    """Solver output. q and K are filled in for problems built by build_dual_sdp."""
    x: np.ndarray
    status: str
    residuals: Dict[str, float]
    iterations: int
    objective: float
    q: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    slack: Optional[np.ndarray] = None
    multipliers: Optional[np.ndarray] = None
    history: List[Tuple[int, float, float, float]] = field(default_factory=list)
    solve_time: float = 0.0
    block_duals: Optional[Dict[str, np.ndarray]] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> Dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "objective": self.objective,
            "residuals": self.residuals,
            "solve_time": self.solve_time,
            "q": None if self.q is None else complex_to_json(self.q),
        }


# ---------------------------------------------------------------------------
# Gram parametrisation
# ---------------------------------------------------------------------------

def gram_param_count(side: int) -> int:
    return side * side


def gram_from_params(params: np.ndarray, side: int) -> np.ndarray:
    """Hermitian matrix from [diag, Re upper, Im upper] parameters."""
    iu = np.triu_indices(side, 1)
    pairs = iu[0].size
    K = np.zeros((side, side), dtype=complex)
    K[np.diag_indices(side)] = params[:side]
    K[iu] = params[side:side + pairs] + 1j * params[side + pairs:side + 2 * pairs]
    K[(iu[1], iu[0])] = np.conj(K[iu])
    return K


def params_from_gram(K: np.ndarray) -> np.ndarray:
    side = K.shape[0]
    iu = np.triu_indices(side, 1)
    return np.concatenate([np.real(np.diag(K)), K[iu].real, K[iu].imag])


def _gram_triplets(side: int, offset: int):
    """Triplets placing the Gram parameters in the leading side x side corner."""
    diag = np.arange(side)
    iu_r, iu_c = np.triu_indices(side, 1)
    pairs = iu_r.size
    re_var = offset + side + np.arange(pairs)
    im_var = re_var + pairs
    rows = np.concatenate([diag, iu_r, iu_r])
    cols = np.concatenate([diag, iu_c, iu_c])
    var = np.concatenate([offset + diag, re_var, im_var])
    vals = np.concatenate([np.ones(side), np.ones(pairs), np.full(pairs, 1j)])
    return rows, cols, var, vals


def _pair_lookup(side: int) -> np.ndarray:
    lookup = np.full((side, side), -1, dtype=np.int64)
    iu = np.triu_indices(side, 1)
    lookup[iu] = np.arange(iu[0].size)
    return lookup


def trace_equalities(dims: Dimensions, offset: int, num_vars: int) -> Tuple[sp.csr_matrix, np.ndarray, List]:
    """
    Rows of Tr(Theta_n K) = delta_n over the Gram parameters. The (0, 0)
    constraint is real; every other offset yields a real and an imaginary row.
    """
    side = dims.MP
    pairs = side * (side - 1) // 2
    lookup = _pair_lookup(side)
    rows, cols, vals, rhs, labels = [], [], [], [], []
    row = 0
    for index, delta in enumerate_trace_constraints(dims):
        i = np.arange(dims.M - index.n1)
        p = np.arange(max(0, -index.n2), min(dims.P, dims.P - index.n2))
        if i.size == 0 or p.size == 0:
            continue
        a = (i[None, :] + dims.M * p[:, None]).ravel()
        b = a + index.n1 + dims.M * index.n2
        if index.n1 == 0 and index.n2 == 0:
            rows.extend([row] * a.size)
            cols.extend((offset + a).tolist())
            vals.extend([1.0] * a.size)
            rhs.append(delta)
            labels.append((index.n1, index.n2, "re"))
            row += 1
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        k = lookup[lo, hi]
        # K[a, b] = conj(K[b, a]) when a > b
        sign = np.where(a < b, 1.0, -1.0)
        re_var = offset + side + k
        im_var = offset + side + pairs + k
        rows.extend([row] * k.size)
        cols.extend(re_var.tolist())
        vals.extend([1.0] * k.size)
        rows.extend([row + 1] * k.size)
        cols.extend(im_var.tolist())
        vals.extend(sign.tolist())
        rhs.extend([delta, 0.0])
        labels.extend([(index.n1, index.n2, "re"), (index.n1, index.n2, "im")])
        row += 2
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(row, num_vars)).tocsr()
    return matrix, np.asarray(rhs, dtype=float), labels


def _coupling_triplets(rows_basis: np.ndarray, dims: Dimensions, q_length: int, col0: int):
    """
    Triplets of the coefficient block C (MP x dim) whose row c is
    sum over samples m in cell c of conj(q_m) times row m of the basis.
    """
    cell = sample_grid(dims).cell
    m_idx, j_idx = np.nonzero(rows_basis)
    coef = rows_basis[m_idx, j_idx]
    rows = np.concatenate([cell[m_idx], cell[m_idx]])
    cols = np.concatenate([col0 + j_idx, col0 + j_idx])
    var = np.concatenate([m_idx, q_length + m_idx])
    vals = np.concatenate([coef, -1j * coef])
    return rows, cols, var, vals


def _lmi_block(name: str, rows_basis: np.ndarray, dims: Dimensions, q_length: int,
               gram_offset: int, bound: float) -> PsdBlock:
    side = dims.MP
    dim = rows_basis.shape[1]
    g_rows, g_cols, g_var, g_vals = _gram_triplets(side, gram_offset)
    c_rows, c_cols, c_var, c_vals = _coupling_triplets(rows_basis, dims, q_length, side)
    tail = side + np.arange(dim)
    return PsdBlock(
        name, side + dim,
        np.concatenate([g_rows, c_rows, tail]),
        np.concatenate([g_cols, c_cols, tail]),
        np.concatenate([g_var, c_var, np.full(dim, -1)]),
        np.concatenate([g_vals, c_vals, np.full(dim, bound ** 2, dtype=complex)]),
    )


def build_dual_sdp(y: Measurement, bases: SubspaceBases, dims: Dimensions,
                   variant: Optional[Variant] = None,
                   extra_radar_bases: Sequence[SubspaceBases] = (),
                   extra_comms_bases: Sequence[SubspaceBases] = ()) -> ConicProblem:
    """
    Dual SDP for the given variant. Blocks: the Gram matrix K, one radar LMI
    [[K, C_r], [C_r^H, bound^2 I]] per radar emitter and one comms LMI
    [[K, C_c], [C_c^H, I]] per comms emitter, all sharing K and q.
    """
    variant = variant or Variant.baseline()
    variant.validate()
    if y.dims != dims:
        raise ModelDomainError(f"measurement dims {y.dims} differ from {dims}")
    if dims.sub_symbols != variant.sub_symbols:
        raise ModelDomainError("dims.sub_symbols must equal the variant's sub_symbols")
    radar_bases = [bases] + list(extra_radar_bases) if variant.n_radar else []
    comms_bases = [bases] + list(extra_comms_bases) if variant.n_comms else []
    if len(radar_bases) != variant.n_radar or len(comms_bases) != variant.n_comms:
        raise ModelDomainError(
            f"variant expects {variant.n_radar} radar and {variant.n_comms} comms emitters, "
            f"got {len(radar_bases)} and {len(comms_bases)} bases")
    for b in radar_bases + comms_bases:
        b.check(dims)

    q_length = dims.length
    side = dims.MP
    gram_offset = 2 * q_length
    num_vars = gram_offset + gram_param_count(side)

    data = np.concatenate([y.y.real, y.y.imag])
    objective = np.zeros(num_vars)
    quad = np.zeros(num_vars)
    offset = 0.0
    objective[:gram_offset] = -data
    if variant.kind == "noisy":
        mu = variant.mu if variant.mu is not None else y.noise_norm
        if mu is None or mu <= 0:
            raise ModelDomainError("noisy variant needs mu or a stored noise realization")
        quad[:gram_offset] = 2.0 * mu
    elif variant.kind == "unsync":
        quad[:gram_offset] = 1.0
        offset = 0.5 * float(data @ data)

    couplings = [LmiCoupling("radar" if i == 0 else f"radar_{i}", sample_rows("radar", b, dims), variant.radar_bound)
                 for i, b in enumerate(radar_bases)]
    couplings += [LmiCoupling("comms" if i == 0 else f"comms_{i}", sample_rows("comms", b, dims), 1.0)
                  for i, b in enumerate(comms_bases)]
    blocks = [PsdBlock("gram", side, *_gram_triplets(side, gram_offset))]
    blocks += [_lmi_block(c.name, c.rows, dims, q_length, gram_offset, c.bound) for c in couplings]

    eq_matrix, eq_rhs, labels = trace_equalities(dims, gram_offset, num_vars)
    problem = ConicProblem(field="complex", num_vars=num_vars, objective=objective, eq_matrix=eq_matrix,
                           eq_rhs=eq_rhs, psd_blocks=blocks, quad_diag=quad, objective_offset=offset,
                           q_length=q_length, gram_side=side,
                           metadata={"variant": variant.to_dict(), "dims": dims.to_dict(),
                                     "radar_blocks": [blk.name for blk in blocks if blk.name.startswith("radar")],
                                     "comms_blocks": [blk.name for blk in blocks if blk.name.startswith("comms")]},
                           structure=DualStructure(dims, y.y.copy(), float(quad[0]) if q_length else 0.0, offset,
                                                   tuple(couplings)))
    logger.info(f"Built {variant.kind} dual SDP: {num_vars} variables, {eq_rhs.size} equalities, "
                f"blocks {problem.block_sides}")
    return problem


def build_for_scenario(scenario: Scenario, measurement: Measurement) -> ConicProblem:
    """build_dual_sdp with every emitter's bases taken from the scenario."""
    return build_dual_sdp(measurement, scenario.bases, scenario.dims, scenario.variant,
                          [e.bases for e in scenario.extra_radar],
                          [e.bases for e in scenario.extra_comms])


def real_embedding(problem: ConicProblem) -> ConicProblem:
    """Replace each Hermitian block H by [[Re H, -Im H], [Im H, Re H]]; equalities and objective are unchanged."""
    if problem.field == "real":
        return problem
    blocks = []
    for block in problem.psd_blocks:
        s = block.side
        re, im = block.vals.real, block.vals.imag
        off = block.rows != block.cols
        parts = [
            (block.rows, block.cols, block.var, re),
            (block.rows + s, block.cols + s, block.var, re),
            (block.rows[off], block.cols[off] + s, block.var[off], -im[off]),
            (block.cols[off], block.rows[off] + s, block.var[off], im[off]),
        ]
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        var = np.concatenate([p[2] for p in parts])
        vals = np.concatenate([p[3] for p in parts])
        keep = vals != 0
        blocks.append(PsdBlock(block.name, 2 * s, rows[keep], cols[keep], var[keep], vals[keep].astype(complex)))
    return ConicProblem(field="real", num_vars=problem.num_vars, objective=problem.objective.copy(),
                        eq_matrix=problem.eq_matrix.copy(), eq_rhs=problem.eq_rhs.copy(), psd_blocks=blocks,
                        quad_diag=problem.quad_diag.copy(), objective_offset=problem.objective_offset,
                        q_length=problem.q_length, gram_side=problem.gram_side,
                        metadata=dict(problem.metadata, embedded=True), structure=problem.structure)


def hermitian_from_embedding(S: np.ndarray) -> np.ndarray:
    """Inverse of the real embedding of one block."""
    s = S.shape[0] // 2
    return S[:s, :s] + 1j * S[s:, :s]


def embed_hermitian(H: np.ndarray) -> np.ndarray:
    return np.block([[H.real, -H.imag], [H.imag, H.real]])
