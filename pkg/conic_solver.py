#!/usr/bin/env python3
"""
Operator-splitting conic solver for the dual SDPs.

Solves

    minimize 1/2 x' P x + c' x   s.t.   A x + s = b,  s in {0}^m0 x S_1 x ... x S_k

with S_i cones of real symmetric PSD matrices in scaled-vectorised form.
Each iteration:
1. Solves the cached factorisation of P + sigma I + A' diag(rho) A
2. Applies over-relaxation
3. Projects onto the cones (eigenvalue clipping per PSD block)
4. Updates the scaled multipliers

Complex problems are passed through real_embedding first. Ruiz
equilibration, adaptive step size, primal infeasibility detection, an
optional equality polish and a CSV residual trace are supported.

Dual SDPs from build_dual_sdp carry a DualStructure and are solved by
solve_structured instead: the same ADMM scheme applied to K and q directly,
with closed-form affine steps and one Hermitian eigendecomposition per LMI.
settings.method='generic' forces the standard-form path.
"""

import csv
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from sdp_builder import ConicProblem, ConicSolution, DualStructure, params_from_gram, real_embedding
from signal_model import sample_grid

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
METHODS = ("auto", "generic", "structured")


class ConicDomainError(ValueError):
    """Raised for malformed solver input."""


@dataclass
class SolverSettings:
    """ADMM settings; tolerances are relative (absolute part 1)."""
    max_iters: int = 50000
    eps_primal: float = 1e-7
    eps_dual: float = 1e-7
    eps_gap: float = 1e-7
    over_relaxation: float = 1.6
    scaling: str = "ruiz"
    polish: bool = False
    rho: float = 0.1
    sigma: float = 1e-6
    rho_eq_scale: float = 1e3
    adaptive_rho: bool = True
    check_every: int = 25
    ruiz_iters: int = 10
    eps_infeasible: float = 1e-8
    dense_threshold: int = 3000
    time_limit: Optional[float] = None
    residual_csv: Optional[str] = None
    method: str = "auto"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConicDomainError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("eps_primal", "eps_dual", "eps_gap", "rho", "sigma", "eps_infeasible"):
            if not getattr(self, name) > 0:
                raise ConicDomainError(f"{name} must be positive")
        if not 0.0 < self.over_relaxation < 2.0:
            raise ConicDomainError(f"over_relaxation must lie in (0, 2), got {self.over_relaxation}")
        if self.scaling not in ("none", "ruiz"):
            raise ConicDomainError(f"scaling must be 'none' or 'ruiz', got '{self.scaling}'")
        if self.check_every < 1:
            raise ConicDomainError("check_every must be >= 1")
        if self.method not in METHODS:
            raise ConicDomainError(f"method must be one of {METHODS}, got '{self.method}'")


def _clip_hermitian(S: np.ndarray) -> np.ndarray:
    H = 0.5 * (S + S.conj().T)
    w, V = np.linalg.eigh(H)
    if w.size == 0 or w[0] >= 0:
        return H
    w = np.maximum(w, 0.0)
    return (V * w) @ V.conj().T


def psd_project(S: np.ndarray, asymmetry_tol: float = 1e-9) -> np.ndarray:
    """Frobenius-nearest PSD matrix of a symmetric or Hermitian S: eigenvalues below zero are clipped."""
    S = np.asarray(S)
    if not np.iscomplexobj(S):
        S = S.astype(float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ConicDomainError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.conj().T)) > asymmetry_tol * scale:
        raise ConicDomainError("matrix is not Hermitian")
    return _clip_hermitian(S)


# ---------------------------------------------------------------------------
# Cone layout and svec helpers
# ---------------------------------------------------------------------------

def _svec_position(rows: np.ndarray, cols: np.ndarray, side: int) -> np.ndarray:
    """Row-major upper-triangle position of (row <= col)."""
    return rows * side - rows * (rows - 1) // 2 + (cols - rows)


class _ConeLayout:
    """Zero cone followed by PSD blocks in svec form."""

    def __init__(self, zero: int, sides: List[int]):
        self.zero = zero
        self.sides = sides
        self.slices = []
        start = zero
        for side in sides:
            size = side * (side + 1) // 2
            self.slices.append(slice(start, start + size))
            start += size
        self.size = start
        self._tri = {side: np.triu_indices(side) for side in set(sides)}

    def smat(self, v: np.ndarray, side: int) -> np.ndarray:
        iu = self._tri[side]
        S = np.zeros((side, side))
        S[iu] = v
        off = iu[0] != iu[1]
        S[iu[0][off], iu[1][off]] /= SQRT2
        return S + np.triu(S, 1).T

    def svec(self, S: np.ndarray) -> np.ndarray:
        iu = self._tri[S.shape[0]]
        v = S[iu].copy()
        v[iu[0] != iu[1]] *= SQRT2
        return v

    def project(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[:self.zero] = 0.0
        for side, blk in zip(self.sides, self.slices):
            S = self.smat(v[blk], side)
            w, V = np.linalg.eigh(S)
            if w[0] >= 0:
                continue
            w = np.maximum(w, 0.0)
            out[blk] = self.svec((V * w) @ V.T)
        return out

    def min_eigenvalues(self, v: np.ndarray) -> List[Tuple[float, float]]:
        result = []
        for side, blk in zip(self.sides, self.slices):
            w = np.linalg.eigvalsh(self.smat(v[blk], side))
            result.append((float(w[0]), float(w[-1])))
        return result


def _standard_form(problem: ConicProblem):
    """Assemble (P, c, A, b, cones) from a real ConicProblem."""
    n = problem.num_vars
    eq = problem.eq_matrix.tocoo()
    layout = _ConeLayout(eq.shape[0], [block.side for block in problem.psd_blocks])
    rows, cols, vals = [eq.row], [eq.col], [eq.data]
    b = np.zeros(layout.size)
    b[:layout.zero] = problem.eq_rhs
    for block, blk in zip(problem.psd_blocks, layout.slices):
        pos = blk.start + _svec_position(block.rows, block.cols, block.side)
        scale = np.where(block.rows == block.cols, 1.0, SQRT2)
        coef = block.vals.real * scale
        constant = block.var < 0
        np.add.at(b, pos[constant], coef[constant])
        rows.append(pos[~constant])
        cols.append(block.var[~constant])
        # s = b - A x must equal svec(H(x))
        vals.append(-coef[~constant])
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(layout.size, n)).tocsc()
    A.sum_duplicates()
    P = sp.diags(problem.quad_diag).tocsc()
    return P, problem.objective.copy(), A, b, layout


def _equilibrate(P, A, c, b, layout: _ConeLayout, iters: int):
    """Ruiz scaling, uniform inside each PSD block so the cones are preserved."""
    n, m = A.shape[1], A.shape[0]
    D, E = np.ones(n), np.ones(m)
    for _ in range(iters):
        col = np.maximum(abs(A).max(axis=0).toarray().ravel(), abs(P).max(axis=0).toarray().ravel())
        row = abs(A).max(axis=1).toarray().ravel()
        col[col == 0] = 1.0
        row[row == 0] = 1.0
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        for blk in layout.slices:
            e[blk] = np.mean(e[blk])
        Dm, Em = sp.diags(d), sp.diags(e)
        A = (Em @ A @ Dm).tocsc()
        P = (Dm @ P @ Dm).tocsc()
        D *= d
        E *= e
    c = D * c
    b = E * b
    p_norm = float(np.mean(abs(P).max(axis=0).toarray())) if n else 0.0
    cost = 1.0 / np.clip(max(p_norm, float(np.max(np.abs(c))) if n else 0.0), 1e-4, 1e4)
    return P * cost, A, c * cost, b, D, E, cost


class _Factorization:
    """Cached solver for (P + sigma I + A' diag(rho) A) x = rhs."""

    def __init__(self, P, A, sigma: float, rho_vec: np.ndarray, dense_threshold: int):
        n = A.shape[1]
        M = (P + sigma * sp.identity(n) + A.T @ sp.diags(rho_vec) @ A).tocsc()
        self.dense = n <= dense_threshold
        if self.dense:
            self._factor = sla.cho_factor(M.toarray())
        else:
            self._factor = spla.splu(M)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.dense:
            return sla.cho_solve(self._factor, rhs)
        return self._factor.solve(rhs)


def _write_history(path: str, history) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "primal", "dual", "gap"])
        for it, r_p, r_d, gap in history:
            writer.writerow([it, f"{r_p:.17g}", f"{r_d:.17g}", f"{gap:.17g}"])


def residual_trend_ok(history, window: int = 100) -> bool:
    """True when every window's best combined residual is no worse than the previous window's worst."""
    if not history:
        return True
    iters = np.array([h[0] for h in history])
    combined = np.array([max(h[1], h[2], h[3]) for h in history])
    bins = iters // window
    previous_worst = None
    for b in np.unique(bins):
        values = combined[bins == b]
        if previous_worst is not None and values.min() > previous_worst:
            return False
        previous_worst = values.max()
    return True


def solve(problem: ConicProblem, settings: Optional[SolverSettings] = None,
          warm_start: Optional[ConicSolution] = None) -> ConicSolution:
    """
    Solve a ConicProblem; deterministic for fixed inputs and settings.

    Problems that carry a usable DualStructure go to solve_structured unless
    settings.method is 'generic'.
    """
    settings = settings or SolverSettings()
    usable = problem.structure is not None and problem.structure.usable
    if settings.method == "structured" and not usable:
        raise ConicDomainError("method 'structured' needs a problem built by build_dual_sdp")
    if usable and settings.method != "generic":
        return solve_structured(problem, settings, warm_start)
    started = time.time()
    real = real_embedding(problem) if problem.field == "complex" else problem
    P0, c0, A0, b0, layout = _standard_form(real)
    n, m = A0.shape[1], A0.shape[0]
    logger.info(f"Solving conic problem: {n} variables, {layout.zero} equalities, PSD sides {layout.sides}")

    if settings.scaling == "ruiz":
        P, A, c, b, D, E, cost = _equilibrate(P0, A0, c0, b0, layout, settings.ruiz_iters)
    else:
        P, A, c, b, D, E, cost = P0, A0, c0, b0, np.ones(n), np.ones(m), 1.0
    At = A.T.tocsc()

    zero_rows = np.zeros(m, dtype=bool)
    zero_rows[:layout.zero] = True
    rho = settings.rho
    rho_vec = np.where(zero_rows, rho * settings.rho_eq_scale, rho)
    factor = _Factorization(P, A, settings.sigma, rho_vec, settings.dense_threshold)

    x, s, y = np.zeros(n), np.zeros(m), np.zeros(m)
    if warm_start is not None:
        x = warm_start.x / D
        if warm_start.slack is not None:
            s = warm_start.slack * E
        if warm_start.multipliers is not None:
            # multipliers are reported as -y in unscaled units
            y = -cost * warm_start.multipliers / E
    alpha = settings.over_relaxation
    sigma = settings.sigma
    history = []
    best = None
    status = "max_iters"
    y_prev = y.copy()
    iteration = 0
    last = None

    for iteration in range(1, settings.max_iters + 1):
        rhs = sigma * x - c + At @ (rho_vec * (b - s) + y)
        x_tilde = factor.solve(rhs)
        s_tilde = b - A @ x_tilde
        x = alpha * x_tilde + (1.0 - alpha) * x
        s_relax = alpha * s_tilde + (1.0 - alpha) * s
        s_next = layout.project(s_relax + y / rho_vec)
        y = y + rho_vec * (s_relax - s_next)
        s = s_next

        if iteration % settings.check_every and iteration != settings.max_iters:
            continue

        Ax = A @ x
        Px = P @ x
        Aty = At @ y
        r_prim = float(np.max(np.abs((Ax + s - b) / E), initial=0.0))
        prim_scale = max(np.max(np.abs(Ax / E), initial=0.0), np.max(np.abs(s / E), initial=0.0),
                         np.max(np.abs(b / E), initial=0.0))
        r_dual = float(np.max(np.abs((Px + c - Aty) / D), initial=0.0)) / cost
        dual_scale = max(np.max(np.abs(Px / D), initial=0.0), np.max(np.abs(Aty / D), initial=0.0),
                         np.max(np.abs(c / D), initial=0.0)) / cost
        quad = float(x @ Px)
        pobj = (0.5 * quad + float(c @ x)) / cost + real.objective_offset
        dobj = (-0.5 * quad + float(b @ y)) / cost + real.objective_offset
        gap = abs(pobj - dobj)
        rel = (r_prim / (1.0 + prim_scale), r_dual / (1.0 + dual_scale),
               gap / (1.0 + abs(pobj) + abs(dobj)))
        history.append((iteration,) + rel)
        last = rel
        combined = max(rel[0] / settings.eps_primal, rel[1] / settings.eps_dual, rel[2] / settings.eps_gap)
        if best is None or combined < best[0]:
            best = (combined, x.copy(), s.copy(), y.copy(), rel, iteration)
        logger.debug(f"iter {iteration}: primal {rel[0]:.3e} dual {rel[1]:.3e} gap {rel[2]:.3e} rho {rho:.3e}")

        if combined <= 1.0:
            status = "optimal"
            break

        dy = y - y_prev
        y_prev = y.copy()
        dy_norm = float(np.max(np.abs(E * dy), initial=0.0)) / cost
        if dy_norm > 0:
            aty_norm = float(np.max(np.abs((At @ dy) / D), initial=0.0)) / cost
            b_dot = float(b @ dy) / cost
            if aty_norm <= settings.eps_infeasible * dy_norm and b_dot > settings.eps_infeasible * dy_norm:
                in_polar = layout.project(dy)
                if np.max(np.abs(E * in_polar), initial=0.0) / cost <= settings.eps_infeasible * dy_norm:
                    status = "infeasible"
                    logger.warning(f"Primal infeasibility certificate found at iteration {iteration}")
                    break

        if settings.time_limit is not None and time.time() - started > settings.time_limit:
            logger.warning(f"Time limit of {settings.time_limit}s reached at iteration {iteration}")
            break

        if settings.adaptive_rho:
            prim_norm = max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(s), initial=0.0),
                            np.max(np.abs(b), initial=0.0), 1e-12)
            dual_norm = max(np.max(np.abs(Px), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                            np.max(np.abs(c), initial=0.0), 1e-12)
            r_p_scaled = np.max(np.abs(Ax + s - b), initial=0.0) / prim_norm
            r_d_scaled = np.max(np.abs(Px + c - Aty), initial=0.0) / dual_norm
            if r_d_scaled > 0 and r_p_scaled > 0:
                new_rho = float(np.clip(rho * np.sqrt(r_p_scaled / r_d_scaled), 1e-6, 1e6))
                if new_rho > 5.0 * rho or new_rho < rho / 5.0:
                    logger.debug(f"Adapting rho {rho:.3e} -> {new_rho:.3e} at iteration {iteration}")
                    rho = new_rho
                    rho_vec = np.where(zero_rows, rho * settings.rho_eq_scale, rho)
                    factor = _Factorization(P, A, sigma, rho_vec, settings.dense_threshold)

    if status != "optimal" and best is not None and status != "infeasible":
        _, x, s, y, last, _ = best

    x_u = D * x
    s_u = s / E
    w_u = -E * y / cost
    residuals = {"primal": last[0], "dual": last[1], "gap": last[2]} if last else \
        {"primal": np.inf, "dual": np.inf, "gap": np.inf}

    if settings.polish and status == "optimal" and layout.zero:
        x_u, s_u, residuals = _polish(real, A0, b0, layout, x_u, s_u, residuals)

    q, K = problem.unpack(x_u)
    solution = ConicSolution(x=x_u, status=status, residuals=residuals, iterations=iteration,
                             objective=real.objective_value(x_u), q=q, K=K, slack=s_u, multipliers=w_u,
                             history=history, solve_time=time.time() - started)
    if settings.residual_csv:
        _write_history(settings.residual_csv, history)
    logger.info(f"Solver finished: status={status} iterations={iteration} objective={solution.objective:.10g} "
                f"residuals=({residuals['primal']:.2e}, {residuals['dual']:.2e}, {residuals['gap']:.2e}) "
                f"in {solution.solve_time:.1f}s")
    return solution


# ---------------------------------------------------------------------------
# Structured splitting for dual SDPs
# ---------------------------------------------------------------------------

class _DualSplitting:
    """
    ADMM on the scaled LMIs Phi_e = [[MP K, a_e C_e(w)], [., I]] with
    w = conj(q) and a_e = sqrt(MP) / bound_e. Every Phi_e is copied into a
    PSD variable W_e. The K step is a projection onto the two-level Toeplitz
    trace constraints and the w step splits into one small Hermitian system
    per phase cell, so an iteration costs one eigendecomposition per LMI.
    """

    def __init__(self, structure: DualStructure):
        dims = structure.dims
        self.side = dims.MP
        self.kappa = structure.kappa
        self.offset = structure.offset
        cell = sample_grid(dims).cell
        if np.any(np.bincount(cell, minlength=self.side) != dims.sub_symbols):
            raise ConicDomainError("samples are not spread evenly over the phase cells")
        self.by_cell = np.argsort(cell, kind="stable").reshape(self.side, dims.sub_symbols)
        self.y_cell = np.asarray(structure.y, dtype=complex)[self.by_cell]
        self.names = [lmi.name for lmi in structure.lmis]
        self.bounds = np.array([lmi.bound for lmi in structure.lmis], dtype=float)
        self.weights = np.sqrt(self.side) / self.bounds
        self.cell_rows = [np.asarray(lmi.rows, dtype=complex)[self.by_cell] for lmi in structure.lmis]
        self.cell_gram = sum(a ** 2 * np.einsum("csd,ctd->cst", R.conj(), R)
                             for a, R in zip(self.weights, self.cell_rows))

        i = np.tile(np.arange(dims.M), dims.P)
        p = np.repeat(np.arange(dims.P), dims.M)
        dn = i[None, :] - i[:, None]
        dp = p[None, :] - p[:, None]
        self.classes = ((dn + dims.M - 1) * (2 * dims.P - 1) + dp + dims.P - 1).ravel()
        self.class_sizes = np.bincount(self.classes)
        self.targets = np.zeros(self.class_sizes.size, dtype=complex)
        # tr K = 1, i.e. the main diagonal of MP K sums to MP
        self.targets[(dims.M - 1) * (2 * dims.P - 1) + dims.P - 1] = self.side

    def scaling(self, e: int) -> np.ndarray:
        """Diagonal congruence taking the builder's LMI to Phi_e."""
        dim = self.cell_rows[e].shape[2]
        return np.concatenate([np.full(self.side, np.sqrt(self.side)), np.full(dim, 1.0 / self.bounds[e])])

    def project_gram(self, G: np.ndarray) -> np.ndarray:
        flat = G.ravel()
        n = self.class_sizes.size
        sums = (np.bincount(self.classes, weights=flat.real, minlength=n)
                + 1j * np.bincount(self.classes, weights=flat.imag, minlength=n))
        correction = (sums - self.targets) / self.class_sizes
        return G - correction[self.classes].reshape(G.shape)

    def cell_inverses(self, rho: float) -> np.ndarray:
        eye = np.eye(self.cell_gram.shape[1])
        return np.linalg.pinv(rho * self.cell_gram + 0.5 * self.kappa * eye, hermitian=True)

    def lmi(self, K_hat: np.ndarray, w_cell: np.ndarray, e: int) -> np.ndarray:
        C = self.weights[e] * np.einsum("cs,csd->cd", w_cell, self.cell_rows[e])
        return np.block([[K_hat, C], [C.conj().T, np.eye(C.shape[1])]])

    def affine_step(self, V: List[np.ndarray], rho: float, inverses: np.ndarray):
        """Minimise f(w) + rho/2 sum_e ||Phi_e - V_e||^2 over the trace constraints."""
        s = self.side
        mean = sum(0.5 * (X[:s, :s] + X[:s, :s].conj().T) for X in V) / len(V)
        K_hat = self.project_gram(mean)
        rhs = 0.5 * np.conj(self.y_cell)
        for a, R, X in zip(self.weights, self.cell_rows, V):
            rhs = rhs + rho * a * np.einsum("csd,cd->cs", R.conj(), X[:s, s:])
        w_cell = np.einsum("cst,ct->cs", inverses, rhs)
        return K_hat, w_cell

    def primal_objective(self, w_cell: np.ndarray) -> float:
        w_sq = float(np.vdot(w_cell, w_cell).real)
        return float(-np.sum(self.y_cell * w_cell).real + 0.5 * self.kappa * w_sq + self.offset)

    def dual_objective(self, w_cell: np.ndarray, U: List[np.ndarray], rho: float) -> float:
        """-sum_e tr Lambda_e - kappa/2 ||w||^2 + offset with Lambda_e = -rho U_e."""
        w_sq = float(np.vdot(w_cell, w_cell).real)
        return float(rho * sum(np.trace(X).real for X in U) - 0.5 * self.kappa * w_sq + self.offset)

    def unscaled(self, K_hat: np.ndarray, w_cell: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        q = np.zeros(self.by_cell.size, dtype=complex)
        q[self.by_cell] = np.conj(w_cell)
        return q, K_hat / self.side


def _frobenius(blocks: List[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.vdot(X, X).real for X in blocks)))


def solve_structured(problem: ConicProblem, settings: Optional[SolverSettings] = None,
                     warm_start: Optional[ConicSolution] = None) -> ConicSolution:
    """
    Solve a dual SDP from build_dual_sdp on its K and q directly.

    Residuals are relative Frobenius norms of Phi - W (primal), of
    rho (W - W_prev) (dual) and the gap between the objective and the value
    of the block multipliers Lambda_e = -rho U_e, which are PSD at every
    iterate. Infeasibility is not checked: q = 0, K = I / MP is always
    feasible. The multipliers are returned in block_duals in the builder's
    units and seed U on a warm start.
    """
    settings = settings or SolverSettings()
    if problem.structure is None or not problem.structure.usable:
        raise ConicDomainError("problem carries no usable dual structure")
    started = time.time()
    split = _DualSplitting(problem.structure)
    count = len(split.names)
    logger.info(f"Solving dual SDP with the structured splitting: {problem.q_length} samples, "
                f"Gram side {split.side}, LMIs {split.names}")

    rho = settings.rho
    alpha = settings.over_relaxation
    if warm_start is not None and warm_start.q is not None and warm_start.K is not None:
        w_cell = np.conj(np.asarray(warm_start.q, dtype=complex))[split.by_cell]
        K_hat = split.side * np.asarray(warm_start.K, dtype=complex)
    else:
        w_cell = np.zeros(split.by_cell.shape, dtype=complex)
        K_hat = np.eye(split.side, dtype=complex)
    W = [_clip_hermitian(split.lmi(K_hat, w_cell, e)) for e in range(count)]
    U = [np.zeros_like(X) for X in W]
    if warm_start is not None and warm_start.block_duals:
        for e, name in enumerate(split.names):
            Z = warm_start.block_duals.get(name)
            if Z is not None and Z.shape == W[e].shape:
                t = split.scaling(e)
                U[e] = -(Z / np.outer(t, t)) / rho
    inverses = split.cell_inverses(rho)

    history = []
    best = None
    last = None
    status = "max_iters"
    iteration = 0
    for iteration in range(1, settings.max_iters + 1):
        K_hat, w_cell = split.affine_step([Wb - Ub for Wb, Ub in zip(W, U)], rho, inverses)
        Phi = [split.lmi(K_hat, w_cell, e) for e in range(count)]
        W_prev = W
        relaxed = [alpha * X + (1.0 - alpha) * Wb for X, Wb in zip(Phi, W)]
        W = [_clip_hermitian(X + Ub) for X, Ub in zip(relaxed, U)]
        U = [Ub + X - Wb for Ub, X, Wb in zip(U, relaxed, W)]

        if iteration % settings.check_every and iteration != settings.max_iters:
            continue

        r_prim = _frobenius([X - Wb for X, Wb in zip(Phi, W)])
        r_dual = rho * _frobenius([Wb - Wp for Wb, Wp in zip(W, W_prev)])
        pobj = split.primal_objective(w_cell)
        dobj = split.dual_objective(w_cell, U, rho)
        rel = (r_prim / (1.0 + max(_frobenius(Phi), _frobenius(W))),
               r_dual / (1.0 + rho * _frobenius(U)),
               abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)))
        history.append((iteration,) + rel)
        last = rel
        combined = max(rel[0] / settings.eps_primal, rel[1] / settings.eps_dual, rel[2] / settings.eps_gap)
        if best is None or combined < best[0]:
            best = (combined, K_hat.copy(), w_cell.copy(), [Ub.copy() for Ub in U], rho, rel)
        logger.debug(f"iter {iteration}: primal {rel[0]:.3e} dual {rel[1]:.3e} gap {rel[2]:.3e} rho {rho:.3e}")

        if combined <= 1.0:
            status = "optimal"
            break

        if settings.time_limit is not None and time.time() - started > settings.time_limit:
            logger.warning(f"Time limit of {settings.time_limit}s reached at iteration {iteration}")
            break

        if settings.adaptive_rho and rel[0] > 0 and rel[1] > 0:
            new_rho = float(np.clip(rho * np.sqrt(rel[0] / rel[1]), 1e-6, 1e6))
            if new_rho > 5.0 * rho or new_rho < rho / 5.0:
                logger.debug(f"Adapting rho {rho:.3e} -> {new_rho:.3e} at iteration {iteration}")
                U = [Ub * (rho / new_rho) for Ub in U]
                rho = new_rho
                inverses = split.cell_inverses(rho)

    if status != "optimal" and best is not None:
        _, K_hat, w_cell, U, rho, last = best

    q, K = split.unscaled(K_hat, w_cell)
    x = np.concatenate([q.real, q.imag, params_from_gram(K)])
    block_duals = {}
    for e, name in enumerate(split.names):
        t = split.scaling(e)
        block_duals[name] = -rho * U[e] * np.outer(t, t)
    residuals = {"primal": last[0], "dual": last[1], "gap": last[2]} if last else \
        {"primal": np.inf, "dual": np.inf, "gap": np.inf}
    solution = ConicSolution(x=x, status=status, residuals=residuals, iterations=iteration,
                             objective=problem.objective_value(x), q=q, K=K, history=history,
                             solve_time=time.time() - started, block_duals=block_duals)
    if settings.residual_csv:
        _write_history(settings.residual_csv, history)
    logger.info(f"Solver finished: status={status} iterations={iteration} objective={solution.objective:.10g} "
                f"residuals=({residuals['primal']:.2e}, {residuals['dual']:.2e}, {residuals['gap']:.2e}) "
                f"in {solution.solve_time:.1f}s")
    return solution


def _polish(problem: ConicProblem, A, b, layout: _ConeLayout, x, s, residuals):
    """Project x onto the equality set by regularised least squares; keep it if the primal residual drops."""
    E = problem.eq_matrix
    gram = (E @ E.T + 1e-12 * sp.identity(E.shape[0])).tocsc()
    correction = E.T @ spla.spsolve(gram, E @ x - problem.eq_rhs)
    x_new = x - correction
    s_new = layout.project(b - A @ x_new)

    def primal(xv, sv):
        return float(np.max(np.abs(A @ xv + sv - b), initial=0.0))

    before, after = primal(x, s), primal(x_new, s_new)
    if after <= before:
        logger.info(f"Polish reduced the primal residual {before:.3e} -> {after:.3e}")
        scale = 1.0 + max(np.max(np.abs(A @ x_new)), np.max(np.abs(s_new)), np.max(np.abs(b)))
        residuals = dict(residuals, primal=after / scale)
        return x_new, s_new, residuals
    logger.info("Polish did not improve the primal residual; keeping the ADMM iterate")
    return x, s, residuals


def block_eigen_range(problem: ConicProblem, solution: ConicSolution) -> List[Tuple[str, float, float]]:
    """(name, lambda_min, lambda_max) of every PSD block at the solution."""
    result = []
    for block in problem.psd_blocks:
        H = block.matrix(solution.x)
        w = np.linalg.eigvalsh(H if problem.field == "complex" else H.real)
        result.append((block.name, float(w[0]), float(w[-1])))
    return result


def equality_residual(problem: ConicProblem, solution: ConicSolution) -> float:
    """||E x - h|| / max(1, ||h||)."""
    r = problem.eq_matrix @ solution.x - problem.eq_rhs
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(problem.eq_rhs)))
