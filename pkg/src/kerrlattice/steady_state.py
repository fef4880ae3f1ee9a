"""Non-equilibrium steady states: direct, Krylov and time-evolution solvers.

All three methods return a :class:`SteadyStateResult` whose ``residual`` is
``||L(rho)||_F / ||rho||_F`` measured on the solution *before* it is
Hermitian-symmetrized and trace-normalized.  Positivity is never imposed; the
smallest eigenvalue is available through ``result.rho.min_eigenvalue()``.

Parity reduction
----------------
Without a coherent drive the generator commutes with conjugation by the
global parity operator, so the parity-even operators (blocks ``even x even``
and ``odd x odd``) form an invariant subspace that contains the steady state.
The direct and Krylov solvers work in that subspace when
``SolverConfig.use_parity`` is set, which halves the number of unknowns.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import DOP853

from .hilbert import FockBasis, LatticeSpec, TruncationSpec, enumerate_basis
from .liouvillian import Liouvillian, ModelParams, apply_liouvillian, assemble_liouvillian, unvec, vec
from .observables import (
    DensityMatrix,
    UndefinedCorrelationError,
    embed_density,
    g1_correlation,
    mean_occupancies,
    von_neumann_entropy,
)

__all__ = [
    "SolverConfig",
    "SteadyStateResult",
    "ConvergenceReport",
    "SingularSystemError",
    "DirectBudgetError",
    "solve_direct",
    "solve_iterative",
    "evolve_to_steady",
    "propagate",
    "solve",
    "converge_cutoffs",
    "METHODS",
]

log = logging.getLogger(__name__)

METHODS = ("direct", "iterative", "evolve")


class SingularSystemError(RuntimeError):
    """The trace-constrained steady-state system has no unique solution."""


class DirectBudgetError(RuntimeError):
    """The direct solve would exceed ``SolverConfig.direct_max_unknowns``."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "iterative"
    residual_tol: float = 1e-10
    max_iterations: int = 600
    restart: int = 50
    evolve_horizon: float = 500.0
    evolve_step_tol: float = 1e-9
    direct_max_unknowns: int = 15_000
    use_parity: bool = True
    fallback: bool = True

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.residual_tol <= 0 or self.evolve_step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1 or self.restart < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class SteadyStateResult:
    rho: DensityMatrix
    residual: float
    method_used: str
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def _residual(liouv: Liouvillian, rho: np.ndarray) -> float:
    norm = np.linalg.norm(rho)
    if norm == 0:
        return math.inf
    return float(np.linalg.norm(_apply(liouv, rho)) / norm)


def _apply(liouv: Liouvillian, rho: np.ndarray) -> np.ndarray:
    if liouv.matrix is not None:
        return unvec(liouv.matrix @ vec(rho), liouv.dim)
    return apply_liouvillian(liouv, rho)


def _finalize(liouv: Liouvillian, raw: np.ndarray, method: str, tol: float,
              diagnostics: dict, normalize: bool = True) -> SteadyStateResult:
    raw = np.asarray(raw, dtype=np.complex128)
    if normalize:
        tr = np.trace(raw)
        if abs(tr) < 1e-300:
            raise SingularSystemError("solution has vanishing trace")
        raw = raw / tr
    residual = _residual(liouv, raw)
    rho = raw
    if normalize:
        rho = 0.5 * (raw + raw.conj().T)
        rho = rho / np.trace(rho).real
    diagnostics = dict(diagnostics)
    diagnostics["residual_symmetrized"] = _residual(liouv, rho)
    return SteadyStateResult(
        rho=DensityMatrix(liouv.basis, rho),
        residual=residual,
        method_used=method,
        converged=bool(residual <= tol),
        diagnostics=diagnostics,
    )


def _parity_blocks(basis: FockBasis, params: ModelParams, use_parity: bool) -> list[np.ndarray]:
    if use_parity and complex(params.drive_f) == 0:
        even = np.nonzero(basis.total_number % 2 == 0)[0]
        odd = np.nonzero(basis.total_number % 2 == 1)[0]
        return [b for b in (even, odd) if b.size]
    return [np.arange(basis.dim)]


class _BlockSpace:
    """Packed coordinates for operators that are block diagonal in ``blocks``."""

    def __init__(self, dim: int, blocks: Sequence[np.ndarray]):
        self.dim = dim
        self.blocks = list(blocks)
        self.sizes = [b.size for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum([m * m for m in self.sizes])]).astype(int)
        self.n = int(self.offsets[-1])
        # packed positions of the diagonal (population) entries
        self.diag_positions = np.concatenate(
            [off + np.arange(m) * (m + 1) for off, m in zip(self.offsets[:-1], self.sizes)]
        )

    def pack(self, rho: np.ndarray) -> np.ndarray:
        return np.concatenate([rho[np.ix_(b, b)].ravel(order="F") for b in self.blocks])

    def unpack(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for b, m, off in zip(self.blocks, self.sizes, self.offsets):
            out[np.ix_(b, b)] = x[off:off + m * m].reshape((m, m), order="F")
        return out

    def block_views(self, x: np.ndarray):
        for m, off in zip(self.sizes, self.offsets):
            yield x[off:off + m * m].reshape((m, m), order="F")

    def full_indices(self) -> np.ndarray:
        """Column-stacked indices in the full ``D**2`` vector, in packed order."""
        parts = []
        for b in self.blocks:
            rows = np.tile(b, b.size)
            cols = np.repeat(b, b.size)
            parts.append(rows + cols * self.dim)
        return np.concatenate(parts)

    def trace(self, x: np.ndarray) -> complex:
        return complex(x[self.diag_positions].sum())


class _SylvesterPreconditioner:
    """Inverse of ``X -> -i (Heff X - X Heff^dag)`` on each diagonal block.

    With ``Heff = V diag(lam) V^-1`` the inverse is
    ``V [(V^-1 Y V^-dag) / (-i (lam_i - conj(lam_j)))] V^dag``.
    """

    def __init__(self, h_eff: sp.spmatrix, space: _BlockSpace):
        self.space = space
        self.factors = []
        h = h_eff.tocsr()
        for b in space.blocks:
            block = h[b][:, b].toarray()
            lam, v = sla.eig(block)
            vinv = np.linalg.inv(v)
            den = -1j * (lam[:, None] - lam.conj()[None, :])
            scale = max(float(np.abs(den).max()), 1.0)
            # a real eigenvalue (decoupled dark state) makes the map singular
            small = np.abs(den) < 1e-12 * scale
            den[small] = scale
            self.factors.append((v, vinv, 1.0 / den))

    def __call__(self, y: np.ndarray) -> np.ndarray:
        out = np.empty_like(y)
        for (v, vinv, inv_den), m, off in zip(self.factors, self.space.sizes, self.space.offsets):
            yb = y[off:off + m * m].reshape((m, m), order="F")
            z = (vinv @ yb @ vinv.conj().T) * inv_den
            out[off:off + m * m] = (v @ z @ v.conj().T).ravel(order="F")
        return out


def _reduced_matrix(liouv: Liouvillian, space: _BlockSpace) -> sp.csr_matrix:
    if liouv.matrix is None:
        raise DirectBudgetError("direct solve needs the assembled Liouvillian")
    idx = space.full_indices()
    if idx.size == liouv.dim ** 2 and np.array_equal(idx, np.arange(idx.size)):
        return liouv.matrix
    return liouv.matrix[idx][:, idx].tocsr()


def solve_direct(liouv: Liouvillian, config: SolverConfig = SolverConfig()) -> SteadyStateResult:
    """Sparse LU solve with one population row replaced by the trace functional.

    The replaced row is the population row with the largest diagonal entry of
    ``L``; off-diagonal rows cannot be dropped because only population rows
    carry weight in the left null vector ``vec(I)``.
    """
    start = time.perf_counter()
    blocks = _parity_blocks(liouv.basis, liouv.params, config.use_parity)
    space = _BlockSpace(liouv.dim, blocks)
    if space.n > config.direct_max_unknowns:
        raise DirectBudgetError(f"{space.n} unknowns exceed direct budget {config.direct_max_unknowns}")
    if liouv.matrix is None:
        liouv = assemble_liouvillian(liouv.basis, liouv.params)
    mat = _reduced_matrix(liouv, space).tolil()
    pops = space.diag_positions
    diag = np.abs(mat.diagonal()[pops])
    row = int(pops[int(np.argmax(diag))])
    mat[row, :] = 0
    mat[row, pops] = 1.0
    rhs = np.zeros(space.n, dtype=np.complex128)
    rhs[row] = 1.0
    try:
        lu = spla.splu(mat.tocsc())
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("direct solve produced non-finite values")
    diagnostics = {"unknowns": space.n, "replaced_row": row, "wall_time": time.perf_counter() - start}
    return _finalize(liouv, space.unpack(x), "direct", config.residual_tol, diagnostics)


def solve_iterative(liouv: Liouvillian, config: SolverConfig = SolverConfig(),
                    initial_guess: DensityMatrix | np.ndarray | None = None) -> SteadyStateResult:
    """Right-preconditioned GMRES for ``L(rho_ref + delta) = 0`` with ``Tr delta = 0``.

    ``rho_ref`` is the initial guess (maximally mixed state by default).  Trial
    corrections ``M^-1 y`` are projected onto the traceless subspace, which
    removes the trivial solution ``delta = -rho_ref``.
    """
    start = time.perf_counter()
    dim = liouv.dim
    blocks = _parity_blocks(liouv.basis, liouv.params, config.use_parity)
    space = _BlockSpace(dim, blocks)
    if initial_guess is None:
        ref = np.eye(dim, dtype=np.complex128) / dim
    else:
        ref = np.array(initial_guess.data if isinstance(initial_guess, DensityMatrix) else initial_guess,
                       dtype=np.complex128)
        ref = 0.5 * (ref + ref.conj().T)
        ref = ref / np.trace(ref).real
    x = space.pack(ref)
    x = x / space.trace(x)
    ref_packed = x.copy()
    precond = _SylvesterPreconditioner(liouv.effective_hamiltonian, space)

    def apply_packed(v: np.ndarray) -> np.ndarray:
        return space.pack(_apply(liouv, space.unpack(v)))

    def correction(y: np.ndarray) -> np.ndarray:
        z = precond(y)
        return z - space.trace(z) * ref_packed

    op = spla.LinearOperator((space.n, space.n), matvec=lambda y: apply_packed(correction(y)),
                             dtype=np.complex128)
    iterations = 0
    history = []
    best_x, best_res = x, math.inf

    def count(_):
        nonlocal iterations
        iterations += 1

    while True:
        r = -apply_packed(x)
        xnorm = np.linalg.norm(space.unpack(x))
        res = float(np.linalg.norm(r) / xnorm)
        history.append(res)
        if res < best_res:
            best_x, best_res = x, res
        if res <= config.residual_tol or iterations >= config.max_iterations:
            break
        if len(history) > 2 and res > 0.5 * history[-2]:
            log.info("Krylov residual stagnated at %.3e", res)
            break
        remaining = config.max_iterations - iterations
        restart = min(config.restart, remaining)
        cycles = max(1, remaining // restart)
        y, _ = spla.gmres(op, r, rtol=0.0, atol=0.25 * config.residual_tol * xnorm,
                          restart=restart, maxiter=cycles, callback=count, callback_type="pr_norm")
        x = x + correction(y)

    diagnostics = {
        "unknowns": space.n,
        "iterations": iterations,
        "residual_history": history,
        "wall_time": time.perf_counter() - start,
    }
    result = _finalize(liouv, space.unpack(best_x), "iterative", config.residual_tol, diagnostics)
    if result.converged or not config.fallback:
        return result
    if space.n <= config.direct_max_unknowns:
        log.warning("iterative solve stalled at %.3e; falling back to direct", result.residual)
        fallback = solve_direct(liouv, config)
        fallback.diagnostics["fallback_from"] = "iterative"
        fallback.diagnostics["iterative_residual"] = result.residual
        return fallback
    result.diagnostics["stalled"] = True
    return result


def _make_integrator(liouv: Liouvillian, rho0: np.ndarray, t_bound: float, step_tol: float):
    dim = liouv.dim
    if liouv.matrix is not None:
        mat = liouv.matrix
        fun = lambda t, y: mat @ y  # noqa: E731
    else:
        fun = lambda t, y: vec(apply_liouvillian(liouv, unvec(y, dim)))  # noqa: E731
    y0 = vec(np.asarray(rho0, dtype=np.complex128)).copy()
    return DOP853(fun, 0.0, y0, t_bound, rtol=step_tol, atol=1e-3 * step_tol), fun


def _as_array(rho) -> np.ndarray:
    return np.asarray(rho.data if isinstance(rho, DensityMatrix) else rho, dtype=np.complex128)


def propagate(liouv: Liouvillian, rho0, t_final: float, step_tol: float = 1e-9) -> DensityMatrix:
    """State at ``t_final`` under ``d rho/dt = L rho`` (Dormand-Prince 8(5,3))."""
    solver, _ = _make_integrator(liouv, _as_array(rho0), t_final, step_tol)
    while solver.status == "running":
        solver.step()
    if solver.status == "failed":
        raise RuntimeError("time integration failed")
    return DensityMatrix(liouv.basis, unvec(solver.y, liouv.dim))


def evolve_to_steady(liouv: Liouvillian, rho0, config: SolverConfig = SolverConfig()) -> SteadyStateResult:
    """Integrate until ``||L rho|| / ||rho|| < residual_tol`` or the horizon is reached.

    The state is never renormalized along the way; the trace drift is reported.
    """
    start = time.perf_counter()
    dim = liouv.dim
    rho0 = _as_array(rho0)
    trace0 = complex(np.trace(rho0))
    solver, fun = _make_integrator(liouv, rho0, config.evolve_horizon, config.evolve_step_tol)
    steps = 0
    residual = math.inf
    while True:
        y = solver.y
        residual = float(np.linalg.norm(fun(solver.t, y)) / np.linalg.norm(y))
        if residual <= config.residual_tol or solver.status != "running":
            break
        solver.step()
        steps += 1
    rho = unvec(solver.y, dim)
    drift = abs(complex(np.trace(rho)) - trace0)
    diagnostics = {
        "steps": steps,
        "time": float(solver.t),
        "trace_drift": drift,
        "trace_drift_ok": drift < 1e-9,
        "horizon_reached": residual > config.residual_tol,
        "wall_time": time.perf_counter() - start,
    }
    return _finalize(liouv, rho, "evolve", config.residual_tol, diagnostics, normalize=False)


def solve(liouv: Liouvillian, config: SolverConfig = SolverConfig(),
          initial_guess: DensityMatrix | np.ndarray | None = None) -> SteadyStateResult:
    """Dispatch on ``config.method``."""
    if config.method == "direct":
        return solve_direct(liouv, config)
    if config.method == "iterative":
        return solve_iterative(liouv, config, initial_guess)
    rho0 = np.eye(liouv.dim, dtype=np.complex128) / liouv.dim if initial_guess is None else _as_array(initial_guess)
    return evolve_to_steady(liouv, rho0, config)


@dataclass
class ConvergenceReport:
    table: list[dict]
    converged: bool
    observable_tol: float
    converged_at: int | None = None
    warnings: list[str] = field(default_factory=list)


def _tracked(rho: DensityMatrix) -> dict:
    occ = float(np.mean(mean_occupancies(rho)))
    g1 = complex(math.nan, math.nan)
    if rho.basis.n_sites >= 2:
        try:
            g1 = g1_correlation(rho, 0, 1)
        except UndefinedCorrelationError:
            pass
    return {"mean_occupancy": occ, "g1": g1, "entropy": von_neumann_entropy(rho)}


def _change(a: dict, b: dict) -> float:
    worst = 0.0
    for key in ("mean_occupancy", "g1", "entropy"):
        x, y = complex(a[key]), complex(b[key])
        xnan, ynan = np.isnan(x), np.isnan(y)
        if xnan and ynan:
            continue
        if xnan or ynan:
            return math.inf
        worst = max(worst, abs(x - y))
    return worst


def converge_cutoffs(lattice: LatticeSpec, params: ModelParams, solver: SolverConfig,
                     schedule: Sequence[TruncationSpec], observable_tol: float = 1e-3,
                     warm_start: bool = True, initial_guess: DensityMatrix | None = None,
                     ) -> tuple[SteadyStateResult, ConvergenceReport]:
    """Solve at increasing cutoffs until occupancy, g1 and entropy settle.

    Consecutive levels must differ by less than ``observable_tol`` in every
    tracked quantity.  If the schedule runs out first, the last result is
    returned with ``report.converged == False``.  Each level is warm-started
    from the previous one; ``initial_guess`` (any basis) seeds the first.
    """
    if not schedule:
        raise ValueError("empty truncation schedule")
    for lo, hi in zip(schedule, schedule[1:]):
        if not (hi.n_max_per_mode > lo.n_max_per_mode and hi.n_max_total > lo.n_max_total):
            raise ValueError("schedule must increase strictly in both cutoffs")
    table: list[dict] = []
    previous = None
    result = None
    converged = False
    for trunc in schedule:
        basis = enumerate_basis(lattice, trunc)
        liouv = assemble_liouvillian(basis, params, materialize="auto")
        seed = result.rho if result is not None else initial_guess
        guess = embed_density(seed, basis) if (warm_start and seed is not None) else None
        result = solve(liouv, solver, guess)
        obs = _tracked(result.rho)
        row = {
            "n_max_per_mode": trunc.n_max_per_mode,
            "n_max_total": trunc.n_max_total,
            "dim": basis.dim,
            **obs,
            "residual": result.residual,
            "solver_converged": result.converged,
            "change": math.nan if previous is None else _change(previous, obs),
        }
        table.append(row)
        log.info("cutoffs (%d, %d) D=%d: %s", trunc.n_max_per_mode, trunc.n_max_total, basis.dim, obs)
        if previous is not None and row["change"] < observable_tol:
            converged = True
            break
        previous = obs
    # earliest level from which every later level agrees within tolerance
    converged_at = None
    if converged:
        converged_at = len(table) - 2
        while converged_at > 0 and table[converged_at]["change"] < observable_tol:
            converged_at -= 1
    warnings = []
    occ = [r["mean_occupancy"] for r in table]
    if len(occ) >= 2 and all(b > a for a, b in zip(occ, occ[1:])) and not converged:
        warnings.append("mean occupancy still rising with the cutoff; truncation likely too tight")
    report = ConvergenceReport(table=table, converged=converged, observable_tol=observable_tol,
                               converged_at=converged_at, warnings=warnings)
    return result, report
