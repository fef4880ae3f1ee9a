"""Hamiltonian, jump operators and Lindblad generator of the cavity array.

Vectorization convention: column stacking, ``vec(rho)[i + j*D] = rho[i, j]``
(``rho.ravel(order="F")``).  Under it ``vec(A rho B) = (B.T kron A) vec(rho)``,
which fixes every Kronecker product below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .hilbert import FockBasis, annihilation

__all__ = [
    "ModelParams",
    "Liouvillian",
    "LiouvillianTooLargeError",
    "build_hamiltonian",
    "build_dissipators",
    "assemble_liouvillian",
    "apply_liouvillian",
    "vec",
    "unvec",
    "DEFAULT_NNZ_BUDGET",
]

DEFAULT_NNZ_BUDGET = 60_000_000
# above this many nonzeros "auto" keeps the generator matrix-free
AUTO_MATERIALIZE_NNZ = 8_000_000


class LiouvillianTooLargeError(RuntimeError):
    """Raised when the sparse superoperator would exceed the nonzero budget."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters in a common frequency unit (usually gamma = 1).

    ``pump_g`` and ``drive_f`` may be complex; the remaining fields are real.
    """

    delta: float = 0.0
    kerr_u: float = 0.0
    pump_g: complex = 0.0
    hop_j: float = 0.0
    loss_gamma: float = 1.0
    loss_eta: float = 0.0
    drive_f: complex = 0.0

    def __post_init__(self) -> None:
        values = [self.delta, self.kerr_u, self.hop_j, self.loss_gamma, self.loss_eta]
        values += [complex(self.pump_g).real, complex(self.pump_g).imag]
        values += [complex(self.drive_f).real, complex(self.drive_f).imag]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("all model parameters must be finite")
        if self.loss_gamma < 0 or self.loss_eta < 0:
            raise ValueError("loss rates must be nonnegative")

    @property
    def dissipative(self) -> bool:
        return self.loss_gamma > 0 or self.loss_eta > 0

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def build_hamiltonian(basis: FockBasis, params: ModelParams) -> sp.csr_matrix:
    """Kerr cavities with two-photon pump, optional coherent drive and hopping.

    Hopping enters once per unordered bond as ``-J (a_j^dag a_k + h.c.)``.
    """
    g = complex(params.pump_g)
    f = complex(params.drive_f)
    # diagonal part: -delta n + (U/2) n(n-1), exact on the truncated basis
    occ = basis.states.astype(float)
    diag = (-params.delta * occ + 0.5 * params.kerr_u * occ * (occ - 1.0)).sum(axis=1)
    h = sp.diags(diag.astype(np.complex128), format="csr")
    ann = [annihilation(basis, j) for j in range(basis.n_sites)]
    for a in ann:
        if g != 0:
            a2 = a @ a
            h = h + 0.5 * np.conj(g) * a2 + 0.5 * g * a2.conj().T
        if f != 0:
            h = h + np.conj(f) * a + f * a.conj().T
    if params.hop_j != 0:
        for j, k in basis.lattice.edges:
            hop = ann[j].conj().T @ ann[k]
            h = h - params.hop_j * (hop + hop.conj().T)
    h = h.tocsr()
    h.sum_duplicates()
    h.eliminate_zeros()
    h.sort_indices()
    return h


def build_dissipators(basis: FockBasis, params: ModelParams) -> list[sp.csr_matrix]:
    """Jump operators ``sqrt(gamma) a_j`` then ``sqrt(eta) a_j**2``; zero rates are skipped."""
    ops = []
    ann = [annihilation(basis, j) for j in range(basis.n_sites)]
    if params.loss_gamma > 0:
        ops += [(math.sqrt(params.loss_gamma) * a).tocsr() for a in ann]
    if params.loss_eta > 0:
        ops += [(math.sqrt(params.loss_eta) * (a @ a)).tocsr() for a in ann]
    return ops


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).ravel(order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


@dataclass
class Liouvillian:
    """Sparse Lindblad generator together with the operators it was built from."""

    basis: FockBasis
    params: ModelParams
    hamiltonian: sp.csr_matrix
    jumps: list[sp.csr_matrix]
    matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @cached_property
    def effective_hamiltonian(self) -> sp.csr_matrix:
        """``H - (i/2) sum_k G_k^dag G_k``."""
        k = sp.csr_matrix((self.dim, self.dim), dtype=np.complex128)
        for c in self.jumps:
            k = k + c.conj().T @ c
        return (self.hamiltonian - 0.5j * k).tocsr()

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_liouvillian(self, rho)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Action on a column-stacked vector, without the assembled matrix."""
        return vec(self.apply(unvec(v, self.dim)))


def _estimate_nnz(h_eff: sp.spmatrix, jumps: list[sp.spmatrix], dim: int) -> int:
    return 2 * dim * h_eff.nnz + sum(c.nnz ** 2 for c in jumps)


def assemble_liouvillian(
    basis: FockBasis,
    params: ModelParams,
    nnz_budget: int = DEFAULT_NNZ_BUDGET,
    materialize: bool | str = True,
) -> Liouvillian:
    """Build the generator ``L`` acting on column-stacked density matrices.

    ``L = -i (I kron Heff) + i (conj(Heff) kron I) + sum_k conj(G_k) kron G_k``
    with ``Heff = H - (i/2) sum_k G_k^dag G_k``.  With ``materialize=False`` only
    the operators are kept and the generator is available matrix-free;
    ``"auto"`` materializes only when the estimated nonzero count is modest.
    """
    h = build_hamiltonian(basis, params)
    jumps = build_dissipators(basis, params)
    liou = Liouvillian(basis, params, h, jumps)
    dim = basis.dim
    h_eff = liou.effective_hamiltonian
    estimate = _estimate_nnz(h_eff, jumps, dim)
    if materialize == "auto":
        materialize = estimate <= min(AUTO_MATERIALIZE_NNZ, nnz_budget)
    if not materialize:
        return liou
    if estimate > nnz_budget:
        raise LiouvillianTooLargeError(
            f"Liouvillian would hold ~{estimate} nonzeros (budget {nnz_budget}); D={dim}"
        )
    eye = sp.identity(dim, dtype=np.complex128, format="csr")
    mat = -1j * sp.kron(eye, h_eff, format="csr") + 1j * sp.kron(h_eff.conj(), eye, format="csr")
    for c in jumps:
        mat = mat + sp.kron(c.conj(), c, format="csr")
    mat = mat.tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    liou.matrix = mat
    return liou


def apply_liouvillian(liouvillian: Liouvillian, rho: np.ndarray) -> np.ndarray:
    """Matrix-free ``L(rho)`` for a dense ``D x D`` array."""
    rho = np.asarray(rho)
    dim = liouvillian.dim
    if rho.shape != (dim, dim):
        raise ValueError(f"rho has shape {rho.shape}, expected {(dim, dim)}")
    h_eff = liouvillian.effective_hamiltonian
    left = h_eff @ rho
    # rho @ Heff^dag == (Heff @ rho^dag)^dag
    right = (h_eff @ rho.conj().T).conj().T
    out = -1j * (left - right)
    for c in liouvillian.jumps:
        out += c @ (c @ rho.conj().T).conj().T
    return np.asarray(out)
