"""Spin-model references: classical Ising enumeration, XY exact diagonalization
and the mapping of spin correlators onto the photonic g1.

Ising convention: ``E(s) = j * sum_bonds s_i s_k - h * sum_i s_i`` with
``s_i = +-1``; ``j > 0`` is antiferromagnetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "IsingResult",
    "SpinXYParams",
    "XYGroundState",
    "ising_brute_force",
    "xy_hamiltonian",
    "xy_ground_state",
    "g1_spin_map",
    "TRIANGLE",
    "DIMER",
]

ISING_MAX_SPINS = 24
XY_MAX_SPINS = 14
XY_DENSE_MAX_SPINS = 10

DIMER = ((0, 1),)
TRIANGLE = ((0, 1), (1, 2), (0, 2))


def _check_bonds(n_spins: int, bonds: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    for a, b in bonds:
        if a == b or not (0 <= a < n_spins and 0 <= b < n_spins):
            raise ValueError(f"invalid bond ({a}, {b}) for {n_spins} spins")
        out.append((int(a), int(b)))
    return out


@dataclass(frozen=True)
class IsingResult:
    """Exact classical ground set.

    ``pair_correlation`` is the bond-averaged ``s_i s_k`` and ``magnetization``
    the per-spin mean, both averaged uniformly over the ground configurations
    and stored as exact fractions.
    """

    ground_energy: Fraction
    degeneracy: int
    ground_configs: tuple[tuple[int, ...], ...]
    pair_correlation: Fraction
    magnetization: Fraction


def ising_brute_force(n_spins: int, bonds: Sequence[tuple[int, int]], j_ising: float | Fraction,
                      h_field: float | Fraction = 0.0) -> IsingResult:
    """Enumerate all ``2**n_spins`` configurations.

    Couplings are converted with :class:`fractions.Fraction`; pass Fractions
    (or decimal strings through ``Fraction("0.2")``) to avoid binary rounding.
    """
    if not 1 <= n_spins <= ISING_MAX_SPINS:
        raise ValueError(f"n_spins must be in [1, {ISING_MAX_SPINS}]")
    bonds = _check_bonds(n_spins, bonds)
    codes = np.arange(2 ** n_spins, dtype=np.int64)
    # bit i set -> spin i down; spin 0 is the most significant bit
    spins = 1 - 2 * ((codes[:, None] >> np.arange(n_spins - 1, -1, -1)) & 1).astype(np.int8)
    bond_sum = np.zeros(codes.size, dtype=np.int64)
    for a, b in bonds:
        bond_sum += spins[:, a].astype(np.int64) * spins[:, b]
    mag = spins.sum(axis=1, dtype=np.int64)
    # energies depend only on the integer pair (bond_sum, mag); compare those exactly
    j_exact, h_exact = Fraction(j_ising), Fraction(h_field)
    pairs = np.unique(np.stack([bond_sum, mag], axis=1), axis=0)
    energies = {(int(s), int(m)): j_exact * int(s) - h_exact * int(m) for s, m in pairs}
    e_min = min(energies.values())
    winners = [k for k, e in energies.items() if e == e_min]
    mask = np.zeros(codes.size, dtype=bool)
    for s, m in winners:
        mask |= (bond_sum == s) & (mag == m)
    ground = spins[mask]
    count = int(mask.sum())
    n_bonds = max(len(bonds), 1)
    corr = Fraction(int(bond_sum[mask].sum()), count * n_bonds) if bonds else Fraction(0)
    magn = Fraction(int(mag[mask].sum()), count * n_spins)
    return IsingResult(
        ground_energy=e_min,
        degeneracy=count,
        ground_configs=tuple(tuple(int(v) for v in row) for row in ground),
        pair_correlation=corr,
        magnetization=magn,
    )


@dataclass(frozen=True)
class SpinXYParams:
    n_spins: int
    bonds: tuple[tuple[int, int], ...]
    h_z: float
    j_xy: float
    eta_x: float = 1.0
    eta_y: float = 1.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.h_z, self.j_xy, self.eta_x, self.eta_y)):
            raise ValueError("XY parameters must be finite")
        object.__setattr__(self, "bonds", tuple(_check_bonds(self.n_spins, self.bonds)))


_SX = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
_SY = sp.csr_matrix(np.array([[0.0, -1j], [1j, 0.0]]))
_SZ = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))


def _site_op(op: sp.spmatrix, site: int, n: int) -> sp.csr_matrix:
    left = sp.identity(2 ** site, format="csr")
    right = sp.identity(2 ** (n - site - 1), format="csr")
    return sp.kron(sp.kron(left, op), right, format="csr")


def xy_hamiltonian(params: SpinXYParams) -> sp.csr_matrix:
    """``h_z sum sz - J_xy sum_bonds (eta_x sx sx + eta_y sy sy)``, spin 0 leftmost."""
    n = params.n_spins
    h = sp.csr_matrix((2 ** n, 2 ** n), dtype=np.complex128)
    for j in range(n):
        h = h + params.h_z * _site_op(_SZ, j, n)
    for a, b in params.bonds:
        xx = _site_op(_SX, a, n) @ _site_op(_SX, b, n)
        yy = _site_op(_SY, a, n) @ _site_op(_SY, b, n)
        h = h - params.j_xy * (params.eta_x * xx + params.eta_y * yy)
    return h.tocsr()


@dataclass(frozen=True)
class XYGroundState:
    """Ground manifold and correlators in its maximally mixed state."""

    energy: float
    states: np.ndarray
    corr_xx: np.ndarray
    corr_yy: np.ndarray
    sz: np.ndarray
    low_energies: np.ndarray

    @property
    def degeneracy(self) -> int:
        return self.states.shape[1]


def xy_ground_state(params: SpinXYParams, degeneracy_tol: float = 1e-9, n_low: int = 12) -> XYGroundState:
    n = params.n_spins
    if not 1 <= n <= XY_MAX_SPINS:
        raise ValueError(f"n_spins must be in [1, {XY_MAX_SPINS}]")
    h = xy_hamiltonian(params)
    dim = 2 ** n
    if n <= XY_DENSE_MAX_SPINS:
        evals, evecs = np.linalg.eigh(h.toarray())
    else:
        k = min(n_low, dim - 2)
        evals, evecs = spla.eigsh(h, k=k, which="SA")
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
    scale = max(1.0, abs(evals[0]))
    ground = evals <= evals[0] + degeneracy_tol * scale
    vecs = evecs[:, ground]
    weight = 1.0 / vecs.shape[1]

    def mixed_expectation(op: sp.spmatrix) -> float:
        return float(np.real(np.einsum("ik,ik->", vecs.conj(), op @ vecs)) * weight)

    corr_xx = np.array([mixed_expectation(_site_op(_SX, a, n) @ _site_op(_SX, b, n)) for a, b in params.bonds])
    corr_yy = np.array([mixed_expectation(_site_op(_SY, a, n) @ _site_op(_SY, b, n)) for a, b in params.bonds])
    sz = np.array([mixed_expectation(_site_op(_SZ, j, n)) for j in range(n)])
    return XYGroundState(
        energy=float(evals[0]),
        states=vecs,
        corr_xx=corr_xx,
        corr_yy=corr_yy,
        sz=sz,
        low_energies=np.asarray(evals[:n_low], dtype=float),
    )


def g1_spin_map(corr_xx: float, corr_yy: float, sz: float, alpha: complex) -> float:
    """Photonic g1 predicted from spin correlators for local coherent amplitude ``alpha``.

    ``B+- = sqrt(tanh|alpha|^2) +- 1/sqrt(tanh|alpha|^2)``.
    """
    mod2 = abs(alpha) ** 2
    if mod2 == 0:
        raise ValueError("alpha must be nonzero (B- diverges)")
    root = math.sqrt(math.tanh(mod2))
    b_plus = root + 1.0 / root
    b_minus = root - 1.0 / root
    num = b_plus ** 2 * corr_xx + b_minus ** 2 * corr_yy
    den = (b_plus ** 2 + b_minus ** 2) + 2.0 * b_plus * b_minus * sz
    return num / den
