"""Truncated multi-mode Fock basis and bosonic ladder operators.

States are occupation vectors ``(n_0, ..., n_{N-1})`` obeying a per-mode
cutoff ``n_j <= n_max_per_mode`` and a total cutoff
``sum_j n_j <= n_max_total``.  They are ordered lexicographically with site 0
the most significant digit, so indices are reproducible across runs.

Operators are projected onto the basis: matrix elements whose target state
falls outside the truncated space are dropped.  Because annihilation only
lowers occupancies it is exact, and ``creation @ annihilation`` equals the
number operator on every basis state.  The reverse product
``annihilation @ creation`` does *not* equal ``number + 1`` on states sitting
at either cutoff; that is a property of the truncation, not a bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BasisTooLargeError",
    "LatticeSpec",
    "TruncationSpec",
    "FockBasis",
    "enumerate_basis",
    "annihilation",
    "creation",
    "number",
    "parity",
    "DEFAULT_MAX_DIM",
    "basis_from_cutoffs",
]

DEFAULT_MAX_DIM = 200_000


class BasisTooLargeError(RuntimeError):
    """Raised when a requested basis exceeds the configured size budget."""


@dataclass(frozen=True)
class TruncationSpec:
    n_max_per_mode: int
    n_max_total: int

    def __post_init__(self) -> None:
        if self.n_max_per_mode < 0 or self.n_max_total < 0:
            raise ValueError("cutoffs must be nonnegative")


@dataclass(frozen=True)
class LatticeSpec:
    """Number of cavities and the list of coupled (unordered) pairs."""

    n_sites: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        seen = set()
        normalized = []
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on site {a}")
            if not (0 <= a < self.n_sites and 0 <= b < self.n_sites):
                raise ValueError(f"edge ({a}, {b}) out of range for {self.n_sites} sites")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            normalized.append((a, b))
        object.__setattr__(self, "edges", tuple(normalized))

    @classmethod
    def default(cls, n_sites: int) -> "LatticeSpec":
        """Dimer for two sites, triangle for three, open chain otherwise."""
        if n_sites == 1:
            return cls(1, ())
        if n_sites == 2:
            return cls(2, ((0, 1),))
        if n_sites == 3:
            return cls(3, ((0, 1), (1, 2), (0, 2)))
        return cls(n_sites, tuple((j, j + 1) for j in range(n_sites - 1)))


def _admissible(n_sites: int, n_max: int, n_total: int) -> Iterator[tuple[int, ...]]:
    # depth-first in lexicographic order, pruning on the remaining total budget
    if n_sites == 0:
        yield ()
        return
    for n in range(min(n_max, n_total) + 1):
        for rest in _admissible(n_sites - 1, n_max, n_total - n):
            yield (n,) + rest


class FockBasis:
    """Ordered list of admissible occupation vectors plus its inverse map.

    Treat instances as immutable; the ``states`` array is marked read-only.
    """

    def __init__(self, lattice: LatticeSpec, trunc: TruncationSpec, states: np.ndarray):
        self.lattice = lattice
        self.trunc = trunc
        states = np.ascontiguousarray(states, dtype=np.int64).reshape(-1, lattice.n_sites)
        states.setflags(write=False)
        self.states = states
        self.index_of = {tuple(int(v) for v in s): i for i, s in enumerate(states)}

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        return (
            f"FockBasis(n_sites={self.n_sites}, n_max_per_mode={self.trunc.n_max_per_mode}, "
            f"n_max_total={self.trunc.n_max_total}, dim={self.dim})"
        )

    @cached_property
    def _codes(self) -> np.ndarray:
        # mixed-radix code; monotone in lexicographic order so searchsorted inverts it
        radix = self.trunc.n_max_per_mode + 1
        weights = radix ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return self.states @ weights

    def lookup(self, occupations: np.ndarray) -> np.ndarray:
        """Vectorized index lookup; returns -1 for vectors outside the basis."""
        occ = np.atleast_2d(np.asarray(occupations, dtype=np.int64))
        radix = self.trunc.n_max_per_mode + 1
        inside = np.all((occ >= 0) & (occ <= self.trunc.n_max_per_mode), axis=1)
        inside &= occ.sum(axis=1) <= self.trunc.n_max_total
        weights = radix ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        codes = occ @ weights
        pos = np.searchsorted(self._codes, codes)
        pos = np.clip(pos, 0, self.dim - 1)
        found = inside & (self._codes[pos] == codes)
        return np.where(found, pos, -1)

    @cached_property
    def total_number(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def vacuum_index(self) -> int:
        return self.index_of[(0,) * self.n_sites]


def enumerate_basis(
    lattice: LatticeSpec, trunc: TruncationSpec, max_dim: int = DEFAULT_MAX_DIM
) -> FockBasis:
    """Enumerate every occupation vector allowed by both cutoffs.

    Raises
    ------
    BasisTooLargeError
        If more than ``max_dim`` states would be produced.
    """
    states = []
    for s in _admissible(lattice.n_sites, trunc.n_max_per_mode, trunc.n_max_total):
        states.append(s)
        if len(states) > max_dim:
            raise BasisTooLargeError(
                f"basis exceeds max_dim={max_dim} for {lattice.n_sites} sites, "
                f"N_m={trunc.n_max_per_mode}, N_mT={trunc.n_max_total}"
            )
    return FockBasis(lattice, trunc, np.array(states, dtype=np.int64))


def _check_site(basis: FockBasis, site: int) -> None:
    if not 0 <= site < basis.n_sites:
        raise IndexError(f"site {site} out of range for {basis.n_sites} sites")


def annihilation(basis: FockBasis, site: int) -> sp.csr_matrix:
    """Annihilation operator of ``site`` as a complex CSR matrix."""
    _check_site(basis, site)
    occ = basis.states[:, site]
    cols = np.nonzero(occ > 0)[0]
    lowered = basis.states[cols].copy()
    lowered[:, site] -= 1
    rows = basis.lookup(lowered)
    keep = rows >= 0
    data = np.sqrt(occ[cols[keep]]).astype(np.complex128)
    return sp.csr_matrix((data, (rows[keep], cols[keep])), shape=(basis.dim, basis.dim))


def creation(basis: FockBasis, site: int) -> sp.csr_matrix:
    """Adjoint of :func:`annihilation` on the truncated basis."""
    return annihilation(basis, site).conj().T.tocsr()


def number(basis: FockBasis, site: int) -> sp.csr_matrix:
    _check_site(basis, site)
    return sp.diags(basis.states[:, site].astype(np.complex128), format="csr")


def parity(basis: FockBasis) -> sp.csr_matrix:
    """Global photon-number parity ``(-1)**sum(n)`` as a diagonal matrix."""
    signs = np.where(basis.total_number % 2 == 0, 1.0, -1.0).astype(np.complex128)
    return sp.diags(signs, format="csr")


def basis_from_cutoffs(n_sites: int, n_max_per_mode: int, n_max_total: int,
                       edges: Sequence[tuple[int, int]] | None = None) -> FockBasis:
    """Shorthand used by tests and the CLI."""
    lattice = LatticeSpec(n_sites, tuple(edges)) if edges is not None else LatticeSpec.default(n_sites)
    return enumerate_basis(lattice, TruncationSpec(n_max_per_mode, n_max_total))
