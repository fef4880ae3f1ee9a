"""Observables evaluated on steady-state (or trial) density matrices.

Conventions
-----------
* Site indices are zero based; the "first" cavity of the two-site and
  three-site arrays is site 0.
* Entropies are in nats.
* ``extract_alpha0`` returns the square root of ``<a_0^2>`` on the branch
  ``Re >= 0`` (``Im <= 0`` when the real part vanishes).  The coherent-state
  mixtures built from it are invariant under ``alpha0 -> -alpha0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import FockBasis, annihilation

__all__ = [
    "DensityMatrix",
    "CoherentMixture",
    "CoherentState",
    "ObservableRecord",
    "UndefinedCorrelationError",
    "NotPositiveError",
    "expectation",
    "g1_correlation",
    "von_neumann_entropy",
    "fidelity",
    "trace_distance",
    "coherent_product_state",
    "build_ansatz",
    "ansatz_patterns",
    "extract_alpha0",
    "negativity",
    "induced_coherence",
    "mean_occupancies",
    "embed_density",
]

ENTROPY_CLAMP = 1e-14
NEGATIVE_EIGENVALUE_TOL = 1e-8
G1_DENOMINATOR_MIN = 1e-14
NEGATIVITY_MAX_DIM = 6000


class UndefinedCorrelationError(ValueError):
    """g1 is undefined when the reference site is empty."""


class NotPositiveError(ValueError):
    """Density matrix has eigenvalues below the roundoff tolerance."""


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density matrix on a truncated Fock basis.

    The wrapped array is copied and made read-only, so observables can never
    modify a solver result in place.
    """

    basis: FockBasis
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"density matrix shape {arr.shape} does not match basis dim {self.basis.dim}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_pure(cls, basis: FockBasis, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=np.complex128)
        return cls(basis, np.outer(psi, psi.conj()))

    @classmethod
    def vacuum(cls, basis: FockBasis) -> "DensityMatrix":
        psi = np.zeros(basis.dim, dtype=np.complex128)
        psi[basis.vacuum_index()] = 1.0
        return cls.from_pure(basis, psi)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def hermiticity_error(self) -> float:
        return float(np.abs(self.data - self.data.conj().T).max())

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.data + self.data.conj().T)
        return np.linalg.eigvalsh(herm)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def validate(self, tol: float = 1e-10) -> None:
        """Raise ``ValueError`` unless Hermitian and unit trace within ``tol``."""
        if self.hermiticity_error() > tol:
            raise ValueError(f"density matrix not Hermitian (error {self.hermiticity_error():.3e})")
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"density matrix trace {self.trace()} differs from 1")


@lru_cache(maxsize=64)
def _ann(basis: FockBasis, site: int) -> sp.csr_matrix:
    return annihilation(basis, site)


def expectation(rho: DensityMatrix, op) -> complex:
    """``Tr(rho @ op)`` for a sparse or dense operator."""
    if op.shape != rho.data.shape:
        raise ValueError(f"operator shape {op.shape} does not match density matrix {rho.data.shape}")
    if sp.issparse(op):
        return complex(op.multiply(rho.data.T).sum())
    return complex(np.sum(np.asarray(op) * rho.data.T))


def mean_occupancies(rho: DensityMatrix) -> np.ndarray:
    pops = np.real(np.diag(rho.data))
    return pops @ rho.basis.states.astype(float)


def g1_correlation(rho: DensityMatrix, site_a: int = 0, site_b: int = 1) -> complex:
    """Normalized first-order coherence ``<a_a^dag a_b> / <a_a^dag a_a>``."""
    if site_a == site_b:
        raise ValueError("g1 needs two distinct sites")
    a = _ann(rho.basis, site_a)
    b = _ann(rho.basis, site_b)
    den = float(mean_occupancies(rho)[site_a])
    if abs(den) < G1_DENOMINATOR_MIN:
        raise UndefinedCorrelationError(f"site {site_a} is empty; g1 undefined")
    num = expectation(rho, (a.conj().T @ b).tocsr())
    return num / den


def von_neumann_entropy(rho: DensityMatrix) -> float:
    lam = rho.eigenvalues
    if lam[0] < -NEGATIVE_EIGENVALUE_TOL:
        raise NotPositiveError(f"eigenvalue {lam[0]:.3e} below -{NEGATIVE_EIGENVALUE_TOL}")
    lam = lam[lam > ENTROPY_CLAMP]
    # an eigenvalue 1 + eps would give a tiny negative value
    return max(0.0, float(-np.sum(lam * np.log(lam))))


def _spectral_floor(lam: np.ndarray) -> float:
    # eigenvalues below this are rounding noise; their square roots would not be
    return float(max(lam.max(initial=0.0), 0.0) * lam.size * np.finfo(float).eps)


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    # X with X X^dag = mat (eigenvalues clamped at 0), columns only for the support
    lam, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    keep = lam > _spectral_floor(lam)
    return vecs[:, keep] * np.sqrt(lam[keep])


def fidelity(rho_a: DensityMatrix, rho_b: DensityMatrix, herm_tol: float = 1e-8) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``, clipped to [0, 1].

    Uses ``a = X X^dag``; the nonzero spectrum of ``sqrt(a) b sqrt(a)`` equals
    that of ``X^dag b X``, which is small when ``a`` has low rank.
    """
    if rho_a.dim != rho_b.dim:
        raise ValueError("density matrices live on different bases")
    for r in (rho_a, rho_b):
        if r.hermiticity_error() > herm_tol:
            raise ValueError(f"fidelity needs Hermitian inputs (error {r.hermiticity_error():.3e})")
    x = _psd_factor(rho_a.data)
    inner = x.conj().T @ rho_b.data @ x
    lam = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    lam = lam[lam > _spectral_floor(lam)]
    value = float(np.sum(np.sqrt(lam)) ** 2)
    return min(max(value, 0.0), 1.0)


def trace_distance(rho_a, rho_b) -> float:
    """``0.5 * ||a - b||_1`` for DensityMatrix or plain arrays."""
    a = rho_a.data if isinstance(rho_a, DensityMatrix) else np.asarray(rho_a)
    b = rho_b.data if isinstance(rho_b, DensityMatrix) else np.asarray(rho_b)
    diff = a - b
    lam = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return 0.5 * float(np.abs(lam).sum())


class CoherentState(NamedTuple):
    vector: np.ndarray
    retained_weight: float


def coherent_product_state(basis: FockBasis, amplitudes: Sequence[complex],
                           warn_below: float = 1.0 - 1e-6) -> CoherentState:
    """Product of single-mode coherent states projected on ``basis`` and renormalized."""
    amps = [complex(a) for a in amplitudes]
    if len(amps) != basis.n_sites:
        raise ValueError(f"need {basis.n_sites} amplitudes, got {len(amps)}")
    n_max = basis.trunc.n_max_per_mode
    psi = np.ones(basis.dim, dtype=np.complex128)
    for site, alpha in enumerate(amps):
        # c[n] = exp(-|alpha|^2/2) alpha^n / sqrt(n!)
        coeffs = np.empty(n_max + 1, dtype=np.complex128)
        coeffs[0] = math.exp(-0.5 * abs(alpha) ** 2)
        for n in range(1, n_max + 1):
            coeffs[n] = coeffs[n - 1] * alpha / math.sqrt(n)
        psi *= coeffs[basis.states[:, site]]
    weight = float(np.vdot(psi, psi).real)
    if weight < warn_below:
        warnings.warn(
            f"coherent state {amps} keeps only {weight:.6g} of its norm in the truncated basis",
            RuntimeWarning,
            stacklevel=2,
        )
    return CoherentState(psi / math.sqrt(weight), weight)


def ansatz_patterns(n_sites: int) -> list[tuple[int, ...]]:
    """Sign patterns of the antiferromagnetic mixtures (two for a dimer, six for a triangle)."""
    if n_sites == 2:
        return [(1, -1), (-1, 1)]
    if n_sites == 3:
        return [(1, 1, -1), (1, -1, 1), (-1, 1, 1), (-1, -1, 1), (-1, 1, -1), (1, -1, -1)]
    raise ValueError("default patterns exist for 2 or 3 sites; pass patterns explicitly")


@dataclass(frozen=True)
class CoherentMixture:
    alpha0: complex
    sign_patterns: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]
    retained_weights: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(set(self.sign_patterns)) != len(self.sign_patterns):
            raise ValueError("sign patterns must be distinct")
        if len(self.weights) != len(self.sign_patterns):
            raise ValueError("one weight per pattern")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")


def build_ansatz(basis: FockBasis, alpha0: complex, n_sites: int | None = None,
                 patterns: Sequence[Sequence[int]] | None = None,
                 weights: Sequence[float] | None = None) -> tuple[CoherentMixture, DensityMatrix]:
    """Equal-weight mixture of coherent product states ``|s_1 alpha0, ..., s_N alpha0>``."""
    n_sites = basis.n_sites if n_sites is None else n_sites
    if n_sites != basis.n_sites:
        raise ValueError("n_sites does not match the basis")
    pats = [tuple(int(s) for s in p) for p in (patterns or ansatz_patterns(n_sites))]
    if weights is None:
        weights = [1.0 / len(pats)] * len(pats)
    rho = np.zeros((basis.dim, basis.dim), dtype=np.complex128)
    retained = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for pat, w in zip(pats, weights):
            state = coherent_product_state(basis, [s * alpha0 for s in pat])
            retained.append(state.retained_weight)
            rho += w * np.outer(state.vector, state.vector.conj())
    mixture = CoherentMixture(complex(alpha0), tuple(pats), tuple(float(w) for w in weights), tuple(retained))
    return mixture, DensityMatrix(basis, rho)


def extract_alpha0(rho: DensityMatrix, site: int = 0) -> complex:
    a = _ann(rho.basis, site)
    squared = expectation(rho, (a @ a).tocsr())
    root = complex(np.sqrt(squared))
    if root.real == 0.0 and root.imag > 0.0:
        root = -root
    return root


def induced_coherence(rho: DensityMatrix, site: int = 0) -> complex:
    return expectation(rho, _ann(rho.basis, site))


def negativity(rho: DensityMatrix, partition_site: int = 0,
               max_dim: int = NEGATIVITY_MAX_DIM) -> float:
    """Sum of |negative eigenvalues| of the partial transpose on one site.

    The basis is embedded in the product of single-mode spaces of size
    ``min(N_m, N_mT) + 1``; amplitudes on states removed by the total cutoff
    are exactly zero there.
    """
    basis = rho.basis
    n = basis.n_sites
    if not 0 <= partition_site < n:
        raise IndexError(f"site {partition_site} out of range")
    d = min(basis.trunc.n_max_per_mode, basis.trunc.n_max_total) + 1
    full = d ** n
    if full > max_dim:
        raise MemoryError(f"negativity embedding needs dimension {full} > {max_dim}")
    radix = d ** np.arange(n - 1, -1, -1)
    idx = basis.states @ radix
    big = np.zeros((full, full), dtype=np.complex128)
    big[np.ix_(idx, idx)] = rho.data
    shape = (d,) * n
    t = big.reshape(shape + shape)
    # swap the partition site's ket and bra indices
    axes = list(range(2 * n))
    axes[partition_site], axes[n + partition_site] = axes[n + partition_site], axes[partition_site]
    pt = t.transpose(axes).reshape(full, full)
    support = np.any(pt != 0, axis=0) | np.any(pt != 0, axis=1)
    pt = pt[np.ix_(support, support)]
    lam = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    return float(-lam[lam < 0].sum())


def embed_density(rho: DensityMatrix, target: FockBasis) -> DensityMatrix:
    """Copy ``rho`` into a larger (or smaller) basis, dropping states absent from ``target``."""
    pos = target.lookup(rho.basis.states)
    keep = pos >= 0
    out = np.zeros((target.dim, target.dim), dtype=np.complex128)
    out[np.ix_(pos[keep], pos[keep])] = rho.data[np.ix_(keep, keep)]
    tr = np.trace(out).real
    if tr > 0:
        out /= tr
    return DensityMatrix(target, out)


@dataclass
class ObservableRecord:
    """One sweep point. Complex quantities stay complex; undefined values are NaN."""

    axis_value: float
    pump_g: complex
    drive_f: complex
    mean_occupancy: tuple[float, ...]
    g1: complex
    entropy: float
    negativity: float
    fidelity_ansatz: float
    alpha0: complex
    induced_coherence: complex
    residual: float
    status: str = "ok"
    extra: dict = field(default_factory=dict)


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs), None
    except (UndefinedCorrelationError, NotPositiveError, MemoryError, ValueError) as exc:
        return None, f"{fn.__name__}: {exc}"


def collect_observables(rho: DensityMatrix, *, axis_value: float, pump_g: complex, drive_f: complex,
                        residual: float, status: str = "ok", with_negativity: bool = True,
                        with_fidelity: bool = True) -> ObservableRecord:
    """Evaluate every tracked quantity; failures become NaN and are listed in ``extra``."""
    nan = float("nan")
    notes = []
    n_sites = rho.basis.n_sites
    g1 = complex(nan, nan)
    if n_sites >= 2:
        val, err = _safe(g1_correlation, rho, 0, 1)
        if err:
            notes.append(err)
        else:
            g1 = val
    entropy, err = _safe(von_neumann_entropy, rho)
    if err:
        notes.append(err)
        entropy = nan
    neg = nan
    if with_negativity and n_sites >= 2:
        neg, err = _safe(negativity, rho, 0)
        if err:
            notes.append(err)
            neg = nan
    alpha0 = extract_alpha0(rho)
    fid = nan
    if with_fidelity and n_sites in (2, 3):
        _, ansatz = build_ansatz(rho.basis, alpha0)
        fid, err = _safe(fidelity, ansatz, rho)
        if err:
            notes.append(err)
            fid = nan
    return ObservableRecord(
        axis_value=float(axis_value),
        pump_g=complex(pump_g),
        drive_f=complex(drive_f),
        mean_occupancy=tuple(float(v) for v in mean_occupancies(rho)),
        g1=complex(g1),
        entropy=float(entropy),
        negativity=float(neg),
        fidelity_ansatz=float(fid),
        alpha0=alpha0,
        induced_coherence=induced_coherence(rho),
        residual=float(residual),
        status=status,
        extra={"notes": notes} if notes else {},
    )
