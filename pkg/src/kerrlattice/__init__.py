"""Nonequilibrium steady states of driven dissipative Kerr cavity arrays."""

from .hilbert import FockBasis, LatticeSpec, TruncationSpec, basis_from_cutoffs, enumerate_basis
from .liouvillian import ModelParams, assemble_liouvillian
from .observables import (
    DensityMatrix,
    ObservableRecord,
    build_ansatz,
    extract_alpha0,
    fidelity,
    g1_correlation,
    mean_occupancies,
    negativity,
    von_neumann_entropy,
)
from .steady_state import SolverConfig, SteadyStateResult, converge_cutoffs, solve

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "FockBasis",
    "LatticeSpec",
    "ModelParams",
    "ObservableRecord",
    "SolverConfig",
    "SteadyStateResult",
    "TruncationSpec",
    "assemble_liouvillian",
    "basis_from_cutoffs",
    "build_ansatz",
    "converge_cutoffs",
    "enumerate_basis",
    "extract_alpha0",
    "fidelity",
    "g1_correlation",
    "mean_occupancies",
    "negativity",
    "solve",
    "von_neumann_entropy",
    "__version__",
]
