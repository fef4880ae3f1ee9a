"""Observables against closed forms for coherent mixtures and small states."""

import math
import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import random_density
from kerrlattice.hilbert import basis_from_cutoffs
from kerrlattice.observables import (
    DensityMatrix,
    NotPositiveError,
    UndefinedCorrelationError,
    ansatz_patterns,
    build_ansatz,
    coherent_product_state,
    collect_observables,
    embed_density,
    extract_alpha0,
    fidelity,
    g1_correlation,
    induced_coherence,
    mean_occupancies,
    negativity,
    trace_distance,
    von_neumann_entropy,
)


def binary_entropy(p):
    return -sum(x * math.log(x) for x in (p, 1 - p) if x > 0)


def test_coherent_state_is_poissonian():
    basis = basis_from_cutoffs(1, 30, 30)
    alpha = 1.1 - 0.7j
    psi, weight = coherent_product_state(basis, [alpha])
    n = np.arange(31)
    poisson = np.exp(-abs(alpha) ** 2) * np.array([abs(alpha) ** (2 * k) / math.factorial(k) for k in n])
    assert np.allclose(np.abs(psi) ** 2, poisson, atol=1e-14)
    assert weight == pytest.approx(1.0, abs=1e-12)
    rho = DensityMatrix.from_pure(basis, psi)
    assert induced_coherence(rho) == pytest.approx(alpha, abs=1e-10)


def test_coherent_state_truncation_warns():
    basis = basis_from_cutoffs(1, 3, 3)
    with pytest.warns(RuntimeWarning):
        state = coherent_product_state(basis, [2.0])
    assert state.retained_weight < 0.9
    assert np.linalg.norm(state.vector) == pytest.approx(1.0)


def test_g1_product_coherent_states():
    basis = basis_from_cutoffs(2, 20, 40)
    alpha = 0.9 + 0.4j
    psi = coherent_product_state(basis, [alpha, -alpha]).vector
    rho = DensityMatrix.from_pure(basis, psi)
    assert g1_correlation(rho) == pytest.approx(-1.0, abs=1e-10)
    assert np.allclose(mean_occupancies(rho), abs(alpha) ** 2)


def test_g1_undefined_on_empty_site():
    basis = basis_from_cutoffs(2, 3, 3)
    with pytest.raises(UndefinedCorrelationError):
        g1_correlation(DensityMatrix.vacuum(basis))
    with pytest.raises(ValueError):
        g1_correlation(DensityMatrix.vacuum(basis), 1, 1)


def test_dimer_ansatz_entropy_closed_form():
    # two coherent products with overlap c = exp(-4|alpha|^2): eigenvalues (1 +- c)/2
    basis = basis_from_cutoffs(2, 18, 36)
    alpha = 0.6
    _, rho = build_ansatz(basis, alpha)
    c = math.exp(-4 * alpha ** 2)
    assert von_neumann_entropy(rho) == pytest.approx(binary_entropy((1 + c) / 2), abs=1e-10)
    assert g1_correlation(rho).real == pytest.approx(-1.0, abs=1e-10)


def test_triangle_ansatz_g1_is_minus_one_third():
    basis = basis_from_cutoffs(3, 12, 24)
    for alpha in (0.5, 0.9j, 0.6 - 0.5j):
        _, rho = build_ansatz(basis, alpha)
        assert g1_correlation(rho) == pytest.approx(-1 / 3, abs=1e-9)
    assert len(ansatz_patterns(3)) == 6
    assert len(set(ansatz_patterns(3))) == 6


def test_triangle_ansatz_entropy_tends_to_log_six():
    basis = basis_from_cutoffs(3, 14, 24)
    _, rho = build_ansatz(basis, 2.0)
    assert von_neumann_entropy(rho) == pytest.approx(math.log(6), abs=1e-6)


def test_extract_alpha0_recovers_amplitude_up_to_sign():
    basis = basis_from_cutoffs(2, 16, 32)
    alpha = 0.3 - 1.1j
    _, rho = build_ansatz(basis, alpha)
    got = extract_alpha0(rho)
    assert got ** 2 == pytest.approx(alpha ** 2, abs=1e-9)
    assert min(abs(got - alpha), abs(got + alpha)) < 1e-9


def test_entropy_values():
    basis = basis_from_cutoffs(1, 5, 5)
    assert von_neumann_entropy(DensityMatrix.vacuum(basis)) == 0.0
    mixed = DensityMatrix(basis, np.diag([0.25, 0.25, 0.25, 0.25, 0, 0]))
    assert von_neumann_entropy(mixed) == pytest.approx(math.log(4))
    with pytest.raises(NotPositiveError):
        von_neumann_entropy(DensityMatrix(basis, np.diag([1.1, -0.1, 0, 0, 0, 0])))


def reference_fidelity(a, b):
    s = sla.sqrtm(a)
    return float(np.real(np.trace(sla.sqrtm(s @ b @ s))) ** 2)


def test_fidelity_against_sqrtm(rng):
    basis = basis_from_cutoffs(2, 2, 3)
    for rank in (1, 3, basis.dim):
        a = random_density(rng, basis.dim, rank)
        b = random_density(rng, basis.dim)
        got = fidelity(DensityMatrix(basis, a), DensityMatrix(basis, b))
        assert got == pytest.approx(reference_fidelity(b, a), abs=1e-7)


def test_fidelity_of_pure_states_is_overlap(rng):
    basis = basis_from_cutoffs(2, 3, 4)
    psi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    phi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    psi /= np.linalg.norm(psi)
    phi /= np.linalg.norm(phi)
    a, b = DensityMatrix.from_pure(basis, psi), DensityMatrix.from_pure(basis, phi)
    assert fidelity(a, b) == pytest.approx(abs(np.vdot(psi, phi)) ** 2, abs=1e-12)
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_rejects_mismatch():
    a = DensityMatrix.vacuum(basis_from_cutoffs(1, 2, 2))
    b = DensityMatrix.vacuum(basis_from_cutoffs(1, 3, 3))
    with pytest.raises(ValueError):
        fidelity(a, b)


def test_trace_distance():
    basis = basis_from_cutoffs(1, 1, 1)
    zero = DensityMatrix(basis, np.diag([1.0, 0.0]))
    one = DensityMatrix(basis, np.diag([0.0, 1.0]))
    plus = DensityMatrix(basis, np.full((2, 2), 0.5))
    assert trace_distance(zero, one) == pytest.approx(1.0)
    assert trace_distance(zero, plus) == pytest.approx(math.sqrt(0.5))


def test_negativity_bell_and_product():
    basis = basis_from_cutoffs(2, 3, 3)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index_of[(0, 1)]] = psi[basis.index_of[(1, 0)]] = 1 / math.sqrt(2)
    assert negativity(DensityMatrix.from_pure(basis, psi)) == pytest.approx(0.5, abs=1e-12)
    big = basis_from_cutoffs(2, 14, 22)
    prod = coherent_product_state(big, [0.7, -0.5j]).vector
    assert negativity(DensityMatrix.from_pure(big, prod)) < 1e-8


def test_negativity_of_two_mode_squeezed_state():
    # |psi> ~ sum_n t^n |n, n>: negativity ((sum t^n)^2 - sum t^(2n)) / (2 * norm)
    n_m = 12
    basis = basis_from_cutoffs(2, n_m, 2 * n_m - 3)
    t = 0.4
    psi = np.zeros(basis.dim, dtype=complex)
    amps = []
    for n in range(n_m + 1):
        if (n, n) in basis.index_of:
            psi[basis.index_of[(n, n)]] = t ** n
            amps.append(t ** n)
    amps = np.array(amps) / np.linalg.norm(amps)
    psi /= np.linalg.norm(psi)
    expected = 0.5 * (amps.sum() ** 2 - 1.0)
    assert negativity(DensityMatrix.from_pure(basis, psi)) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(MemoryError):
        negativity(DensityMatrix.from_pure(basis, psi), max_dim=10)


def test_embed_density_roundtrip(rng):
    small = basis_from_cutoffs(2, 3, 4)
    large = basis_from_cutoffs(2, 5, 7)
    rho = DensityMatrix(small, random_density(rng, small.dim))
    up = embed_density(rho, large)
    back = embed_density(up, small)
    assert np.allclose(back.data, rho.data)
    assert up.trace() == pytest.approx(1.0)


def test_density_matrix_is_read_only_and_checked():
    basis = basis_from_cutoffs(1, 2, 2)
    rho = DensityMatrix.vacuum(basis)
    with pytest.raises(ValueError):
        rho.data[0, 0] = 2
    with pytest.raises(ValueError):
        DensityMatrix(basis, np.eye(2))
    with pytest.raises(ValueError):
        DensityMatrix(basis, 2 * np.eye(3)).validate()


def test_collect_observables_turns_failures_into_nan():
    basis = basis_from_cutoffs(2, 3, 4)
    rec = collect_observables(DensityMatrix.vacuum(basis), axis_value=0.0, pump_g=0, drive_f=0, residual=0.0)
    assert math.isnan(rec.g1.real)
    assert any("g1_correlation" in n for n in rec.extra["notes"])
    assert rec.entropy == 0.0
    assert rec.negativity == pytest.approx(0.0, abs=1e-15)


def test_collect_observables_on_ansatz():
    basis = basis_from_cutoffs(2, 16, 30)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, rho = build_ansatz(basis, 1.3j)
    rec = collect_observables(rho, axis_value=1.0, pump_g=1, drive_f=0, residual=0.0)
    assert rec.fidelity_ansatz == pytest.approx(1.0, abs=1e-9)
    assert rec.g1.real == pytest.approx(-1.0)
    assert abs(rec.induced_coherence) < 1e-12
