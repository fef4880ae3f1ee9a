"""Acceptance criteria 1 to 10.

Each test prints one ``CRITERION k: PASS|FAIL`` line (also collected into
the pytest terminal summary) and then asserts the same condition.
"""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from kerrlattice.cli import main as cli_main
from kerrlattice.config import parse_config
from kerrlattice.hilbert import LatticeSpec, TruncationSpec, basis_from_cutoffs, parity
from kerrlattice.io import read_records
from kerrlattice.liouvillian import ModelParams, apply_liouvillian, assemble_liouvillian, unvec, vec
from kerrlattice.observables import (
    DensityMatrix,
    build_ansatz,
    coherent_product_state,
    extract_alpha0,
    fidelity,
    g1_correlation,
    mean_occupancies,
    negativity,
    trace_distance,
    von_neumann_entropy,
)
from kerrlattice.runner import fit_power_law, run_drive_response
from kerrlattice.spin_ref import TRIANGLE, ising_brute_force
from kerrlattice.steady_state import SolverConfig, converge_cutoffs, solve

ROOT = Path(__file__).resolve().parents[1]
TRIANGLE_CONFIG = ROOT / "configs" / "frustrated_triangle.toml"
DEFAULTS = dict(delta=-10.0, kerr_u=10.0, hop_j=-10.0, loss_gamma=1.0, loss_eta=1.0)


def report(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_superoperator_invariants():
    start = time.perf_counter()
    basis = basis_from_cutoffs(2, 4, 8)
    liouv = assemble_liouvillian(basis, ModelParams(pump_g=5.0, **DEFAULTS))
    p = parity(basis).toarray()
    rng = np.random.default_rng(1)
    worst = {"trace": 0.0, "hermiticity": 0.0, "parity": 0.0}
    for _ in range(100):
        m = rng.normal(size=(basis.dim,) * 2) + 1j * rng.normal(size=(basis.dim,) * 2)
        x = 0.5 * (m + m.conj().T)
        for y in (apply_liouvillian(liouv, x), unvec(liouv.matrix @ vec(x), basis.dim)):
            worst["trace"] = max(worst["trace"], abs(np.trace(y)))
            worst["hermiticity"] = max(worst["hermiticity"], np.abs(y - y.conj().T).max())
            worst["parity"] = max(worst["parity"], np.abs(apply_liouvillian(liouv, p @ x @ p) - p @ y @ p).max())
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-12 and elapsed < 10
    report(1, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f} s")


def test_criterion_2_vacuum():
    basis = basis_from_cutoffs(2, 6, 10)
    result = solve(assemble_liouvillian(basis, ModelParams(**DEFAULTS)), SolverConfig(residual_tol=1e-13))
    s = von_neumann_entropy(result.rho)
    n = float(mean_occupancies(result.rho).sum())
    ok = s < 1e-10 and n < 1e-10 and result.residual < 1e-12
    report(2, ok, f"S {s:.1e}, n_total {n:.1e}, residual {result.residual:.1e}")


def test_criterion_3_cross_method():
    start = time.perf_counter()
    basis = basis_from_cutoffs(2, 6, 10)
    liouv = assemble_liouvillian(basis, ModelParams(pump_g=5.0, **DEFAULTS))
    rhos = {m: solve(liouv, SolverConfig(method=m, residual_tol=1e-10)).rho for m in ("direct", "iterative", "evolve")}
    d = {
        "direct/iterative": trace_distance(rhos["direct"], rhos["iterative"]),
        "direct/evolve": trace_distance(rhos["direct"], rhos["evolve"]),
        "iterative/evolve": trace_distance(rhos["iterative"], rhos["evolve"]),
    }
    elapsed = time.perf_counter() - start
    ok = max(d.values()) < 1e-6 and elapsed < 60
    report(3, ok, ", ".join(f"{k} {v:.1e}" for k, v in d.items()) + f", {elapsed:.1f} s")


def converged_state(n_sites, g, schedule):
    lattice = LatticeSpec.default(n_sites)
    params = ModelParams(pump_g=g, **DEFAULTS)
    trunc = [TruncationSpec(*c) for c in schedule]
    return converge_cutoffs(lattice, params, SolverConfig(restart=20, residual_tol=1e-9), trunc, 1e-3)


def test_criterion_4_dimer_asymptotics():
    start = time.perf_counter()
    result, rep = converged_state(2, 30.0, [(14, 22), (18, 28), (22, 34), (26, 40)])
    rho = result.rho
    g1 = g1_correlation(rho).real
    s = von_neumann_entropy(rho)
    _, ansatz = build_ansatz(rho.basis, extract_alpha0(rho))
    infidelity = 1 - fidelity(ansatz, rho)
    elapsed = time.perf_counter() - start
    ok = rep.converged and -1 <= g1 <= -0.9 and abs(s - math.log(2)) < 0.1 and infidelity < 1e-2 and elapsed < 600
    level = rep.table[rep.converged_at] if rep.converged else rep.table[-1]
    report(4, ok, f"g1 {g1:.4f}, S - ln2 {s - math.log(2):+.4f}, 1-F {infidelity:.1e}, "
                  f"cutoffs ({level['n_max_per_mode']}, {level['n_max_total']}), converged {rep.converged}, "
                  f"{elapsed:.0f} s")


@pytest.fixture(scope="module")
def triangle_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("triangle")
    start = time.perf_counter()
    code = cli_main(["converge", "--config", str(TRIANGLE_CONFIG), "--out", str(out / "first"), "--deterministic"])
    return code, out, time.perf_counter() - start


def test_criterion_5_triangle_asymptotics(triangle_run):
    code, out, elapsed = triangle_run
    (rec,) = read_records(out / "first" / "triangle_g20.csv")
    g1, s, f = rec.g1.real, rec.entropy, rec.fidelity_ansatz
    ok = (code == 0 and rec.status == "ok" and abs(g1 + 1 / 3) < 0.1 and abs(s - math.log(6)) < 0.15
          and f > 0.9 and elapsed < 1800)
    report(5, ok, f"g1 {g1:.4f} (|g1+1/3| {abs(g1 + 1 / 3):.3f}), S - ln6 {s - math.log(6):+.4f}, "
                  f"F {f:.4f}, status {rec.status}, {elapsed:.0f} s")


def test_criterion_6_spin_oracles():
    start = time.perf_counter()
    zero = ising_brute_force(3, TRIANGLE, 1)
    plateau = [ising_brute_force(3, TRIANGLE, 1, Fraction(h)).magnetization for h in ("0.2", "0.5", "1.0", "1.5")]
    elapsed = time.perf_counter() - start
    ok = (zero.degeneracy == 6 and zero.pair_correlation == Fraction(-1, 3)
          and all(m == Fraction(1, 3) for m in plateau) and elapsed < 1)
    report(6, ok, f"degeneracy {zero.degeneracy}, correlation {zero.pair_correlation}, "
                  f"plateau {[str(m) for m in plateau]}, {elapsed * 1e3:.0f} ms")


def test_criterion_7_negativity():
    values = {}
    for g in (2.0, 5.0, 10.0, 30.0):
        result, _ = converged_state(2, g, [(14, 22), (18, 28)])
        values[g] = negativity(result.rho)
    g_max = max(values, key=values.get)
    # N_mT = 2 N_m keeps the truncated space a tensor product, so the state stays exactly separable
    big = basis_from_cutoffs(2, 14, 28)
    product = DensityMatrix.from_pure(big, coherent_product_state(big, [1.2, -1.2]).vector)
    n_prod = negativity(product)
    ok = (max(values[g] for g in (5.0, 10.0)) > 1e-3 and values[30.0] < values[g_max] and g_max != 30.0
          and n_prod < 1e-8)
    report(7, ok, ", ".join(f"N(G={g:g}) {v:.2e}" for g, v in values.items()) + f", product {n_prod:.1e}")


F_GRID = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0, 24.0, 32.0]


def response_curve(n_sites, cutoffs):
    cfg = parse_config({
        "lattice": {"n_sites": n_sites},
        "model": {"delta_over_gamma": -10.0, "kerr_u_over_gamma": 10.0, "hop_j_over_gamma": -10.0,
                  "loss_eta_over_gamma": 1.0, "pump_g_over_gamma": 20.0},
        "truncation": {"n_max_per_mode": cutoffs[0], "n_max_total": cutoffs[1]},
        "solver": {"restart": 20, "residual_tol": 1e-9},
        "sweep": {"axis": "drive_f_magnitude", "values": F_GRID, "phase_rule": "lock_to_alpha0"},
    })
    resp = run_drive_response(cfg)
    assert all(o.record.status == "ok" for o in resp.outcomes)
    return resp.normalized_response


def longest_window(values, lo=0.25, hi=0.45):
    best = run = 0
    for v in values:
        run = run + 1 if lo <= v <= hi else 0
        best = max(best, run)
    return best


def test_criterion_8_drive_plateau():
    start = time.perf_counter()
    tri = response_curve(3, (12, 18))
    dimer = response_curve(2, (14, 22))
    elapsed = time.perf_counter() - start
    w3, w2 = longest_window(tri), longest_window(dimer)
    monotone = bool(np.all(np.diff(dimer) > 0))
    ok = w3 >= 3 and w2 < 3 and monotone and elapsed < 3600
    report(8, ok, f"N=3 window {w3} points {np.round(tri, 3).tolist()}, N=2 window {w2} monotone {monotone}, "
                  f"{elapsed:.0f} s")


def test_criterion_9_power_law_recovery():
    from kerrlattice.observables import ObservableRecord

    errors = []
    for quantity, asym, nu, pref in (("g1_offset", -1 / 3, -1.02, -0.9), ("entropy_offset", math.log(6), -0.7, 1.4)):
        recs = []
        for g in np.linspace(30, 60, 7):
            y = asym + pref * g ** nu
            recs.append(ObservableRecord(
                axis_value=g, pump_g=g, drive_f=0, mean_occupancy=(0.0,), g1=complex(y), entropy=y,
                negativity=0.0, fidelity_ansatz=1.0, alpha0=1.0, induced_coherence=0.0, residual=0.0))
        fit = fit_power_law(recs, quantity, window=(30, 60))
        errors.append(abs(fit.exponent - nu))
    report(9, max(errors) < 1e-9, f"exponent errors {[f'{e:.1e}' for e in errors]}")


@pytest.mark.skip(reason="stretch goal: hours of runtime at G/gamma in [30, 60] with larger cutoffs")
def test_criterion_9_stretch_exponent():
    pass


def test_criterion_10_determinism(triangle_run):
    _, out, _ = triangle_run
    code = cli_main(["converge", "--config", str(TRIANGLE_CONFIG), "--out", str(out / "second"), "--deterministic"])
    first = (out / "first" / "triangle_g20.csv").read_bytes()
    second = (out / "second" / "triangle_g20.csv").read_bytes()
    same_json = (out / "first" / "triangle_g20.json").read_bytes() == (out / "second" / "triangle_g20.json").read_bytes()
    report(10, first == second and code in (0, 3), f"CSV identical {first == second}, JSON identical {same_json}, "
                                                   f"{len(first)} bytes")
