"""Acceptance criteria AC-1..AC-9; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from conftest import desk_space
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from gratinglab.corner import (
    corner_matrix,
    corner_spectrum,
    flat_determinant,
    flat_spectrum,
    leading_exponent,
    lemma1_predicates,
    project_fj,
    singular_e,
)
from gratinglab.forward import MediumCoefficients, convergence_study, energy_balance, solve_forward
from gratinglab.inverse import ReconstructConfig, reconstruct, synthesize_data
from gratinglab.modes import IncidentWave, uniform_grid
from gratinglab.profile import profile_distance, validate_profile
from gratinglab.series import constraint_matrix, nullspace_dimension

PI = math.pi
SQ2PI = math.sqrt(2 * PI)
MEDIUM = MediumCoefficients(1.5, 1.0, 2.25)
WAVE = IncidentWave(1.5, 0.0)
BINARY = validate_profile([0.0, PI], [1.0, 2.0])


@pytest.fixture
def report(capsys):
    def emit(tag: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def _det(lam, eta):
    return float(np.linalg.det(corner_matrix(lam, eta)))


def test_ac1_closed_form_matches_determinant_root(report):
    t0 = time.perf_counter()
    errs = []
    for lam in (0.1, 0.5, 2.0, 3.0, 10.0):
        root = brentq(lambda e: _det(lam, e), 2 / 3, 1 - 1e-12, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        errs.append(abs(root - leading_exponent(lam)))
    dt = time.perf_counter() - t0
    report("AC-1", max(errs) < 1e-10 and dt < 1.0, f"max |eta1 - root| = {max(errs):.2e}, {dt:.3f} s")


def test_ac2_two_thirds_bound(report):
    lams = [v for v in np.logspace(-3, 3, 50) if v != 1.0]
    margin = min(leading_exponent(v) - 2 / 3 for v in lams)
    far = leading_exponent(1e6) - 2 / 3
    ok = margin > 0 and 0 <= far < 1e-5
    report("AC-2", ok, f"min eta1 - 2/3 = {margin:.3e} over {len(lams)} lambdas, eta1(1e6) - 2/3 = {far:.2e}")


def test_ac3_flat_interface_determinant(report):
    rng = np.random.default_rng(3)
    errs = []
    for _ in range(50):
        lam = float(np.exp(rng.uniform(-3, 3)))
        delta = float(rng.uniform(0, 6))
        closed = (lam - 1) ** 2 * math.sin(PI * delta) ** 2
        errs.append(abs(flat_determinant(lam, delta, direct=True) - closed))
    spec = flat_spectrum(2.0, 6.0)
    ok = max(errs) < 1e-10 and spec == list(range(7))
    report("AC-3", ok, f"max |direct - closed| = {max(errs):.2e}, spectrum {spec}")


def _shooting_trace(c, H, medium, wave):
    """Independent two-point solve of the x1-independent flat-layer problem."""
    lam, k1, k2, b = medium.lam, medium.k1, medium.k2, wave.beta

    def rhs(x, y):
        a, k = (lam, k2) if x < c else (1.0, k1)
        return [y[1] / a, -a * k * k * y[0]]

    lo = solve_ivp(rhs, (0.0, c), [1.0 + 0j, 0j], rtol=1e-12, atol=1e-14)
    up = solve_ivp(rhs, (c, H), lo.y[:, -1], rtol=1e-12, atol=1e-14)
    u, v = up.y[:, -1]
    # radiation condition at x2 = H for incident exp(-i beta x2)
    scale = -2j * b * wave.amplitude * np.exp(-1j * b * H) / (v - 1j * b * u)
    return complex(scale * u)


def test_ac4_flat_energy_balance(report):
    assert WAVE.alpha == 0.0
    c, H = 1.0, 2.0
    exact = _shooting_trace(c, H, MEDIUM, WAVE)
    x = uniform_grid(64)
    t0 = time.perf_counter()
    res, errs = [], []
    for d in (32, 64, 128, 256):
        sol = solve_forward(validate_profile([0.0], [c]), MEDIUM, WAVE, H, 2 * PI / d)
        res.append(energy_balance(sol).residual)
        errs.append(float(np.max(np.abs(sol.trace(x) - exact)) / abs(exact)))
    dt = time.perf_counter() - t0
    floor = 1e-12  # below this the residual is roundoff and carries no ordering
    monotone = all(b <= max(a, floor) for a, b in zip(res, res[1:]))
    err_monotone = all(b < a for a, b in zip(errs, errs[1:]))
    ok = res[-1] < 1e-3 and monotone and err_monotone and errs[-1] < 1e-3 and dt < 60
    report("AC-4", ok, f"|sum e - 1| = {res[-1]:.1e} (levels {', '.join(f'{r:.1e}' for r in res)}), "
                       f"trace error vs 1D solve {errs[-1]:.2e} decreasing {err_monotone}, {dt:.1f} s")


def _diagonal_seed_count(L):
    # with lambda = 1 and q1 = q2 every seed shared by both sides is free
    cols = constraint_matrix(1.0, 1.0, 1.0, L).columns
    return sum(1 for c in cols if c.replace("1_", "2_", 1) in cols and "1_" in c)


def test_ac5_series_nullspace(report):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    dims = []
    for _ in range(10):
        lam = float(np.exp(rng.uniform(-2, 2)))
        q1, q2 = rng.uniform(0.2, 5.0, 2)
        if abs(lam - 1) < 1e-3 or abs(q1 - q2) < 1e-3:
            lam, q2 = lam + 0.5, q2 + 0.5
        dims.append(nullspace_dimension(constraint_matrix(lam, q1, q2, 12), 1e-8))
    diag = nullspace_dimension(constraint_matrix(1.0, 1.7, 1.7, 12), 1e-8)
    dt = time.perf_counter() - t0
    ok = dims == [0] * 10 and diag == _diagonal_seed_count(12) and dt < 10
    report("AC-5", ok, f"dims {dims}, lambda=1 q1=q2 dim {diag} (expected {_diagonal_seed_count(12)}), {dt:.2f} s")


def test_ac6_constant_field_leading_terms(report):
    k1, k2 = 2.0, 1.0
    mode = corner_spectrum(2.0, 0.0).modes[0]
    f0_ref = -(PI / 2) * (k2**2 + 3 * k1**2) / SQ2PI
    e0_ref = -(PI / 8) * (k2**2 + 3 * k1**2) / SQ2PI
    f_err, e_err = 0.0, 0.0
    for r in (0.01, 0.1, 0.5):
        f0 = project_fj(lambda rr, t: np.ones_like(t), mode, r, k1, k2)
        f_err = max(f_err, abs(f0 - f0_ref))
        e0 = singular_e(lambda s: np.full_like(s, f0, dtype=complex), 0.0, r)
        e_err = max(e_err, abs(e0 / r**2 - e0_ref))
    ok = f_err < 1e-10 and e_err < 1e-6
    report("AC-6", ok, f"|f0 - ref| = {f_err:.1e}, |e0/r^2 - ref| = {e_err:.1e}")


@pytest.mark.slow
def test_ac7_desk_scale_reconstruction(report):
    mesh_h = PI / 16
    space = desk_space()
    n = len(space.candidates())
    conf = ReconstructConfig(MEDIUM, WAVE, mesh_h, top_k=3, max_iters=200)
    t0 = time.perf_counter()
    clean = synthesize_data(BINARY, MEDIUM, WAVE, 3.0, mesh_h)
    r0 = reconstruct(clean, space, conf)
    noisy = synthesize_data(BINARY, MEDIUM, WAVE, 3.0, mesh_h, noise_rel=0.01, seed=20260101)
    r1 = reconstruct(noisy, space, conf)
    dt = time.perf_counter() - t0
    grid0, grid1 = r0.diagnostics["grid_best"], r1.diagnostics["grid_best"]
    d0, d1 = profile_distance(r0.best, BINARY), profile_distance(r1.best, BINARY)
    ok = (n == 81 and grid0 == BINARY.to_dict() and grid1 == BINARY.to_dict()
          and r0.gap >= 10 and r1.gap >= 3 and d0 < 0.05 and d1 < 0.05 and dt < 1800)
    report("AC-7", ok, f"{n} candidates; noiseless gap {r0.gap:.1f}, 1% noise gap {r1.gap:.1f}; "
                       f"refined distance to truth {d0:.1e} / {d1:.1e}; {dt:.1f} s")


def test_ac8_convergence_orders(report):
    h_list = [0.25, 0.125, 0.0625, 0.03125]
    t0 = time.perf_counter()
    binary = convergence_study(BINARY, MEDIUM, WAVE, h_list, 3.0)
    flat = convergence_study(validate_profile([0.0], [1.0]), MEDIUM, WAVE, h_list, 2.0)
    dt = time.perf_counter() - t0
    ob, of = binary.observed_order, flat.observed_order
    ok = ob >= 0.6 and abs(of - 2.0) <= 0.3 and dt < 600
    report("AC-8", ok, f"binary order {ob:.2f}, flat order {of:.2f}, {dt:.1f} s")


def test_ac9_shift_predicates(report):
    t0 = time.perf_counter()
    checked, bad = 0, []
    for lam in (2.0, 5.0):
        spec = corner_spectrum(lam, 6.0)
        for p in lemma1_predicates(spec):
            checked += 1
            if (p.shift_invariant, p.shift_antisymmetric) != p.expected:
                bad.append((lam, p.eta))
    dt = time.perf_counter() - t0
    report("AC-9", not bad and checked > 0 and dt < 1.0, f"{checked} modes classified, mismatches {bad}, {dt:.3f} s")
