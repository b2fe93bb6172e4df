import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gratinglab.errors import GridTooCoarse, RayleighAnomaly, ValidationError
from gratinglab.modes import (
    IncidentWave,
    ModeSet,
    RayleighSpectrum,
    beta_of,
    build_modes,
    dtn_coefficients,
    efficiencies,
    modes_csv,
    rayleigh_from_trace,
    uniform_grid,
)


def test_incident_wave_validation():
    with pytest.raises(ValidationError):
        IncidentWave(0.0)
    with pytest.raises(ValidationError):
        IncidentWave(1.0, math.pi / 2)
    w = IncidentWave(2.0, 0.3)
    assert w.alpha**2 + w.beta**2 == pytest.approx(4.0, rel=1e-15)
    assert w.beta > 0


def _modes_k2(N=4):
    # k1 = 2, theta = 0 hits beta_2 = 0, so build_modes refuses N >= 2;
    # assemble the set directly to test the per-order formulas
    n = np.arange(-N, N + 1)
    return ModeSet(2.0, 0.0, N, n, n.astype(float), beta_of(2.0, n.astype(float)))


def test_propagating_and_evanescent_branches():
    m = build_modes(IncidentWave(2.0), 1)
    assert m.alpha_n[m.index(1)] == 1.0
    assert m.beta_n[m.index(1)] == pytest.approx(math.sqrt(3))
    assert m.beta_n.size == 3
    assert beta_of(2.0, 3.0) == pytest.approx(1j * math.sqrt(5))


def test_rayleigh_anomaly():
    with pytest.raises(RayleighAnomaly):
        build_modes(IncidentWave(1.0), 2)


def test_default_truncation():
    assert build_modes(IncidentWave(1.5)).N == 12


def test_dtn_coefficients():
    m = _modes_k2()
    f = np.zeros(9, complex)
    f[m.index(0)] = 1
    out = dtn_coefficients(f, m)
    assert out[m.index(0)] == pytest.approx(2j)
    assert np.count_nonzero(out) == 1
    assert not np.any(dtn_coefficients(np.zeros(9), m))
    f = np.zeros(9, complex)
    f[m.index(3)] = 1
    assert dtn_coefficients(f, m)[m.index(3)] == pytest.approx(-math.sqrt(5))
    with pytest.raises(ValidationError):
        dtn_coefficients(np.zeros(3), m)


def test_rayleigh_from_incident_only_is_zero():
    w = IncidentWave(1.5, 0.2)
    m = build_modes(w, 5)
    x = uniform_grid(64)
    spec = rayleigh_from_trace(w(x, 2.0), w, 2.0, m)
    assert np.max(np.abs(spec.A_n)) < 1e-14


def test_rayleigh_single_mode():
    w = IncidentWave(1.5, 0.2)
    m = build_modes(w, 5)
    x, H = uniform_grid(64), 2.0
    u = w(x, H) + np.exp(1j * m.alpha_n[m.index(0)] * x + 1j * m.beta_n[m.index(0)] * H)
    spec = rayleigh_from_trace(u, w, H, m)
    assert spec.coefficient(0) == pytest.approx(1.0, abs=1e-13)
    # evanescent A_n are referenced to x2 = 0, so compare amplitudes on x2 = H
    on_trace = np.delete(spec.A_n * np.exp(1j * m.beta_n * H), m.index(0))
    assert np.max(np.abs(on_trace)) < 1e-14


def test_grid_too_coarse():
    w = IncidentWave(1.5)
    m = build_modes(w, 5)
    with pytest.raises(GridTooCoarse):
        rayleigh_from_trace(np.zeros(23), w, 2.0, m)


def test_efficiencies():
    w = IncidentWave(0.9)  # only n = 0 propagates
    m = build_modes(w, 3)
    A = np.zeros(7, complex)
    A[m.index(0)] = 1
    e = efficiencies(RayleighSpectrum(m, A), w)
    assert e.orders == [0] and e.values == [1.0] and e.total == 1.0
    assert efficiencies(RayleighSpectrum(m, np.zeros(7, complex)), w).total == 0.0


def test_modes_csv_columns():
    w = IncidentWave(1.5)
    m = build_modes(w, 2)
    text = modes_csv(RayleighSpectrum(m, np.ones(5, complex)), w)
    lines = text.splitlines()
    assert lines[0] == "n,alpha_n,re_beta_n,im_beta_n,re_A_n,im_A_n,efficiency"
    assert len(lines) == 6
    assert lines[1].endswith(",")  # n = -2 is evanescent


wavesets = st.tuples(
    st.floats(0.3, 6.0), st.floats(-1.2, 1.2), st.integers(1, 8)
)


@given(wavesets)
def test_beta_branch_invariants(params):
    k1, theta, N = params
    try:
        m = build_modes(IncidentWave(k1, theta), N)
    except RayleighAnomaly:
        return
    b = m.beta_n
    assert np.all(b.real * b.imag == 0)
    assert np.all(b.real >= 0) and np.all(b.imag >= 0)
    err = np.abs(b**2 - (k1**2 - m.alpha_n**2))
    assert np.all(err <= 1e-14 * np.maximum(1.0, np.abs(m.alpha_n) ** 2 + k1**2))


@given(wavesets, st.integers(0, 2**32 - 1))
def test_trace_round_trip_and_phase_invariance(params, seed):
    k1, theta, N = params
    try:
        w = IncidentWave(k1, theta)
        m = build_modes(w, N)
    except RayleighAnomaly:
        return
    rng = np.random.default_rng(seed)
    A = rng.standard_normal(m.n.size) + 1j * rng.standard_normal(m.n.size)
    H = 1.0
    # keep evanescent amplitudes moderate on x2 = H
    A = A * np.exp(-np.abs(m.beta_n.imag) * H)
    M = 4 * N + 4
    x = uniform_grid(M)
    spec = RayleighSpectrum(m, A)
    u = w(x, H) + spec.scattered(x, H)
    got = rayleigh_from_trace(u, w, H, m)
    assert np.allclose(got.scattered(x, H), spec.scattered(x, H), atol=1e-10)
    # efficiencies ignore a global phase of the trace and the wave together
    s = np.exp(0.7j)
    ws = w.scaled(s)
    e1 = efficiencies(got, w).total
    e2 = efficiencies(rayleigh_from_trace(s * u, ws, H, m), ws).total
    assert e2 == pytest.approx(e1, rel=1e-10, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_rayleigh_linear(seed):
    w = IncidentWave(1.5, 0.1)
    m = build_modes(w, 4)
    rng = np.random.default_rng(seed)
    x = uniform_grid(32)
    u1 = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    u2 = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    a, b = 0.3 - 1.1j, 2.0
    # the incident part is subtracted once, so combine with weights summing to one
    lhs = rayleigh_from_trace(a * u1 + (1 - a) * u2, w, 1.0, m).A_n
    rhs = a * rayleigh_from_trace(u1, w, 1.0, m).A_n + (1 - a) * rayleigh_from_trace(u2, w, 1.0, m).A_n
    assert np.allclose(lhs, rhs, atol=1e-12)
    zero = IncidentWave(1.5, 0.1, 0.0)
    scaled = rayleigh_from_trace(b * u1, zero, 1.0, m).A_n
    assert np.allclose(scaled, b * rayleigh_from_trace(u1, zero, 1.0, m).A_n, atol=1e-12)
