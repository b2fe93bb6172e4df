"""Quasiperiodic mode bookkeeping: alpha_n, beta_n, the DtN symbol,
Rayleigh coefficients and diffraction efficiencies."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from gratinglab._format import fmt
from gratinglab.errors import GridTooCoarse, RayleighAnomaly, ValidationError

ANOMALY_RTOL = 1e-8


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave ``amplitude * exp(i*alpha*x1 - i*beta*x2)``."""

    k1: float
    theta: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValidationError(f"k1 must be positive, got {self.k1}")
        if not abs(self.theta) < 0.5 * math.pi:
            raise ValidationError(f"|theta| must be < pi/2, got {self.theta}")

    @property
    def alpha(self) -> float:
        return self.k1 * math.sin(self.theta)

    @property
    def beta(self) -> float:
        return self.k1 * math.cos(self.theta)

    def __call__(self, x1, x2):
        return self.amplitude * np.exp(1j * self.alpha * np.asarray(x1) - 1j * self.beta * np.asarray(x2))

    def scaled(self, s: complex) -> "IncidentWave":
        return IncidentWave(self.k1, self.theta, self.amplitude * s)


@dataclass(frozen=True)
class ModeSet:
    k1: float
    alpha: float
    N: int
    n: np.ndarray
    alpha_n: np.ndarray
    beta_n: np.ndarray

    @property
    def propagating(self) -> np.ndarray:
        return np.abs(self.alpha_n) <= self.k1

    @property
    def symbol(self) -> np.ndarray:
        """DtN multipliers ``i*beta_n``."""
        return 1j * self.beta_n

    def index(self, n: int) -> int:
        return int(n) + self.N


def default_truncation(k1: float) -> int:
    return math.ceil(k1) + 10


def beta_of(k1: float, alpha_n) -> np.ndarray:
    """Upward branch of sqrt(k1^2 - alpha_n^2)."""
    a = np.asarray(alpha_n, dtype=float)
    d = k1 * k1 - a * a
    return np.where(np.abs(a) <= k1, np.sqrt(np.abs(d)) + 0j, 1j * np.sqrt(np.abs(d)))


def build_modes(wave: IncidentWave, N: int | None = None) -> ModeSet:
    if N is None:
        N = default_truncation(wave.k1)
    if N < 0:
        raise ValidationError(f"truncation order must be >= 0, got {N}")
    n = np.arange(-N, N + 1)
    alpha_n = n + wave.alpha
    beta_n = beta_of(wave.k1, alpha_n)
    bad = np.abs(beta_n) < ANOMALY_RTOL * wave.k1
    if bad.any():
        raise RayleighAnomaly(
            f"beta_n vanishes for n={n[bad].tolist()} (k1={wave.k1}, theta={wave.theta})"
        )
    return ModeSet(wave.k1, wave.alpha, int(N), n, alpha_n, beta_n)


def dtn_coefficients(f_hat, modes: ModeSet) -> np.ndarray:
    f_hat = np.asarray(f_hat, dtype=complex)
    if f_hat.shape != modes.beta_n.shape:
        raise ValidationError(f"expected {modes.beta_n.size} coefficients, got {f_hat.size}")
    return modes.symbol * f_hat


@dataclass(frozen=True)
class RayleighSpectrum:
    modes: ModeSet
    A_n: np.ndarray

    def coefficient(self, n: int) -> complex:
        return complex(self.A_n[self.modes.index(n)])

    def scattered(self, x1, x2):
        """Evaluate the truncated Rayleigh series at (x1, x2)."""
        x1 = np.asarray(x1, dtype=float)[..., None]
        x2 = np.asarray(x2, dtype=float)[..., None]
        m = self.modes
        return np.sum(self.A_n * np.exp(1j * m.alpha_n * x1 + 1j * m.beta_n * x2), axis=-1)


def uniform_grid(M: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(M) / M


def rayleigh_from_trace(u_trace, wave: IncidentWave, H: float, modes: ModeSet) -> RayleighSpectrum:
    """Rayleigh coefficients from total-field samples at ``x1 = 2*pi*j/M``, ``x2 = H``.

    The Fourier integral is the trapezoid sum on the uniform grid.
    """
    u = np.asarray(u_trace, dtype=complex)
    M = u.size
    if M < 4 * modes.N + 4:
        raise GridTooCoarse(f"need at least {4 * modes.N + 4} samples for N={modes.N}, got {M}")
    x = uniform_grid(M)
    us = u - wave(x, H)
    proj = np.exp(-1j * np.outer(modes.alpha_n, x)) @ us / M
    return RayleighSpectrum(modes, np.exp(-1j * modes.beta_n * H) * proj)


@dataclass(frozen=True)
class Efficiencies:
    orders: list[int]
    values: list[float]
    total: float


def efficiencies(spec: RayleighSpectrum, wave: IncidentWave) -> Efficiencies:
    """Reflected energy fractions ``(beta_n/beta)|A_n|^2 / |amplitude|^2``
    of the propagating orders."""
    m = spec.modes
    mask = m.propagating
    scale = abs(wave.amplitude) ** 2
    vals = m.beta_n.real[mask] / wave.beta * np.abs(spec.A_n[mask]) ** 2
    if scale > 0:
        vals = vals / scale
    orders = [int(v) for v in m.n[mask]]
    values = [float(v) for v in vals]
    return Efficiencies(orders, values, float(sum(values)))


def modes_csv(spec: RayleighSpectrum, wave: IncidentWave) -> str:
    """CSV table: n, alpha_n, Re/Im beta_n, Re/Im A_n, efficiency (blank if evanescent)."""
    m = spec.modes
    eff = dict(zip(*_eff_pairs(spec, wave)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "alpha_n", "re_beta_n", "im_beta_n", "re_A_n", "im_A_n", "efficiency"])
    for i, n in enumerate(m.n):
        e = eff.get(int(n))
        w.writerow([
            int(n), fmt(m.alpha_n[i]), fmt(m.beta_n[i].real), fmt(m.beta_n[i].imag),
            fmt(spec.A_n[i].real), fmt(spec.A_n[i].imag), "" if e is None else fmt(e),
        ])
    return buf.getvalue()


def _eff_pairs(spec, wave):
    e = efficiencies(spec, wave)
    return e.orders, e.values
