"""Singular exponents and angular eigenfunctions at a right-angle
transmission corner, the flat-interface counterpart, and the radial
projections used in the local corner expansion.

Angular convention: the 3*pi/2 wedge (coefficient 1, wavenumber k1) is
``0 < theta < 3*pi/2`` and the right-angle wedge (coefficient lambda,
wavenumber k2) is ``-pi/2 < theta < 0``.  An eigenfunction is

    phi(theta) = A+ cos(eta theta) + B+ sin(eta theta)   on (0, 3pi/2)
    phi(theta) = A- cos(eta theta) + B- sin(eta theta)   on (-pi/2, 0)

with phi and ``a * phi'`` continuous across theta = 0 and across the seam
3pi/2 ~ -pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from gratinglab.errors import EtaZeroWrongBranch, ValidationError

NULL_TOL = 1e-8
MERGE_TOL = 1e-9
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def char_value(lam: float) -> float:
    """cos(pi*eta) of the non-integer branch: -(lam^2 + 6 lam + 1) / (2 (lam + 1)^2)."""
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    # written as -(1/2 + 2 lam/(lam+1)^2) to keep precision for extreme lam
    return -(0.5 + 2.0 * lam / (lam + 1.0) ** 2)


def leading_exponent(lam: float) -> float:
    """acos(char_value(lam)) / pi, evaluated through 1 + c = (lam-1)^2 / (2 (lam+1)^2)
    so that it stays well conditioned as lam -> 1, where c -> -1."""
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    return 1.0 - 2.0 * math.asin(abs(lam - 1.0) / (2.0 * (lam + 1.0))) / math.pi


def corner_matrix(lam: float, eta: float) -> np.ndarray:
    """Transmission system for unknowns ordered (A+, A-, B+, B-)."""
    c1, s1 = math.cos(0.5 * math.pi * eta), math.sin(0.5 * math.pi * eta)
    c3, s3 = math.cos(1.5 * math.pi * eta), math.sin(1.5 * math.pi * eta)
    return np.array([
        [1.0, -1.0, 0.0, 0.0],
        [c3, -c1, s3, s1],
        [0.0, 0.0, 1.0, -lam],
        [s3, lam * s1, -c3, lam * c1],
    ])


def reduced_determinant(lam: float, eta: float) -> float:
    c = math.cos(math.pi * eta)
    return (lam + 1.0) ** 2 * c * c - 0.5 * (lam - 1.0) ** 2 * c - 0.5 * (lam * lam + 6.0 * lam + 1.0)


def determinant_M(lam: float, eta: float) -> tuple[float, float]:
    """``(direct 4x4 determinant, closed-form reduction)``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = float(np.linalg.det(corner_matrix(lam, eta)))
    return direct, reduced_determinant(lam, eta)


# ---------------------------------------------------------------- eigenpairs


@dataclass(frozen=True)
class CornerMode:
    eta: float
    A_plus: float
    B_plus: float
    A_minus: float
    B_minus: float
    even_integer: bool  # eta in 2N, the cos(pi*eta) = 1 branch

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return self.A_plus, self.B_plus, self.A_minus, self.B_minus

    def __call__(self, theta):
        """Evaluate on (-pi/2, 3pi/2]; theta = 0 uses the upper-wedge branch."""
        th = np.asarray(theta, dtype=float)
        c, s = np.cos(self.eta * th), np.sin(self.eta * th)
        up = self.A_plus * c + self.B_plus * s
        lo = self.A_minus * c + self.B_minus * s
        return np.where(th >= 0.0, up, lo)

    def upper(self, theta):
        th = np.asarray(theta, dtype=float)
        return self.A_plus * np.cos(self.eta * th) + self.B_plus * np.sin(self.eta * th)

    def lower(self, theta):
        th = np.asarray(theta, dtype=float)
        return self.A_minus * np.cos(self.eta * th) + self.B_minus * np.sin(self.eta * th)

    def d_upper(self, theta):
        th = np.asarray(theta, dtype=float)
        e = self.eta
        return e * (-self.A_plus * np.sin(e * th) + self.B_plus * np.cos(e * th))

    def d_lower(self, theta):
        th = np.asarray(theta, dtype=float)
        e = self.eta
        return e * (-self.A_minus * np.sin(e * th) + self.B_minus * np.cos(e * th))


@dataclass(frozen=True)
class CornerSpectrum:
    lam: float
    eta_max: float
    modes: tuple[CornerMode, ...]

    @property
    def exponents(self) -> list[float]:
        out: list[float] = []
        for m in self.modes:
            if not out or abs(m.eta - out[-1]) > MERGE_TOL:
                out.append(m.eta)
        return out


def _gauss(a: float, b: float, panels: int = 4):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _basis_values(eta: float):
    """Quadrature nodes/weights on both wedges and the values of the four
    coefficient basis functions (order A+, A-, B+, B-)."""
    panels = max(4, math.ceil(eta))
    tu, wu = _gauss(0.0, 1.5 * math.pi, 3 * panels)
    tl, wl = _gauss(-0.5 * math.pi, 0.0, panels)
    zu, zl = np.zeros_like(tu), np.zeros_like(tl)
    up = np.stack([np.cos(eta * tu), zu, np.sin(eta * tu), zu])
    lo = np.stack([zl, np.cos(eta * tl), zl, np.sin(eta * tl)])
    return (up, wu), (lo, wl)


def _gram(eta: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    (up, wu), (lo, wl) = _basis_values(eta)
    Gu = (up * wu) @ up.T
    Gl = (lo * wl) @ lo.T
    return Gu + Gl, Gu + lam * Gl


def _null_basis(lam: float, eta: float) -> np.ndarray:
    M = corner_matrix(lam, eta)
    _, s, vt = np.linalg.svd(M)
    k = int(np.sum(s <= NULL_TOL * s[0]))
    return vt[len(s) - k:].T  # (4, k)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # first nonzero of (A+, B+, A-, B-) made positive
    for idx in (0, 2, 1, 3):
        if abs(v[idx]) > 1e-12:
            return v if v[idx] > 0 else -v
    return v


def _modes_at(lam: float, eta: float, even: bool) -> list[CornerMode]:
    if eta == 0.0:
        c = 1.0 / math.sqrt(2.0 * math.pi)
        return [CornerMode(0.0, c, 0.0, c, 0.0, True)]
    N = _null_basis(lam, eta)
    if N.shape[1] == 0:
        raise ValidationError(f"eta={eta} is not an eigenvalue for lambda={lam}")
    G, Ga = _gram(eta, lam)
    proj = N @ N.T
    # deterministic basis of the eigenspace: project the coordinate directions
    # in the order A+, B+, A-, B-, then orthogonalise in the a-weighted product
    vecs: list[np.ndarray] = []
    for idx in (0, 2, 1, 3):
        v = proj[:, idx].copy()
        for w in vecs:
            v -= (w @ Ga @ v) / (w @ Ga @ w) * w
        if np.sqrt(abs(v @ G @ v)) > 1e-8:
            vecs.append(v)
        if len(vecs) == N.shape[1]:
            break
    out = []
    for v in vecs:
        v = _fix_sign(v / math.sqrt(v @ G @ v))
        out.append(CornerMode(float(eta), v[0], v[2], v[1], v[3], even))
    return out


def corner_spectrum(lam: float, eta_max: float) -> CornerSpectrum:
    """All exponents in [0, eta_max]: the even integers and +-eta_1 + 2m,
    with plain-L2-normalised eigenfunctions (one per eigenspace direction)."""
    if eta_max < 0:
        raise ValidationError(f"eta_max must be >= 0, got {eta_max}")
    e1 = leading_exponent(lam)
    cands: list[tuple[float, bool]] = []
    m = 0
    while 2 * m <= eta_max + MERGE_TOL:
        cands.append((2.0 * m, True))
        for e in (2 * m + e1, 2 * m + 2 - e1):
            if e <= eta_max + MERGE_TOL:
                cands.append((e, False))
        m += 1
    cands.sort()
    merged: list[tuple[float, bool]] = []
    for e, even in cands:
        if merged and abs(e - merged[-1][0]) <= MERGE_TOL:
            e0, ev0 = merged[-1]
            merged[-1] = (float(round(e0)) if ev0 or even else e0, ev0 or even)
            continue
        merged.append((e, even))
    modes: list[CornerMode] = []
    for e, even in merged:
        if abs(e - round(e)) <= MERGE_TOL:
            e = float(round(e))
        modes.extend(_modes_at(lam, e, even and round(e) % 2 == 0))
    return CornerSpectrum(float(lam), float(eta_max), tuple(modes))


def inner(m1: CornerMode, m2: CornerMode, lam: float | None = None) -> float:
    """L2(-pi/2, 3pi/2) inner product; with ``lam`` the lower wedge is weighted by it."""
    w = 1.0 if lam is None else lam
    tu, wu = _gauss(0.0, 1.5 * math.pi, 3 * max(4, math.ceil(max(m1.eta, m2.eta))))
    tl, wl = _gauss(-0.5 * math.pi, 0.0, max(4, math.ceil(max(m1.eta, m2.eta))))
    return float(np.sum(wu * m1.upper(tu) * m2.upper(tu)) + w * np.sum(wl * m1.lower(tl) * m2.lower(tl)))


def transmission_residuals(mode: CornerMode, lam: float) -> np.ndarray:
    """Residuals of the four interface conditions (value/flux at 0 and at the seam)."""
    z, up, lo = 0.0, 1.5 * math.pi, -0.5 * math.pi
    return np.array([
        mode.upper(z) - mode.lower(z),
        mode.d_upper(z) - lam * mode.d_lower(z),
        mode.upper(up) - mode.lower(lo),
        mode.d_upper(up) - lam * mode.d_lower(lo),
    ])


@dataclass(frozen=True)
class ShiftPredicates:
    eta: float
    shift_invariant: bool  # phi(t) == phi(t + pi/2) on [0, pi]
    shift_antisymmetric: bool  # phi(t) == -phi(t + pi/2) on [0, pi]

    @property
    def expected(self) -> tuple[bool, bool]:
        """Classification by the exponent alone: eta = 4N and eta = 4N + 2."""
        r = round(self.eta)
        integer = abs(self.eta - r) <= MERGE_TOL
        return integer and r % 4 == 0, integer and r % 4 == 2


def lemma1_predicates(spectrum: CornerSpectrum, n_theta: int = 257, tol: float = 1e-9) -> list[ShiftPredicates]:
    theta = np.linspace(0.0, math.pi, n_theta)
    out = []
    for m in spectrum.modes:
        a, b = m.upper(theta), m.upper(theta + 0.5 * math.pi)
        scale = max(1.0, float(np.max(np.abs(a))))
        out.append(ShiftPredicates(
            m.eta,
            bool(np.max(np.abs(a - b)) <= tol * scale),
            bool(np.max(np.abs(a + b)) <= tol * scale),
        ))
    return out


# ---------------------------------------------------------------- flat interface


def flat_matrix(lam: float, delta: float) -> np.ndarray:
    """Flat-interface system for unknowns ordered (A~-, B~-, A~+, B~+)."""
    c1, s1 = math.cos(0.5 * math.pi * delta), math.sin(0.5 * math.pi * delta)
    c3, s3 = math.cos(1.5 * math.pi * delta), math.sin(1.5 * math.pi * delta)
    return np.array([
        [c1, s1, -c1, -s1],
        [c3, s3, -c3, -s3],
        [-lam * s1, lam * c1, s1, -c1],
        [-lam * s3, lam * c3, s3, -c3],
    ])


def flat_determinant(lam: float, delta: float, direct: bool = False) -> float:
    """``(lam - 1)^2 sin^2(pi delta)``, or the raw 4x4 determinant if ``direct``."""
    if direct:
        # exactly singular matrices (delta integer) make LAPACK divide by zero
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.linalg.det(flat_matrix(lam, delta)))
    return (lam - 1.0) ** 2 * math.sin(math.pi * delta) ** 2


def flat_spectrum(lam: float, delta_max: float) -> list[int]:
    if lam == 1.0:
        raise ValidationError("flat-interface spectrum is degenerate for lambda = 1")
    return list(range(int(math.floor(delta_max)) + 1))


# ---------------------------------------------------------------- radial projections

FieldSampler = Callable[[np.ndarray, np.ndarray], np.ndarray]


def project_fj(u: FieldSampler, mode: CornerMode, r: float, k1: float, k2: float, panels: int = 8) -> complex:
    """``f_j(r) = -int_{-pi/2}^0 k2^2 u conj(phi) - int_0^{3pi/2} k1^2 u conj(phi)``
    by composite Gauss-Legendre quadrature; ``u(r, theta)`` must accept arrays."""
    tl, wl = _gauss(-0.5 * math.pi, 0.0, panels)
    tu, wu = _gauss(0.0, 1.5 * math.pi, 3 * panels)
    rl = np.full_like(tl, r)
    ru = np.full_like(tu, r)
    lo = np.sum(wl * u(rl, tl) * mode.lower(tl))
    up = np.sum(wu * u(ru, tu) * mode.upper(tu))
    return complex(-(k2 * k2) * lo - (k1 * k1) * up)


def _nodes(a: float, b: float, n: int) -> np.ndarray:
    if n < 513:
        raise ValidationError(f"need at least 513 radial nodes, got {n}")
    return np.linspace(a, b, n)


def singular_e0(f: Callable, r: float, n_nodes: int = 1025) -> complex:
    """Solution of ``(1/r)(r e')' = f`` with e(0) = e'(0) = 0 by double integration."""
    if r == 0:
        return 0j
    s = _nodes(0.0, r, n_nodes)
    fs = np.asarray(f(s), dtype=complex)
    sf = s * fs
    inner_int = cumulative_simpson(sf.real, x=s, initial=0.0) + 1j * cumulative_simpson(sf.imag, x=s, initial=0.0)
    g = np.zeros_like(inner_int)
    g[1:] = inner_int[1:] / s[1:]
    return complex(simpson(g, x=s))


def singular_ej(f: Callable, eta: float, r: float, r0: float | None = None, n_nodes: int = 1025) -> complex:
    """Variation-of-parameters solution of ``(1/r)(r e')' - eta^2 e / r^2 = f``:

        e(r) = r^eta/(2 eta) int_{r0/2}^r f s^(1-eta) ds - r^-eta/(2 eta) int_0^r f s^(1+eta) ds

    ``r0`` defaults to ``r/2``.  For eta = 2 and f ~ const this produces the
    ``r^2 ln r`` resonance automatically.
    """
    if not eta > 0:
        raise EtaZeroWrongBranch(f"general branch needs eta > 0, got {eta}; use singular_e0")
    if r0 is None:
        r0 = 0.5 * r
    if not 0 < r0 < r:
        raise ValidationError(f"need 0 < r0 < r, got r0={r0}, r={r}")
    s1 = _nodes(0.5 * r0, r, n_nodes)
    s2 = _nodes(0.0, r, n_nodes)
    i1 = simpson(np.asarray(f(s1), dtype=complex) * s1 ** (1.0 - eta), x=s1)
    i2 = simpson(np.asarray(f(s2), dtype=complex) * s2 ** (1.0 + eta), x=s2)
    return complex(r**eta / (2 * eta) * i1 - r ** (-eta) / (2 * eta) * i2)


def singular_e(f: Callable, eta: float, r: float, r0: float | None = None, n_nodes: int = 1025) -> complex:
    """Dispatch: eta == 0 -> :func:`singular_e0`, eta > 0 -> :func:`singular_ej`."""
    if eta == 0:
        if r0 is not None:
            raise EtaZeroWrongBranch("the eta = 0 branch takes no inner radius")
        return singular_e0(f, r, n_nodes)
    return singular_ej(f, eta, r, r0, n_nodes)


def d_j0(mode: CornerMode, k1: float, k2: float) -> float:
    """Projection of the constant 1/sqrt(2 pi) onto ``mode`` with the wedge
    wavenumbers; equals -(3 k1^2 + k2^2)/4 for the constant mode."""
    c = 1.0 / math.sqrt(2 * math.pi)
    return project_fj(lambda r, t: np.full_like(t, c), mode, 1.0, k1, k2).real


def e_leading_term(eta: float, dj0: float, u0: complex) -> tuple[complex, bool]:
    """Leading small-r term of e_j for a field with corner value ``u0``.

    Returns ``(c, log)``: ``e_j ~ c r^2`` or, for eta = 2, ``e_j ~ c r^2 ln r``.
    Log powers beyond one are not handled.
    """
    s = math.sqrt(2 * math.pi)
    if abs(eta - 2.0) <= MERGE_TOL:
        return s / 4.0 * dj0 * u0, True
    return s / (4.0 - eta * eta) * dj0 * u0, False
