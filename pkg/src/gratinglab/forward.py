"""Forward transmission solver on the truncated strip 0 < x2 < H.

Bilinear finite elements on an interface-fitted tensor mesh, with the
quasiperiodic condition imposed by identifying the right column of nodes
with the left one (times ``exp(2*pi*i*alpha)``) and the radiation condition
imposed through the truncated Dirichlet-to-Neumann operator on x2 = H.

The discrete problem is: find u with

    int a grad(u).grad(conj v) - kappa u conj(v) dx - int_{x2=H} (T u) conj(v) ds
        = int_{x2=H} (d2 u_inc - T u_inc) conj(v) ds

where ``a = 1, kappa = k1^2`` above the profile and ``a = lambda,
kappa = lambda*k2^2`` below it.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from gratinglab._format import fmt
from gratinglab.errors import HTooLow, InsufficientLevels, SingularSystem, ValidationError
from gratinglab.modes import (
    IncidentWave,
    ModeSet,
    RayleighSpectrum,
    build_modes,
    efficiencies,
    rayleigh_from_trace,
    uniform_grid,
)
from gratinglab.profile import PERIOD, GratingProfile, extremes

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


class Gamma0BC(str, enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class MediumCoefficients:
    k1: float
    k2: float
    lam: float

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValidationError(f"wavenumbers must be positive, got k1={self.k1}, k2={self.k2}")
        if not self.lam > 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")

    @property
    def kappa_plus(self) -> float:
        return self.k1**2

    @property
    def kappa_minus(self) -> float:
        return self.lam * self.k2**2

    @property
    def uniqueness_warning(self) -> bool:
        """True when k1^2 < lambda*k2^2, where uniqueness is not guaranteed."""
        return self.k1**2 < self.lam * self.k2**2

    @property
    def is_degenerate(self) -> bool:
        """lambda == 1 or k1 == k2: excluded by the model, kept for validation runs."""
        return self.lam == 1.0 or self.k1 == self.k2

    def warnings(self) -> list[str]:
        out = []
        if self.uniqueness_warning:
            out.append(
                f"k1^2={self.k1**2:g} < lambda*k2^2={self.kappa_minus:g}: "
                "uniqueness of the forward problem is not guaranteed"
            )
        if self.is_degenerate:
            out.append("degenerate medium (lambda == 1 or k1 == k2)")
        return out


# ---------------------------------------------------------------- mesh


def _subdivide(knots, h_target):
    lines = [knots[0]]
    for a, b in zip(knots, knots[1:]):
        n = max(1, math.ceil((b - a) / h_target - 1e-9))
        lines.extend(a + (b - a) * np.arange(1, n + 1) / n)
        lines[-1] = b
    return np.asarray(lines, dtype=float)


def _knots(values, lo, hi):
    vals = sorted({lo, hi, *(v for v in values if lo < v < hi)})
    out = [vals[0]]
    for v in vals[1:]:
        if v - out[-1] > 1e-12 * max(1.0, abs(hi)):
            out.append(v)
    out[-1] = hi
    return out


@dataclass(frozen=True)
class Mesh:
    """Tensor mesh of [0, 2*pi] x [0, H]; node (j, i) sits at (xs[i], ys[j])."""

    profile: GratingProfile
    H: float
    xs: np.ndarray
    ys: np.ndarray
    minus: np.ndarray  # (ny-1, nx-1) bool: cell lies below the profile

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.ys), len(self.xs)

    @property
    def n_nodes(self) -> int:
        return len(self.ys) * len(self.xs)

    @property
    def h_max(self) -> float:
        return float(max(np.diff(self.xs).max(), np.diff(self.ys).max()))

    def node(self, j, i):
        return np.asarray(j) * len(self.xs) + np.asarray(i)


def build_mesh(profile: GratingProfile, H: float, h_target: float) -> Mesh:
    top = extremes(profile)[0]
    if not H > top:
        raise HTooLow(f"H={H} must exceed the profile maximum {top}")
    if not h_target > 0:
        raise ValidationError(f"h_target must be positive, got {h_target}")
    xs = _subdivide(_knots(profile.breakpoints, 0.0, PERIOD), h_target)
    ys = _subdivide(_knots(profile.heights, 0.0, H), h_target)
    xc = 0.5 * (xs[1:] + xs[:-1])
    yc = 0.5 * (ys[1:] + ys[:-1])
    minus = yc[:, None] < profile.height_at(xc)[None, :]
    return Mesh(profile, float(H), xs, ys, minus)


# ---------------------------------------------------------------- assembly


def _edge_moments(xs: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """``C[n, k] = int phi_k(x) exp(-i kappa_n x) dx`` for the hat functions on ``xs``.

    Exact integrals; a short Taylor series replaces the closed form when
    ``|kappa_n h|`` is small to avoid cancellation.
    """
    h = np.diff(xs)[None, :]
    kap = np.asarray(kappa, dtype=float)[:, None]
    z = -1j * kap * h
    small = np.abs(z) < 0.5
    zs = np.where(small, 1.0, z)
    ez = np.exp(zs)
    g0 = (ez - 1.0) / zs  # int_0^1 e^{zs} ds
    g1 = (ez * (zs - 1.0) + 1.0) / zs**2  # int_0^1 s e^{zs} ds
    if small.any():
        zt = z[small]
        t0 = np.zeros_like(zt)
        t1 = np.zeros_like(zt)
        term = np.ones_like(zt)
        for k in range(20):
            t0 += term / (k + 1)
            t1 += term / (k + 2)
            term = term * zt / (k + 1)
        g0[small] = t0
        g1[small] = t1
    phase = h * np.exp(-1j * kap * xs[None, :-1])
    C = np.zeros((kap.shape[0], len(xs)), dtype=complex)
    C[:, :-1] += phase * (g0 - g1)
    C[:, 1:] += phase * g1
    return C


def dtn_block(xs: np.ndarray, modes: ModeSet) -> np.ndarray:
    """Galerkin matrix of the truncated DtN operator on the top-row hat functions:
    ``T[k, l] = <T phi_l, phi_k>``."""
    C = _edge_moments(xs, modes.alpha_n)
    return (C.conj().T * modes.symbol) @ C / PERIOD


@dataclass
class LinearSystem:
    A: sp.csc_matrix
    b: np.ndarray
    P: sp.csr_matrix  # full nodal vector = P @ reduced vector
    mesh: Mesh
    medium: MediumCoefficients
    wave: IncidentWave
    modes: ModeSet
    gamma0_bc: Gamma0BC
    dtn: np.ndarray = field(repr=False, default=None)


def _volume_matrix(mesh: Mesh, medium: MediumCoefficients) -> sp.csr_matrix:
    ny, nx = mesh.shape
    hx = np.diff(mesh.xs)[None, :]
    hy = np.diff(mesh.ys)[:, None]
    a = np.where(mesh.minus, medium.lam, 1.0)
    kap = np.where(mesh.minus, medium.kappa_minus, medium.kappa_plus)

    K1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    M1 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    # local node l = 2*ly + lx; entries factor as (y-part)[ly, my] * (x-part)[lx, mx]
    kyy = np.kron(K1, M1)  # d/dy part: K1 in y, M1 in x
    kxx = np.kron(M1, K1)
    mm = np.kron(M1, M1)
    ry = (hx / hy)[..., None, None]
    rx = (hy / hx)[..., None, None]
    area = (hx * hy)[..., None, None]
    Ae = a[..., None, None] * (ry * kyy + rx * kxx) - kap[..., None, None] * area * mm

    jj, ii = np.meshgrid(np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
    base = mesh.node(jj, ii)
    loc = np.stack([base, base + 1, base + nx, base + nx + 1], axis=-1)
    rows = np.broadcast_to(loc[..., :, None], Ae.shape).ravel()
    cols = np.broadcast_to(loc[..., None, :], Ae.shape).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((Ae.ravel(), (rows, cols)), shape=(n, n))


def _reduction(mesh: Mesh, alpha: float, gamma0_bc: Gamma0BC) -> sp.csr_matrix:
    ny, nx = mesh.shape
    j0 = 1 if gamma0_bc == Gamma0BC.DIRICHLET else 0
    jr = np.arange(j0, ny)
    red = {(j, i): k for k, (j, i) in enumerate((j, i) for j in jr for i in range(nx - 1))}
    rows, cols, vals = [], [], []
    phase = np.exp(2j * math.pi * alpha)
    for (j, i), k in red.items():
        rows.append(mesh.node(j, i))
        cols.append(k)
        vals.append(1.0)
        if i == 0:
            rows.append(mesh.node(j, nx - 1))
            cols.append(k)
            vals.append(phase)
    return sp.csr_matrix(
        (np.asarray(vals, dtype=complex), (np.asarray(rows), np.asarray(cols))),
        shape=(mesh.n_nodes, len(red)),
    )


def assemble(
    mesh: Mesh,
    medium: MediumCoefficients,
    wave: IncidentWave,
    modes: ModeSet | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
) -> LinearSystem:
    gamma0_bc = Gamma0BC(gamma0_bc)
    if modes is None:
        modes = build_modes(wave)
    elif abs(modes.alpha - wave.alpha) > 1e-14 or modes.k1 != wave.k1:
        raise ValidationError("mode set was built for a different incident wave")

    ny, nx = mesh.shape
    A = _volume_matrix(mesh, medium).tocoo()
    T = dtn_block(mesh.xs, modes)
    top = mesh.node(ny - 1, np.arange(nx))
    tr, tc = np.meshgrid(top, top, indexing="ij")
    A_full = sp.csr_matrix(
        (
            np.concatenate([A.data.astype(complex), -T.ravel()]),
            (np.concatenate([A.row, tr.ravel()]), np.concatenate([A.col, tc.ravel()])),
        ),
        shape=A.shape,
    )

    # d2 u_inc - T u_inc = -2 i beta u_inc on x2 = H
    C0 = _edge_moments(mesh.xs, [wave.alpha])[0]
    b_full = np.zeros(mesh.n_nodes, dtype=complex)
    b_full[top] = -2j * wave.beta * wave.amplitude * np.exp(-1j * wave.beta * mesh.H) * C0.conj()

    P = _reduction(mesh, wave.alpha, gamma0_bc)
    PH = P.conj().T.tocsr()
    A_red = (PH @ A_full @ P).tocsc()
    b_red = PH @ b_full
    return LinearSystem(A_red, b_red, P, mesh, medium, wave, modes, gamma0_bc, T)


# ---------------------------------------------------------------- solution


@dataclass
class FieldSolution:
    mesh: Mesh
    u: np.ndarray  # (ny, nx) nodal total field, right column = phase * left column
    wave: IncidentWave
    medium: MediumCoefficients
    modes: ModeSet
    gamma0_bc: Gamma0BC
    residual: float
    warnings: list[str] = field(default_factory=list)

    @property
    def H(self) -> float:
        return self.mesh.H

    def _wrap(self, x1):
        x1 = np.asarray(x1, dtype=float)
        k = np.floor(x1 / PERIOD)
        return x1 - k * PERIOD, np.exp(2j * math.pi * self.wave.alpha * k)

    def trace(self, x1) -> np.ndarray:
        """Total field on x2 = H (piecewise-linear FE trace, quasiperiodically extended)."""
        xr, ph = self._wrap(x1)
        top = self.u[-1]
        return ph * (np.interp(xr, self.mesh.xs, top.real) + 1j * np.interp(xr, self.mesh.xs, top.imag))

    def evaluate(self, x1, x2) -> np.ndarray:
        """Bilinear interpolation of the FE field at points inside the strip."""
        xr, ph = self._wrap(x1)
        x2 = np.asarray(x2, dtype=float)
        xs, ys = self.mesh.xs, self.mesh.ys
        i = np.clip(np.searchsorted(xs, xr, side="right") - 1, 0, len(xs) - 2)
        j = np.clip(np.searchsorted(ys, x2, side="right") - 1, 0, len(ys) - 2)
        s = (xr - xs[i]) / (xs[i + 1] - xs[i])
        t = (x2 - ys[j]) / (ys[j + 1] - ys[j])
        u = self.u
        val = (
            (1 - s) * (1 - t) * u[j, i] + s * (1 - t) * u[j, i + 1]
            + (1 - s) * t * u[j + 1, i] + s * t * u[j + 1, i + 1]
        )
        return ph * val

    def trace_samples(self, M: int | None = None) -> np.ndarray:
        if M is None:
            M = default_samples(self.modes, self.mesh)
        return self.trace(uniform_grid(M))

    def rayleigh(self, M: int | None = None) -> RayleighSpectrum:
        return rayleigh_from_trace(self.trace_samples(M), self.wave, self.H, self.modes)

    def field_csv(self, n1: int = 64, n2: int = 32) -> str:
        x1 = np.linspace(0.0, PERIOD, n1 + 1)
        x2 = np.linspace(0.0, self.H, n2 + 1)
        X1, X2 = np.meshgrid(x1, x2)
        U = self.evaluate(X1, X2)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x1", "x2", "re_u", "im_u"])
        for a, b, c in zip(X1.ravel(), X2.ravel(), U.ravel()):
            w.writerow([fmt(a), fmt(b), fmt(c.real), fmt(c.imag)])
        return buf.getvalue()


def default_samples(modes: ModeSet, mesh: Mesh) -> int:
    """Trace sample count: 4 samples per x1 cell (so the sampling error
    refines with the mesh), and at least 4N+4."""
    cells = len(mesh.xs) - 1
    return cells * max(4, math.ceil((4 * modes.N + 4) / cells))


def solve(system: LinearSystem) -> FieldSolution:
    mesh, medium = system.mesh, system.medium
    warnings = medium.warnings()
    for w in warnings:
        log.warning(w)
    b = system.b
    if not np.any(b):
        x = np.zeros(system.A.shape[0], dtype=complex)
        res = 0.0
    else:
        try:
            lu = spla.splu(system.A)
        except RuntimeError as exc:
            raise SingularSystem(f"factorization failed: {exc}") from exc
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("solution contains non-finite values")
        res = float(np.linalg.norm(system.A @ x - b) / np.linalg.norm(b))
        if res > RESIDUAL_TOL:
            raise SingularSystem(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    u = (system.P @ x).reshape(mesh.shape)
    # the right column is the left one times the Floquet phase by definition;
    # rewrite it so the identity holds bit-for-bit
    u[:, -1] = np.exp(2j * math.pi * system.wave.alpha) * u[:, 0]
    return FieldSolution(mesh, u, system.wave, medium, system.modes, system.gamma0_bc, res, warnings)


def solve_forward(
    profile: GratingProfile,
    medium: MediumCoefficients,
    wave: IncidentWave,
    H: float,
    h: float,
    n_modes: int | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
) -> FieldSolution:
    """Mesh, assemble and solve in one call."""
    mesh = build_mesh(profile, H, h)
    return solve(assemble(mesh, medium, wave, build_modes(wave, n_modes), gamma0_bc))


# ---------------------------------------------------------------- oracle & diagnostics


@dataclass(frozen=True)
class FlatLayerOracle:
    """Exact field of a flat layer of height ``c`` for one quasiperiodic order."""

    c: float
    medium: MediumCoefficients
    wave: IncidentWave
    n: int
    R: complex  # reflection, normalised to the incident wave at x2 = c
    A: complex  # amplitude of the layer standing wave
    gamma0_bc: Gamma0BC

    @property
    def alpha_n(self) -> float:
        return self.n + self.wave.alpha

    @property
    def beta_n(self) -> complex:
        from gratinglab.modes import beta_of

        return complex(beta_of(self.medium.k1, self.alpha_n))

    @property
    def k2_n(self) -> complex:
        return np.sqrt(complex(self.medium.k2**2 - self.alpha_n**2))

    @property
    def rayleigh_coefficient(self) -> complex:
        """Coefficient of ``exp(i alpha_n x1 + i beta_n x2)`` for an incident
        order of amplitude ``wave.amplitude`` referenced to x2 = 0."""
        b = self.beta_n
        return self.wave.amplitude * self.R * np.exp(-2j * b * self.c)

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        b, k = self.beta_n, self.k2_n
        amp = self.wave.amplitude * np.exp(-1j * b * self.c)
        above = np.exp(-1j * b * (x2 - self.c)) + self.R * np.exp(1j * b * (x2 - self.c))
        base = np.cos(k * x2) if self.gamma0_bc == Gamma0BC.NEUMANN else np.sin(k * x2)
        below = self.A * base
        return amp * np.exp(1j * self.alpha_n * x1) * np.where(x2 >= self.c, above, below)


def flat_layer_oracle(
    c: float,
    medium: MediumCoefficients,
    wave: IncidentWave,
    n: int = 0,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
) -> FlatLayerOracle:
    """Two-point transmission solve for a flat layer of height ``c``.

    With incident order ``exp(-i beta (x2 - c))`` above the interface the field is
    ``exp(-i beta (x2-c)) + R exp(i beta (x2-c))`` for x2 > c and
    ``A cos(k x2)`` (Neumann) or ``A sin(k x2)`` (Dirichlet) below, with
    ``k = sqrt(k2^2 - alpha_n^2)``; continuity of u and of ``a * d2 u`` fixes (A, R).
    """
    gamma0_bc = Gamma0BC(gamma0_bc)
    from gratinglab.modes import beta_of

    alpha_n = n + wave.alpha
    b = complex(beta_of(medium.k1, alpha_n))
    k = np.sqrt(complex(medium.k2**2 - alpha_n**2))
    if gamma0_bc == Gamma0BC.NEUMANN:
        f, df = np.cos(k * c), -k * np.sin(k * c)
    else:
        f, df = np.sin(k * c), k * np.cos(k * c)
    # unknowns (A, R):  A f - R = 1 ;  lam A df - i b R = -i b
    mat = np.array([[f, -1.0], [medium.lam * df, -1j * b]], dtype=complex)
    rhs = np.array([1.0, -1j * b], dtype=complex)
    A, R = np.linalg.solve(mat, rhs)
    return FlatLayerOracle(float(c), medium, wave, int(n), complex(R), complex(A), gamma0_bc)


@dataclass(frozen=True)
class EnergyBalance:
    total: float
    residual: float
    applicable: bool


def energy_balance(sol: FieldSolution, M: int | None = None) -> EnergyBalance:
    """``|1 - sum of efficiencies|``; not applicable for a zero incident wave."""
    if sol.wave.amplitude == 0:
        return EnergyBalance(0.0, 1.0, False)
    eff = efficiencies(sol.rayleigh(M), sol.wave)
    return EnergyBalance(eff.total, abs(1.0 - eff.total), True)


@dataclass(frozen=True)
class ConvergenceLevel:
    h: float
    h_mesh: float
    energy_residual: float
    trace_diff: float  # relative L2 difference to the finest trace


@dataclass(frozen=True)
class ConvergenceStudy:
    levels: list[ConvergenceLevel]
    orders: list[float]

    @property
    def observed_order(self) -> float:
        return self.orders[-1]


def convergence_study(
    profile: GratingProfile,
    medium: MediumCoefficients,
    wave: IncidentWave,
    h_list,
    H: float,
    n_modes: int | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
    M: int = 512,
) -> ConvergenceStudy:
    """Refinement study of the x2 = H trace.

    Orders come from consecutive differences ``d_k = ||t_k - t_{k+1}||`` as
    ``log(d_k / d_{k+1}) / log(h_k / h_{k+1})`` with ``h`` the largest cell side.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise InsufficientLevels(f"need at least 3 mesh levels, got {len(h_list)}")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValidationError("h_list must be strictly decreasing")
    x = uniform_grid(M)
    traces, hm, eres = [], [], []
    for h in h_list:
        sol = solve_forward(profile, medium, wave, H, h, n_modes, gamma0_bc)
        traces.append(sol.trace(x))
        hm.append(sol.mesh.h_max)
        eres.append(energy_balance(sol).residual)
    fine = traces[-1]
    norm = np.linalg.norm(fine)
    levels = [
        ConvergenceLevel(h, m, e, float(np.linalg.norm(t - fine) / norm))
        for h, m, e, t in zip(h_list, hm, eres, traces)
    ]
    d = [np.linalg.norm(a - b) / norm for a, b in zip(traces, traces[1:])]
    orders = [
        float(math.log(d[k] / d[k + 1]) / math.log(hm[k] / hm[k + 1])) for k in range(len(d) - 1)
    ]
    return ConvergenceStudy(levels, orders)
