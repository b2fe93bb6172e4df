"""Finite-order check that two analytic Helmholtz solutions glued across two
perpendicular rays by transmission conditions must vanish.

Each solution is a polar Taylor series

    u(r, theta) = sum_{n, m} r^(n + 2m) (a[n, m] cos(n theta) + b[n, m] sin(n theta))

whose m > 0 coefficients follow from the seeds a[n, 0], b[n, 0] through the
Helmholtz recurrence.  The transmission conditions on theta = 0 and
theta = -pi/2 give four linear relations per total order n + 2m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gratinglab.errors import ValidationError

EXTRA_ORDERS = 2


def recurrence_factor(q: float, n: int, m: int) -> float:
    """Ratio a[n, m] / a[n, 0] implied by the recurrence."""
    f = 1.0
    for i in range(m):
        f *= -q / (4.0 * (i + 1) * (n + i + 1))
    return f


@dataclass(frozen=True)
class TaylorTable:
    """Coefficients a[n, m], b[n, m] for n + 2m <= L (zero elsewhere)."""

    q: float
    L: int
    a: np.ndarray
    b: np.ndarray

    def terms(self):
        for n in range(self.L + 1):
            for m in range((self.L - n) // 2 + 1):
                yield n, m

    def evaluate(self, r, theta):
        r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
        out = np.zeros(r.shape, dtype=np.result_type(self.a, float))
        for n, m in self.terms():
            out = out + r ** (n + 2 * m) * (self.a[n, m] * np.cos(n * theta) + self.b[n, m] * np.sin(n * theta))
        return out

    def laplacian(self, r, theta):
        # Laplacian of r^k cos(n theta) is (k^2 - n^2) r^(k-2) cos(n theta), here k^2 - n^2 = 4m(n+m)
        r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
        out = np.zeros(r.shape, dtype=np.result_type(self.a, float))
        for n, m in self.terms():
            if m == 0:
                continue
            c = 4.0 * m * (n + m)
            out = out + c * r ** (n + 2 * m - 2) * (self.a[n, m] * np.cos(n * theta) + self.b[n, m] * np.sin(n * theta))
        return out


def apply_recurrence(q: float, a0: Sequence[float], b0: Sequence[float] | None, L: int) -> TaylorTable:
    """Fill a TaylorTable from seeds ``a0[n] = a[n, 0]`` and ``b0[n] = b[n, 0]``
    (missing seeds are zero; ``b0[0]`` must be zero since sin(0) vanishes)."""
    if L < 0:
        raise ValidationError(f"L must be >= 0, got {L}")
    a0 = list(a0)
    b0 = [] if b0 is None else list(b0)
    if len(a0) > L + 1 or len(b0) > L + 1:
        raise ValidationError(f"seeds indexed beyond n = L = {L}")
    if b0 and b0[0] != 0:
        raise ValidationError("b[0, 0] must be zero")
    dtype = np.result_type(np.asarray(a0 + [0.0]), np.asarray(b0 + [0.0]), float)
    a = np.zeros((L + 1, L // 2 + 1), dtype=dtype)
    b = np.zeros_like(a)
    a[: len(a0), 0] = a0
    b[: len(b0), 0] = b0
    for n in range(L + 1):
        for m in range((L - n) // 2):
            f = -q / (4.0 * (m + 1) * (n + m + 1))
            a[n, m + 1] = f * a[n, m]
            b[n, m + 1] = f * b[n, m]
    return TaylorTable(float(q), int(L), a, b)


@dataclass(frozen=True)
class ConstraintSystem:
    """Transmission relations on the seeds of both solutions.

    Columns: a1[0..L], b1[1..L], a2[0..L], b2[1..L].  Rows: four families
    (value and flux on theta = 0, value and flux on theta = -pi/2) for each
    total order 0..L+2, each row scaled to unit max entry.
    """

    lam: float
    q1: float
    q2: float
    L: int
    matrix: np.ndarray
    raw: np.ndarray
    columns: tuple[str, ...]
    orders: tuple[int, ...]

    @property
    def n_seeds(self) -> int:
        return self.matrix.shape[1]

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def tables(self, seeds: np.ndarray) -> tuple[TaylorTable, TaylorTable]:
        """Expand a seed vector into the two Taylor tables (up to order L)."""
        L = self.L
        s = np.asarray(seeds)
        a1, b1 = s[: L + 1], np.concatenate([[0.0], s[L + 1 : 2 * L + 1]])
        off = 2 * L + 1
        a2, b2 = s[off : off + L + 1], np.concatenate([[0.0], s[off + L + 1 :]])
        return (apply_recurrence(self.q1, a1, b1, L), apply_recurrence(self.q2, a2, b2, L))


def _seed_columns(L: int) -> list[tuple[int, str, int]]:
    cols = []
    for side in (1, 2):
        cols += [(side, "a", n) for n in range(L + 1)]
        cols += [(side, "b", n) for n in range(1, L + 1)]
    return cols


def constraint_matrix(lam: float, q1: float, q2: float, L: int) -> ConstraintSystem:
    if L < 1:
        raise ValidationError(f"L must be >= 1, got {L}")
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    cols = _seed_columns(L)
    orders = list(range(L + EXTRA_ORDERS + 1))
    A = np.zeros((4 * len(orders), len(cols)))
    q = {1: q1, 2: q2}
    w = {1: 1.0, 2: -1.0}  # side 2 enters with a minus sign
    wl = {1: 1.0, 2: -lam}
    for k, l in enumerate(orders):
        for j, (side, kind, n) in enumerate(cols):
            if n > l or (l - n) % 2:
                continue
            f = recurrence_factor(q[side], n, (l - n) // 2)
            cs, sn = math.cos(0.5 * n * math.pi), math.sin(0.5 * n * math.pi)
            # exact zeros for the quarter-turn trig values
            cs, sn = round(cs), round(sn)
            if kind == "a":
                row = (w[side], 0.0, w[side] * cs, wl[side] * n * sn)
            else:
                row = (0.0, wl[side] * n, -w[side] * sn, wl[side] * n * cs)
            A[4 * k : 4 * k + 4, j] = f * np.asarray(row)
    scale = np.max(np.abs(A), axis=1)
    S = A / np.where(scale > 0, scale, 1.0)[:, None]
    names = tuple(f"{kind}{side}_{n}" for side, kind, n in cols)
    return ConstraintSystem(float(lam), float(q1), float(q2), int(L), S, A, names, tuple(orders))


def nullspace_dimension(system: ConstraintSystem, tol: float = 1e-8) -> int:
    """Number of seed directions whose singular value is below ``tol * sigma_max``."""
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    s = system.singular_values()
    if s.size == 0 or s[0] == 0:
        return system.n_seeds
    return int(system.n_seeds - np.sum(s >= tol * s[0]))


def nullspace_basis(system: ConstraintSystem, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal seed vectors spanning the numerical nullspace, shape (n_seeds, k)."""
    k = nullspace_dimension(system, tol)
    _, _, vt = np.linalg.svd(system.matrix)
    return vt[vt.shape[0] - k :].T


def smallest_singular_values(system: ConstraintSystem, count: int = 5) -> np.ndarray:
    s = np.linalg.svd(system.matrix, compute_uv=False)
    # pad with exact zeros for the rank deficit of a wide matrix
    s = np.concatenate([s, np.zeros(max(0, system.n_seeds - s.size))])
    return np.sort(s)[:count]


def helmholtz_residual(table: TaylorTable, r_grid, theta_grid) -> float:
    """max |Laplacian(u) + q u| of the truncated series over the tensor grid."""
    r, t = np.meshgrid(np.asarray(r_grid, float), np.asarray(theta_grid, float), indexing="ij")
    res = table.laplacian(r, t) + table.q * table.evaluate(r, t)
    return float(np.max(np.abs(res))) if res.size else 0.0
