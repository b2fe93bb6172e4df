"""Reconstruction of a staircase grating from one near-field trace on x2 = H:
synthetic data, relative L2 misfit, exhaustive search over a finite
candidate set and Nelder-Mead refinement of the leaders."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from gratinglab._format import fmt
from gratinglab.errors import (
    CandidateCapExceeded,
    DegenerateData,
    EmptySearchSpace,
    GridTooCoarse,
    HTooLow,
    SolverError,
    ValidationError,
)
from gratinglab.forward import Gamma0BC, MediumCoefficients, solve_forward
from gratinglab.modes import IncidentWave, default_truncation, uniform_grid
from gratinglab.profile import PERIOD, GratingProfile, canonicalize, extremes

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 128
DEFAULT_CAP = 10_000


# ---------------------------------------------------------------- data


@dataclass(frozen=True)
class MeasurementData:
    H: float
    grid: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid.shape != self.values.shape or self.grid.ndim != 1:
            raise ValidationError("grid and values must be 1-D arrays of equal length")

    @property
    def M(self) -> int:
        return self.grid.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x1", "x2", "re_u", "im_u"])
        for x, v in zip(self.grid, self.values):
            w.writerow([fmt(x), fmt(self.H), fmt(v.real), fmt(v.imag)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "MeasurementData":
        rows = list(csv.DictReader(io.StringIO(text)))
        need = {"x1", "x2", "re_u", "im_u"}
        if not rows or not need <= set(rows[0]):
            raise ValidationError(f"data CSV needs columns {sorted(need)}")
        try:
            x1 = np.array([float(r["x1"]) for r in rows])
            x2 = np.array([float(r["x2"]) for r in rows])
            u = np.array([complex(float(r["re_u"]), float(r["im_u"])) for r in rows])
        except ValueError as exc:
            raise ValidationError(f"bad number in data CSV: {exc}") from exc
        if np.ptp(x2) > 1e-12 * max(1.0, abs(x2[0])):
            raise ValidationError("all samples must share one height x2 = H")
        if not np.allclose(x1, uniform_grid(x1.size), rtol=0, atol=1e-9):
            raise ValidationError("x1 samples must be the uniform grid 2*pi*j/M")
        return cls(float(x2[0]), uniform_grid(x1.size), u, dict(metadata or {}))


def synthesize_data(
    true_profile: GratingProfile,
    medium: MediumCoefficients,
    wave: IncidentWave,
    H: float,
    mesh_h: float,
    noise_rel: float = 0.0,
    seed: int = 0,
    M: int = DEFAULT_SAMPLES,
    n_modes: int | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
) -> MeasurementData:
    """Forward trace on a mesh twice as fine as ``mesh_h``, sampled at M points,
    plus complex Gaussian noise with ``E||noise|| ~ noise_rel * ||trace||``."""
    if noise_rel < 0:
        raise ValidationError(f"noise_rel must be >= 0, got {noise_rel}")
    sol = solve_forward(true_profile, medium, wave, H, 0.5 * mesh_h, n_modes, gamma0_bc)
    N = sol.modes.N
    if M < 4 * N + 4:
        raise GridTooCoarse(f"need at least {4 * N + 4} samples for N={N}, got {M}")
    x = uniform_grid(M)
    u = sol.trace(x)
    if noise_rel > 0:
        rng = np.random.default_rng(seed)
        sigma = noise_rel * np.linalg.norm(u) / math.sqrt(M)
        u = u + sigma * (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2.0)
    meta = {
        "true_profile": true_profile.to_dict(),
        "noise_rel": float(noise_rel),
        "seed": int(seed),
        "data_mesh_h": 0.5 * mesh_h,
        "k1": medium.k1, "k2": medium.k2, "lambda": medium.lam,
        "theta": wave.theta,
    }
    return MeasurementData(float(H), x, u, meta)


# ---------------------------------------------------------------- objective


@dataclass(frozen=True)
class ForwardSettings:
    """Everything the misfit needs besides the candidate and the data."""

    medium: MediumCoefficients
    wave: IncidentWave
    mesh_h: float
    n_modes: int | None = None
    gamma0_bc: Gamma0BC = Gamma0BC.NEUMANN


def _check_data(data: MeasurementData, settings: ForwardSettings) -> None:
    if not np.any(data.values):
        raise DegenerateData("measured trace is identically zero")
    N = default_truncation(settings.wave.k1) if settings.n_modes is None else settings.n_modes
    if data.M < 4 * N + 4:
        raise GridTooCoarse(f"need at least {4 * N + 4} samples for N={N}, got {data.M}")


def _misfit(candidate: GratingProfile, data: MeasurementData, s: ForwardSettings) -> float:
    if data.H <= extremes(candidate)[0]:
        raise HTooLow(f"H={data.H} must exceed the candidate's top {extremes(candidate)[0]}")
    try:
        sol = solve_forward(candidate, s.medium, s.wave, data.H, s.mesh_h, s.n_modes, s.gamma0_bc)
    except SolverError as exc:
        log.warning("candidate %s infeasible: %s", candidate.to_dict(), exc)
        return math.inf
    d = data.values
    # trapezoid rule on the periodic uniform grid reduces to plain sums
    return float(np.sum(np.abs(sol.trace(data.grid) - d) ** 2) / np.sum(np.abs(d) ** 2))


def misfit(
    candidate: GratingProfile,
    data: MeasurementData,
    medium: MediumCoefficients,
    wave: IncidentWave,
    mesh_h: float,
    n_modes: int | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
) -> float:
    """Relative L2 trace misfit; +inf when the forward solve fails."""
    s = ForwardSettings(medium, wave, mesh_h, n_modes, Gamma0BC(gamma0_bc))
    _check_data(data, s)
    return _misfit(candidate, data, s)


# ---------------------------------------------------------------- search space


@dataclass(frozen=True)
class SearchFamily:
    """Profiles on fixed breakpoints: every height tuple from ``heights``,
    or only the explicit ``assignments`` when given."""

    breakpoints: tuple[float, ...]
    heights: tuple[float, ...] = ()
    assignments: tuple[tuple[float, ...], ...] = ()

    def raw_count(self) -> int:
        if self.assignments:
            return len(self.assignments)
        return len(self.heights) ** len(self.breakpoints)

    def height_tuples(self) -> Iterable[tuple[float, ...]]:
        if self.assignments:
            return iter(self.assignments)
        return itertools.product(self.heights, repeat=len(self.breakpoints))

    def to_dict(self) -> dict:
        out: dict = {"breakpoints": list(self.breakpoints)}
        if self.assignments:
            out["assignments"] = [list(a) for a in self.assignments]
        else:
            out["heights"] = list(self.heights)
        return out


@dataclass(frozen=True)
class SearchSpace:
    """Finite union of families; candidates are deduplicated in canonical form."""

    families: tuple[SearchFamily, ...]
    max_segments: int | None = None
    cap: int = DEFAULT_CAP

    @classmethod
    def from_sets(cls, breakpoints: Sequence[float], heights: Sequence[float], max_segments: int, cap: int = DEFAULT_CAP):
        """All profiles whose breakpoints are a subset of ``breakpoints`` (at
        most ``max_segments`` of them) with heights from ``heights``."""
        fams = []
        bps = sorted(float(b) for b in breakpoints)
        for k in range(1, min(max_segments, len(bps)) + 1):
            for sub in itertools.combinations(bps, k):
                fams.append(SearchFamily(tuple(sub), tuple(float(h) for h in heights)))
        return cls(tuple(fams), max_segments, cap)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        cap = int(d.get("cap", DEFAULT_CAP))
        if "families" in d:
            fams = []
            for f in d["families"]:
                if "breakpoints" not in f or not ("heights" in f or "assignments" in f):
                    raise ValidationError("each family needs 'breakpoints' and 'heights' or 'assignments'")
                fams.append(SearchFamily(
                    tuple(float(b) for b in f["breakpoints"]),
                    tuple(float(h) for h in f.get("heights", ())),
                    tuple(tuple(float(h) for h in a) for a in f.get("assignments", ())),
                ))
            ms = d.get("max_segments")
            return cls(tuple(fams), None if ms is None else int(ms), cap)
        try:
            return cls.from_sets(d["breakpoints"], d["heights"], int(d["max_segments"]), cap)
        except KeyError as exc:
            raise ValidationError(f"search space is missing {exc}") from exc

    def to_dict(self) -> dict:
        return {"families": [f.to_dict() for f in self.families], "max_segments": self.max_segments, "cap": self.cap}

    def candidates(self) -> list[GratingProfile]:
        raw = sum(f.raw_count() for f in self.families)
        # only raw enumeration is bounded here; the deduplicated count is checked below
        if raw > 100 * self.cap:
            raise CandidateCapExceeded(f"{raw} raw candidates far exceed the cap {self.cap}")
        seen: dict[tuple, GratingProfile] = {}
        for fam in self.families:
            for hs in fam.height_tuples():
                if len(hs) != len(fam.breakpoints):
                    raise ValidationError(f"assignment {hs} does not match breakpoints {fam.breakpoints}")
                p = canonicalize(fam.breakpoints, hs)
                if self.max_segments is not None and p.n_segments > self.max_segments:
                    continue
                seen.setdefault(p.sort_key(), p)
        if len(seen) > self.cap:
            raise CandidateCapExceeded(f"{len(seen)} candidates exceed the cap {self.cap}")
        return [seen[k] for k in sorted(seen)]


def profile_key(p: GratingProfile) -> str:
    """Lexicographic tie-break encoding of the canonical form."""
    return p.to_json()


# ---------------------------------------------------------------- search & refine


@dataclass(frozen=True)
class RankedCandidate:
    profile: GratingProfile
    misfit: float
    origin: GratingProfile | None = None  # grid candidate a refined profile started from

    def to_dict(self) -> dict:
        out = {"profile": self.profile.to_dict(), "misfit": _json_float(self.misfit)}
        if self.origin is not None:
            out["origin"] = self.origin.to_dict()
        return out


@dataclass
class RefineResult:
    profile: GratingProfile
    misfit: float
    history: list[float]
    iterations: int
    max_iters_exceeded: bool


@dataclass
class InverseResult:
    best: GratingProfile
    best_misfit: float
    ranked: list[RankedCandidate]
    gap: float
    landscape: list[RankedCandidate]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, top_k: int = 3) -> dict:
        return {
            "best_profile": self.best.to_dict(),
            "misfit": _json_float(self.best_misfit),
            "gap": _json_float(self.gap),
            "ranked": [r.to_dict() for r in self.ranked[:top_k]],
            "diagnostics": self.diagnostics,
        }

    def landscape_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "misfit", "n_segments", "breakpoints", "heights", "feasible"])
        for i, r in enumerate(self.landscape):
            w.writerow([
                i + 1, fmt(r.misfit), r.profile.n_segments,
                ";".join(fmt(b) for b in r.profile.breakpoints),
                ";".join(fmt(h) for h in r.profile.heights),
                int(math.isfinite(r.misfit)),
            ])
        return buf.getvalue()


def _json_float(x: float):
    return float(x) if math.isfinite(x) else None


def _rank(entries: list[RankedCandidate]) -> list[RankedCandidate]:
    return sorted(entries, key=lambda r: (r.misfit, profile_key(r.profile)))


def _gap(ranked: list[RankedCandidate]) -> float:
    if len(ranked) < 2:
        return 1.0
    a, b = ranked[0].misfit, ranked[1].misfit
    if a == 0.0:
        return math.inf if b > 0 else 1.0
    return b / a


def _eval_one(args):
    cand, data, s = args
    return _misfit(cand, data, s)


def grid_search(
    space: SearchSpace,
    data: MeasurementData,
    medium: MediumCoefficients,
    wave: IncidentWave,
    mesh_h: float,
    n_modes: int | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
    workers: int = 1,
) -> InverseResult:
    """Evaluate every candidate; rank by misfit, ties by canonical encoding."""
    s = ForwardSettings(medium, wave, mesh_h, n_modes, Gamma0BC(gamma0_bc))
    _check_data(data, s)
    cands = space.candidates()
    if not cands:
        raise EmptySearchSpace("search space has no candidates")
    too_tall = [c for c in cands if extremes(c)[0] >= data.H]
    if too_tall:
        raise HTooLow(f"{len(too_tall)} candidates reach H={data.H}, e.g. {too_tall[0].to_dict()}")
    jobs = [(c, data, s) for c in cands]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(_eval_one, jobs))
    else:
        vals = [_eval_one(j) for j in jobs]
    ranked = _rank([RankedCandidate(c, v) for c, v in zip(cands, vals)])
    diag = {
        "n_candidates": len(cands),
        "n_infeasible": sum(1 for v in vals if not math.isfinite(v)),
        "mesh_h": mesh_h,
    }
    return InverseResult(ranked[0].profile, ranked[0].misfit, ranked, _gap(ranked), ranked, diag)


def _params(p: GratingProfile) -> np.ndarray:
    if p.is_flat:
        return np.array(p.heights, dtype=float)
    return np.concatenate([p.heights, p.breakpoints])


class _Projector:
    """Maps raw simplex points to valid profiles of the start's topology."""

    def __init__(self, start: GratingProfile, H: float):
        self.n = start.n_segments
        self.flat = start.is_flat
        self.h_min = 1e-3 * start.scale
        self.h_max = H - 1e-3 * max(H, 1.0)
        self.gap = 1e-3

    def __call__(self, x: np.ndarray) -> GratingProfile:
        n = self.n
        hs = np.clip(x[:n], self.h_min, self.h_max)
        if self.flat:
            return canonicalize([0.0], hs)
        bs = np.array(x[n:], dtype=float)
        # keep the cyclic order: b0 <= b1 - gap <= ... <= b0 + 2pi - gap
        for i in range(1, n):
            bs[i] = max(bs[i], bs[i - 1] + self.gap)
        span = PERIOD - n * self.gap
        if bs[-1] - bs[0] > span:
            bs = bs[0] + (bs - bs[0]) * span / (bs[-1] - bs[0])
        return canonicalize(bs, hs)


def local_refine(
    start: GratingProfile,
    data: MeasurementData,
    medium: MediumCoefficients,
    wave: IncidentWave,
    mesh_h: float,
    max_iters: int = 200,
    n_modes: int | None = None,
    gamma0_bc: Gamma0BC | str = Gamma0BC.NEUMANN,
    step: float = 0.1,
) -> RefineResult:
    """Nelder-Mead over heights and breakpoints with the segment count fixed.

    Each trial point is projected to a valid profile before evaluation; the
    returned history is the best-so-far misfit after each evaluation.
    """
    s = ForwardSettings(medium, wave, mesh_h, n_modes, Gamma0BC(gamma0_bc))
    _check_data(data, s)
    if max_iters < 0:
        raise ValidationError(f"max_iters must be >= 0, got {max_iters}")
    proj = _Projector(start, data.H)
    f0 = _misfit(start, data, s)
    best = [f0, start]
    history = [f0]
    if max_iters == 0:
        return RefineResult(start, f0, history, 0, False)
    cache: dict[tuple, float] = {start.sort_key(): f0}

    def objective(x):
        p = proj(x)
        key = p.sort_key()
        if key not in cache:
            cache[key] = _misfit(p, data, s) if p.n_segments == start.n_segments else math.inf
        v = cache[key]
        if v < best[0]:
            best[0], best[1] = v, p
        history.append(best[0])
        return v

    x0 = _params(start)
    simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(x0.size)])
    res = minimize(
        objective, x0, method="Nelder-Mead",
        options={"maxiter": max_iters, "initial_simplex": simplex, "xatol": 1e-6, "fatol": 1e-14},
    )
    exceeded = not res.success and res.nit >= max_iters
    if exceeded:
        log.info("local_refine hit max_iters=%d; returning best so far", max_iters)
    return RefineResult(best[1], best[0], history, int(res.nit), bool(exceeded))


@dataclass(frozen=True)
class ReconstructConfig:
    medium: MediumCoefficients
    wave: IncidentWave
    mesh_h: float
    top_k: int = 3
    max_iters: int = 200
    refine: bool = True
    n_modes: int | None = None
    gamma0_bc: Gamma0BC = Gamma0BC.NEUMANN
    workers: int = 1


def reconstruct(data: MeasurementData, space: SearchSpace, config: ReconstructConfig) -> InverseResult:
    """Grid search, then refine the top-K; the final ranking is re-sorted.

    The uniqueness gap stays the one from the exhaustive grid ranking, where
    every entry is a distinct admissible candidate.
    """
    c = config
    grid = grid_search(space, data, c.medium, c.wave, c.mesh_h, c.n_modes, c.gamma0_bc, c.workers)
    if not c.refine or c.top_k <= 0:
        return grid
    refined = []
    iters = []
    for entry in grid.ranked[: c.top_k]:
        if not math.isfinite(entry.misfit):
            continue
        r = local_refine(entry.profile, data, c.medium, c.wave, c.mesh_h, c.max_iters, c.n_modes, c.gamma0_bc)
        refined.append(RankedCandidate(r.profile, r.misfit, entry.profile))
        iters.append({"start": entry.profile.to_dict(), "iterations": r.iterations,
                      "max_iters_exceeded": r.max_iters_exceeded, "misfit": _json_float(r.misfit)})
    ranked = _rank(refined + grid.ranked[c.top_k :])
    diag = dict(grid.diagnostics, refined=iters, grid_best=grid.best.to_dict(),
                grid_best_misfit=_json_float(grid.best_misfit))
    return InverseResult(ranked[0].profile, ranked[0].misfit, ranked, grid.gap, grid.landscape, diag)
