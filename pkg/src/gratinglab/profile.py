"""Staircase grating profiles on one period [0, 2*pi).

A profile is a piecewise-constant height function: segment ``i`` covers
``[breakpoints[i], breakpoints[i+1])`` at height ``heights[i]``, and the last
segment wraps around the period to ``breakpoints[0] + 2*pi``.  Every jump
between neighbouring heights is a vertical wall with two corners.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gratinglab.errors import EmptyProfile, NonIncreasingBreakpoints, NonPositiveHeight

PERIOD = 2.0 * math.pi


class Region(enum.Enum):
    OMEGA_PLUS = "OmegaPlus"
    OMEGA_MINUS = "OmegaMinus"
    ON_LAMBDA = "OnLambda"
    ON_GAMMA0 = "OnGamma0"
    BELOW = "Below"


class CornerKind(enum.Enum):
    """Corner type, named by step direction and the horizontal side it joins.

    Bottom corners of a wall (``UP_STEP_LEFT``, ``DOWN_STEP_RIGHT``) see the
    upper medium through a right angle; top corners see it through 3*pi/2.
    """

    UP_STEP_LEFT = "up-step-left"
    UP_STEP_RIGHT = "up-step-right"
    DOWN_STEP_LEFT = "down-step-left"
    DOWN_STEP_RIGHT = "down-step-right"

    @property
    def interior_angle(self) -> float:
        """Opening angle of the upper domain at the corner."""
        if self in (CornerKind.UP_STEP_LEFT, CornerKind.DOWN_STEP_RIGHT):
            return 0.5 * math.pi
        return 1.5 * math.pi


@dataclass(frozen=True)
class CornerPoint:
    x: float
    y: float
    kind: CornerKind


@dataclass(frozen=True)
class GratingProfile:
    """Canonical staircase profile. Build it with :func:`validate_profile`."""

    breakpoints: tuple[float, ...]
    heights: tuple[float, ...]

    period = PERIOD

    @property
    def is_flat(self) -> bool:
        return len(self.heights) == 1

    @property
    def n_segments(self) -> int:
        return len(self.heights)

    @property
    def scale(self) -> float:
        return max(max(self.heights), 1.0)

    @property
    def eps_geom(self) -> float:
        return 1e-12 * self.scale

    def height_at(self, x):
        """Height of the profile at ``x`` (any real, periodically wrapped).

        At a breakpoint the right-hand segment wins.
        """
        xs = np.mod(np.asarray(x, dtype=float), PERIOD)
        idx = np.searchsorted(self.breakpoints, xs, side="right") - 1
        # idx == -1 lands on the wrapped last segment
        out = np.asarray(self.heights)[idx]
        return out if np.ndim(x) else float(out)

    def segments(self) -> list[tuple[float, float, float]]:
        """``(x_start, x_end, height)`` per segment, x_end may exceed 2*pi."""
        b = self.breakpoints
        out = []
        for i, h in enumerate(self.heights):
            end = b[i + 1] if i + 1 < len(b) else b[0] + PERIOD
            out.append((b[i], end, h))
        return out

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "heights": list(self.heights)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GratingProfile":
        return validate_profile(data["breakpoints"], data["heights"])

    @classmethod
    def from_json(cls, text: str) -> "GratingProfile":
        return cls.from_dict(json.loads(text))

    def sort_key(self) -> tuple:
        """Deterministic ordering key used for tie-breaking."""
        return (len(self.heights), self.breakpoints, self.heights)


def validate_profile(breakpoints: Sequence[float], heights: Sequence[float]) -> GratingProfile:
    """Check raw breakpoint/height lists and return the canonical profile.

    Neighbouring segments of equal height (including the wrap-around pair)
    are merged; an everywhere-equal profile becomes the flat profile with the
    single breakpoint 0.
    """
    b = [float(v) for v in breakpoints]
    h = [float(v) for v in heights]
    if not b or not h:
        raise EmptyProfile("breakpoints and heights must be non-empty")
    if len(b) != len(h):
        raise EmptyProfile(f"got {len(b)} breakpoints but {len(h)} heights")
    if not all(math.isfinite(v) for v in b + h):
        raise NonIncreasingBreakpoints("non-finite breakpoint or height")
    if b[0] < 0.0 or b[-1] >= PERIOD:
        raise NonIncreasingBreakpoints(f"breakpoints must lie in [0, 2*pi), got {b}")
    if any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
        raise NonIncreasingBreakpoints(f"breakpoints must be strictly increasing, got {b}")
    if any(v <= 0.0 for v in h):
        raise NonPositiveHeight(f"heights must be positive, got {h}")

    keep = [i for i in range(len(h)) if h[i] != h[i - 1]]
    if not keep:
        return GratingProfile((0.0,), (h[0],))
    return GratingProfile(tuple(b[i] for i in keep), tuple(h[i] for i in keep))


def canonicalize(breakpoints: Sequence[float], heights: Sequence[float]) -> GratingProfile:
    """Like :func:`validate_profile` but first wraps breakpoints into [0, 2*pi)
    and sorts them (heights travel with their breakpoints)."""
    b = np.mod(np.asarray(breakpoints, dtype=float), PERIOD)
    order = np.argsort(b, kind="stable")
    return validate_profile(b[order].tolist(), np.asarray(heights, dtype=float)[order].tolist())


def flat_profile(height: float) -> GratingProfile:
    return validate_profile([0.0], [height])


def corners(profile: GratingProfile) -> list[CornerPoint]:
    """Corners of all vertical walls, sorted by (x, y). Flat profiles have none."""
    if profile.is_flat:
        return []
    out = []
    h = profile.heights
    for i, x in enumerate(profile.breakpoints):
        left, right = h[i - 1], h[i]
        if right > left:
            out.append(CornerPoint(x, left, CornerKind.UP_STEP_LEFT))
            out.append(CornerPoint(x, right, CornerKind.UP_STEP_RIGHT))
        else:
            out.append(CornerPoint(x, right, CornerKind.DOWN_STEP_RIGHT))
            out.append(CornerPoint(x, left, CornerKind.DOWN_STEP_LEFT))
    return sorted(out, key=lambda c: (c.x, c.y))


def extremes(profile: GratingProfile) -> tuple[float, float]:
    """``(max height, min height)``."""
    return max(profile.heights), min(profile.heights)


def classify_point(profile: GratingProfile, x: float, y: float) -> Region:
    eps = profile.eps_geom
    if y < -eps:
        return Region.BELOW
    if abs(y) <= eps:
        return Region.ON_GAMMA0
    xs = float(np.mod(x, PERIOD))
    if not profile.is_flat:
        h = profile.heights
        for i, b in enumerate(profile.breakpoints):
            # distance to the wall, also across the period seam
            d = min(abs(xs - b), PERIOD - abs(xs - b))
            if d <= eps:
                lo, hi = sorted((h[i - 1], h[i]))
                if lo - eps <= y <= hi + eps:
                    return Region.ON_LAMBDA
    hx = profile.height_at(xs)
    if abs(y - hx) <= eps:
        return Region.ON_LAMBDA
    return Region.OMEGA_PLUS if y > hx else Region.OMEGA_MINUS


def profile_distance(p: GratingProfile, q: GratingProfile, samples: int = 4096) -> float:
    """Mean absolute height difference over one period (midpoint rule)."""
    x = (np.arange(samples) + 0.5) * PERIOD / samples
    return float(np.mean(np.abs(p.height_at(x) - q.height_at(x))))
