"""Reference path geometry in road-aligned (curvilinear) coordinates.

The ego vehicle follows a fixed reference path built from straight segments
and cubic Bezier turns.  The path provides curvature as a function of arc
length, and conversions between world-frame points and (s, d) coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_C0_TOL = 1e-9
_C1_TOL = 1e-6
_ARCLEN_TOL = 1e-9


class PathDomainError(ValueError):
    """Arc-length coordinate outside [0, total_length]."""


class NoProjectionError(ValueError):
    """Point too far from the path to project meaningfully."""


@dataclass(frozen=True)
class CurvilinearPose:
    s: float
    d: float
    heading_of_path: float


class LineSegment:
    """Straight segment defined by start point, heading and length."""

    def __init__(self, start, heading: float, length: float):
        if length <= 0:
            raise ValueError("segment length must be positive")
        self.start = np.asarray(start, dtype=float)
        self.heading = float(heading)
        self.length = float(length)
        self._tangent = np.array([np.cos(self.heading), np.sin(self.heading)])

    def point(self, u: float) -> np.ndarray:
        return self.start + u * self._tangent

    def tangent(self, u: float) -> np.ndarray:
        return self._tangent

    def heading_at(self, u: float) -> float:
        return self.heading

    def curvature(self, u: float) -> float:
        return 0.0

    @property
    def end(self) -> np.ndarray:
        return self.point(self.length)

    @property
    def end_heading(self) -> float:
        return self.heading


class BezierSegment:
    """Cubic Bezier turn with an arc-length lookup table.

    The table maps arc length to the curve parameter at 0.1 m spacing;
    queries refine the table value with Newton steps on the exact speed
    integrand down to 1e-9 m.
    """

    TABLE_SPACING = 0.1

    def __init__(self, control_points):
        cp = np.asarray(control_points, dtype=float)
        if cp.shape != (4, 2):
            raise ValueError("cubic Bezier needs four 2-D control points")
        self.cp = cp
        self._build_table()

    # -- Bezier evaluation ------------------------------------------------

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        mt = 1.0 - t
        c = self.cp
        return (
            (mt**3)[..., None] * c[0]
            + (3 * mt**2 * t)[..., None] * c[1]
            + (3 * mt * t**2)[..., None] * c[2]
            + (t**3)[..., None] * c[3]
        )

    def _deriv(self, t):
        t = np.asarray(t, dtype=float)
        mt = 1.0 - t
        c = self.cp
        return (
            (3 * mt**2)[..., None] * (c[1] - c[0])
            + (6 * mt * t)[..., None] * (c[2] - c[1])
            + (3 * t**2)[..., None] * (c[3] - c[2])
        )

    def _deriv2(self, t):
        t = np.asarray(t, dtype=float)
        mt = 1.0 - t
        c = self.cp
        return (6 * mt)[..., None] * (c[2] - 2 * c[1] + c[0]) + (6 * t)[..., None] * (
            c[3] - 2 * c[2] + c[1]
        )

    def _speed(self, t):
        return np.linalg.norm(self._deriv(t), axis=-1)

    def _build_table(self):
        # Dense cumulative-trapezoid arc length, then resample at the
        # table spacing.  4096 samples keeps the table error well below
        # the refinement tolerance.
        ts = np.linspace(0.0, 1.0, 4097)
        sp = self._speed(ts)
        ds = 0.5 * (sp[1:] + sp[:-1]) * np.diff(ts)
        cum = np.concatenate([[0.0], np.cumsum(ds)])
        self.length = float(cum[-1])
        self._ts_dense = ts
        self._arc_dense = cum
        n = max(2, int(np.ceil(self.length / self.TABLE_SPACING)) + 1)
        self._arc_table = np.linspace(0.0, self.length, n)
        self._t_table = np.interp(self._arc_table, cum, ts)

    def param_at_arclength(self, u: float) -> float:
        u = min(max(u, 0.0), self.length)
        t = float(np.interp(u, self._arc_table, self._t_table))
        # Newton on g(t) = arclen(t) - u, g'(t) = speed(t).
        for _ in range(30):
            err = float(np.interp(t, self._ts_dense, self._arc_dense)) - u
            if abs(err) < _ARCLEN_TOL:
                break
            sp = float(self._speed(t))
            if sp <= 0:
                break
            t = min(max(t - err / sp, 0.0), 1.0)
        return t

    # -- segment interface ------------------------------------------------

    def point(self, u: float) -> np.ndarray:
        return self._eval(self.param_at_arclength(u))

    def tangent(self, u: float) -> np.ndarray:
        d = self._deriv(self.param_at_arclength(u))
        return d / np.linalg.norm(d)

    def heading_at(self, u: float) -> float:
        t = self.tangent(u)
        return float(np.arctan2(t[1], t[0]))

    def curvature(self, u: float) -> float:
        t = self.param_at_arclength(u)
        d1 = self._deriv(t)
        d2 = self._deriv2(t)
        num = d1[0] * d2[1] - d1[1] * d2[0]
        den = float(np.linalg.norm(d1)) ** 3
        return float(num / den)

    @property
    def end(self) -> np.ndarray:
        return self._eval(1.0)

    @property
    def end_heading(self) -> float:
        d = self._deriv(1.0)
        return float(np.arctan2(d[1], d[0]))

    @property
    def start(self) -> np.ndarray:
        return self._eval(0.0)

    @property
    def start_heading(self) -> float:
        d = self._deriv(0.0)
        return float(np.arctan2(d[1], d[0]))


def _heading_of(seg, at_start: bool) -> float:
    if isinstance(seg, LineSegment):
        return seg.heading
    return seg.start_heading if at_start else seg.end_heading


def _angle_diff(a: float, b: float) -> float:
    return float(np.abs(np.angle(np.exp(1j * (a - b)))))


@dataclass
class ReferencePath:
    """Piecewise reference path with curvature and frame conversions.

    Immutable after construction; all methods are read-only so a single
    instance can be shared across parallel episodes.
    """

    segments: list
    intersection_entry_s: float
    intersection_exit_s: float
    corridor_halfwidth: float = 20.0
    total_length: float = field(init=False)

    _PROJ_GRID = 1.0  # m, coarse grid for projection search

    def __post_init__(self):
        if not self.segments:
            raise ValueError("path needs at least one segment")
        self._cum = np.concatenate(
            [[0.0], np.cumsum([seg.length for seg in self.segments])]
        )
        self.total_length = float(self._cum[-1])
        self._validate_continuity()
        if not (0.0 <= self.intersection_entry_s < self.intersection_exit_s <= self.total_length):
            raise ValueError("intersection interval must satisfy 0 <= entry < exit <= length")
        self._build_projection_grid()

    def _validate_continuity(self):
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            b_start = b.start if isinstance(b, LineSegment) else b.start
            if np.linalg.norm(a.end - b_start) > _C0_TOL:
                raise ValueError("segments are not C0-continuous")
            if _angle_diff(a.end_heading, _heading_of(b, at_start=True)) > _C1_TOL:
                raise ValueError("segments are not C1-continuous")

    def _build_projection_grid(self):
        n = max(2, int(np.ceil(self.total_length / self._PROJ_GRID)) + 1)
        self._grid_s = np.linspace(0.0, self.total_length, n)
        self._grid_pts = np.array([self.point_at(s) for s in self._grid_s])

    # -- lookup -----------------------------------------------------------

    def _locate(self, s: float):
        if not (0.0 <= s <= self.total_length + 1e-12):
            raise PathDomainError(f"s={s} outside [0, {self.total_length}]")
        s = min(s, self.total_length)
        idx = int(np.searchsorted(self._cum, s, side="right") - 1)
        idx = min(idx, len(self.segments) - 1)
        return self.segments[idx], s - self._cum[idx]

    def point_at(self, s: float) -> np.ndarray:
        seg, u = self._locate(s)
        return seg.point(u)

    def heading_at(self, s: float) -> float:
        seg, u = self._locate(s)
        return seg.heading_at(u)

    def curvature_at(self, s: float) -> float:
        seg, u = self._locate(s)
        return seg.curvature(u)

    def max_abs_curvature(self) -> float:
        ss = np.linspace(0.0, self.total_length, 2048)
        return float(max(abs(self.curvature_at(s)) for s in ss))

    # -- frame conversions ------------------------------------------------

    def curvilinear_to_world(self, pose: CurvilinearPose) -> np.ndarray:
        seg, u = self._locate(pose.s)
        tan = seg.tangent(u)
        normal = np.array([-tan[1], tan[0]])  # left normal
        return seg.point(u) + pose.d * normal

    def world_to_curvilinear(self, p) -> CurvilinearPose:
        p = np.asarray(p, dtype=float)
        d2 = np.sum((self._grid_pts - p) ** 2, axis=1)
        best = int(np.argmin(d2))  # argmin takes the first (smallest s) on ties
        lo = self._grid_s[max(best - 1, 0)]
        hi = self._grid_s[min(best + 1, len(self._grid_s) - 1)]
        s_star = self._refine_projection(p, lo, hi)
        pt = self.point_at(s_star)
        tan_heading = self.heading_at(s_star)
        tan = np.array([np.cos(tan_heading), np.sin(tan_heading)])
        delta = p - pt
        d = float(-tan[1] * delta[0] + tan[0] * delta[1])
        if abs(d) > self.corridor_halfwidth:
            raise NoProjectionError(f"point {p} is {abs(d):.1f} m from the path")
        return CurvilinearPose(s=float(s_star), d=d, heading_of_path=tan_heading)

    def _refine_projection(self, p, lo: float, hi: float) -> float:
        def grad(s):
            pt = self.point_at(s)
            h = self.heading_at(s)
            tan = np.array([np.cos(h), np.sin(h)])
            return -2.0 * float(np.dot(p - pt, tan))

        g_lo, g_hi = grad(lo), grad(hi)
        if g_lo >= 0.0:
            return lo
        if g_hi <= 0.0:
            return hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            g = grad(mid)
            if abs(g) < 1e-9:
                return mid
            if g < 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def make_left_turn_bezier(entry_point, entry_heading, exit_point, exit_heading):
    """Cubic Bezier turn: middle control points along the lane tangents at
    half the turn chord, giving C1 continuity with the adjoining lanes."""
    entry_point = np.asarray(entry_point, dtype=float)
    exit_point = np.asarray(exit_point, dtype=float)
    chord = float(np.linalg.norm(exit_point - entry_point))
    t_in = np.array([np.cos(entry_heading), np.sin(entry_heading)])
    t_out = np.array([np.cos(exit_heading), np.sin(exit_heading)])
    p1 = entry_point + 0.5 * chord * t_in
    p2 = exit_point - 0.5 * chord * t_out
    return BezierSegment([entry_point, p1, p2, exit_point])
