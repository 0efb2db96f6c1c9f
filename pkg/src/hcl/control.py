"""Controlled system ``x' = y^2 + x^2 - 1``, ``y' = 2xy + u gamma y^2`` and its optimal syntheses.

The state ``(x, y) = (alpha', sqrt(h))`` lives in the feasible set
``X = {(1+|x|)/mu <= y <= mu (1-|x|)}``. Its four boundary segments are
themselves trajectories of constant control (``+1`` on the left two, ``-1``
on the right two). Integration is fixed-step RK4 with the running cost
``int y dt`` carried as a third state component.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import bellman as _bm
from .centroaffine import CubicBound, ImmersionProfile, AnalyticProfile, boundary_gaps
from .errors import DomainError, IntegrationFault

DEFAULT_STEP = 1e-4
ESCAPE_TOL = 1e-9
ON_BOUNDARY_TOL = 1e-10
SWITCH_XTOL = 1e-13

SIDE_CONTROL = {"upper-left": 1.0, "upper-right": -1.0, "lower-left": 1.0, "lower-right": -1.0}


@dataclass(frozen=True)
class ControlState:
    x: float
    y: float

    def feasible(self, bound: CubicBound, tol: float = ESCAPE_TOL) -> bool:
        return min(boundary_gaps(self.x, self.y, bound.mu)[s] for s in _active_sides(self.x)) >= -tol


def _active_sides(x):
    if x < 0:
        return ("upper-left", "lower-left")
    if x > 0:
        return ("upper-right", "lower-right")
    return tuple(SIDE_CONTROL)


def feasibility_excess(x: float, y: float, mu: float) -> float:
    """How far ``(x, y)`` lies outside X (0 inside)."""
    gaps = boundary_gaps(x, y, mu)
    return max(0.0, -min(gaps[s] for s in _active_sides(x)))


def boundary_y(side: str, x: float, mu: float) -> float:
    if side == "upper-left":
        return mu * (1 + x)
    if side == "upper-right":
        return mu * (1 - x)
    if side == "lower-left":
        return (1 - x) / mu
    if side == "lower-right":
        return (1 + x) / mu
    raise ValueError(f"unknown boundary side {side!r}")


def dynamics(s: ControlState, u: float, bound: CubicBound) -> tuple[float, float]:
    if abs(u) > 1 + 1e-15:
        raise DomainError(f"control must lie in [-1, 1], got {u}")
    if not s.y > 0:
        raise DomainError("need y > 0")
    x, y = s.x, s.y
    return y * y + x * x - 1, 2 * x * y + u * bound.gamma * y * y


def mu_u(u: float, gamma: float) -> float:
    return u * gamma / 2 + math.sqrt(1 + u * u * gamma * gamma / 4)


def first_integral(s: ControlState, u: float, bound: CubicBound) -> float:
    """Quantity conserved along the flow of the constant control ``u``."""
    m = mu_u(u, bound.gamma)
    x, y = s.x, s.y
    den = m * (y * y - x * x + 1) - (m * m - 1) * x * y
    if den == 0:
        raise DomainError("first integral singular at this state")
    return (m * m + 1) * y / den


# ---------------------------------------------------------------------------
# control laws


@dataclass(frozen=True)
class ControlLaw:
    """A control ``u(t, x, y)`` with a tag naming the arc type.

    ``side`` marks a boundary slide: after every step ``y`` is re-projected
    onto that boundary segment.
    """

    tag: str
    u: Optional[float] = None
    side: Optional[str] = None
    func: Optional[Callable[[float, float, float], float]] = field(default=None, compare=False)

    def value(self, t, x, y):
        return self.u if self.func is None else self.func(t, x, y)


def const(u: float) -> ControlLaw:
    u = float(u)
    name = {1.0: "+1", -1.0: "-1", 0.0: "0"}.get(u, f"{u:+.6g}")
    return ControlLaw(f"const({name})", u=u)


def slide(side: str) -> ControlLaw:
    return ControlLaw(f"boundary-slide({side})", u=SIDE_CONTROL[side], side=side)


def feedback(func, tag="free-formula") -> ControlLaw:
    return ControlLaw(tag, func=func)


@dataclass
class Segment:
    t_start: float
    t_end: float
    tag: str
    law: Optional[ControlLaw] = field(default=None, repr=False, compare=False)

    @property
    def duration(self):
        return self.t_end - self.t_start


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Samples ``(t, x, y, u)`` of one path with its arc structure.

    ``u`` is right-continuous at arc junctions; ``u_end`` holds the control
    at the right end of each step so the control within a step is known.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    u_end: np.ndarray
    segments: list
    running_cost: float
    gamma: float
    mu: float
    problem: Optional[str] = None
    info: dict = field(default_factory=dict)

    @property
    def bound(self) -> CubicBound:
        return CubicBound(self.gamma, self.mu, check=False)

    @property
    def start(self) -> ControlState:
        return ControlState(float(self.x[0]), float(self.y[0]))

    @property
    def end(self) -> ControlState:
        return ControlState(float(self.x[-1]), float(self.y[-1]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def arc_tags(self) -> list[str]:
        tags = []
        for s in self.segments:
            if s.duration > 0 and (not tags or tags[-1] != s.tag):
                tags.append(s.tag)
        return tags

    def control_values(self) -> list[float]:
        """Distinct consecutive control values of the arcs."""
        out = []
        for s in self.segments:
            if s.duration <= 0 or s.law is None or s.law.u is None:
                continue
            if not out or out[-1] != s.law.u:
                out.append(s.law.u)
        return out

    def cost_simpson(self) -> float:
        from scipy.integrate import simpson

        return float(simpson(self.y, x=self.t))

    def cost_trapezoid(self) -> float:
        return float(np.trapezoid(self.y, self.t)) if hasattr(np, "trapezoid") else float(np.trapz(self.y, self.t))

    def boundary_fraction(self, tol: float = 1e-8) -> float:
        on = [min(abs(v) for v in boundary_gaps(x, y, self.mu).values()) <= tol for x, y in zip(self.x, self.y)]
        return float(np.mean(on))

    def max_excess(self) -> float:
        return max(feasibility_excess(x, y, self.mu) for x, y in zip(self.x, self.y))

    def shifted(self, dt: float) -> "Trajectory":
        segs = [replace(s, t_start=s.t_start + dt, t_end=s.t_end + dt) for s in self.segments]
        return replace(self, t=self.t + dt, segments=segs)

    def to_csv(self, path, alpha0: float = 0.0) -> None:
        write_trajectory_csv(path, self, alpha0)


TRAJECTORY_COLUMNS = ("t", "x", "y", "u", "alpha", "h", "C", "region")


def _alpha_knots(t, x, xdot, alpha0):
    hs = np.diff(t)
    inc = hs * (x[:-1] + x[1:]) / 2 + hs * hs * (xdot[:-1] - xdot[1:]) / 12
    return alpha0 + np.concatenate([[0.0], np.cumsum(inc)])


def write_trajectory_csv(path, traj: Trajectory, alpha0: float = 0.0) -> None:
    x, y, u = traj.x, traj.y, traj.u
    xdot = y * y + x * x - 1
    alpha = _alpha_knots(traj.t, x, xdot, alpha0)
    h = y * y
    C = 2 * u * traj.gamma * y**3
    regions = [""] * len(x)
    if traj.problem in ("max", "min") and traj.mu > 1:
        ok = (traj.t <= 0) & np.array([feasibility_excess(a, b, traj.mu) <= 1e-12 for a, b in zip(x, y)])
        if np.any(ok):
            fn = _bm.bellman_max_arrays if traj.problem == "max" else _bm.bellman_min_arrays
            names = _bm.MAX_REGIONS if traj.problem == "max" else _bm.MIN_REGIONS
            yy = np.clip(y[ok], (1 + np.abs(x[ok])) / traj.mu, traj.mu * (1 - np.abs(x[ok])))
            _, reg = fn(traj.t[ok], x[ok], yy, traj.bound)
            for i, r in zip(np.flatnonzero(ok), reg):
                regions[i] = names[r]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for i in range(len(x)):
            w.writerow([f"{v:.17g}" for v in (traj.t[i], x[i], y[i], u[i], alpha[i], h[i], C[i])] + [regions[i]])


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory CSV as numpy arrays (``region`` as strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {c: np.array([float(r[c]) for r in rows]) for c in TRAJECTORY_COLUMNS if c != "region"}
    out["region"] = [r["region"] for r in rows]
    return out


# ---------------------------------------------------------------------------
# integration


def _rk4_step(t, x, y, c, h, law, gamma):
    f = law.value
    u1 = f(t, x, y)
    k1x, k1y, k1c = y * y + x * x - 1, 2 * x * y + u1 * gamma * y * y, y
    xm, ym, tm = x + 0.5 * h * k1x, y + 0.5 * h * k1y, t + 0.5 * h
    u2 = f(tm, xm, ym)
    k2x, k2y, k2c = ym * ym + xm * xm - 1, 2 * xm * ym + u2 * gamma * ym * ym, ym
    xm, ym = x + 0.5 * h * k2x, y + 0.5 * h * k2y
    u3 = f(tm, xm, ym)
    k3x, k3y, k3c = ym * ym + xm * xm - 1, 2 * xm * ym + u3 * gamma * ym * ym, ym
    xe, ye, te = x + h * k3x, y + h * k3y, t + h
    u4 = f(te, xe, ye)
    k4x, k4y, k4c = ye * ye + xe * xe - 1, 2 * xe * ye + u4 * gamma * ye * ye, ye
    return (
        x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
        y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y),
        c + h / 6 * (k1c + 2 * k2c + 2 * k3c + k4c),
    )


class _Builder:
    """Accumulates samples and segments over consecutive arcs."""

    def __init__(self, t0, x0, y0, bound, feasible=True):
        self.t = [t0]
        self.x = [x0]
        self.y = [y0]
        self.u = [math.nan]
        self.u_end = []
        self.cost = 0.0
        self.segments = []
        self.bound = bound
        self.feasible = feasible

    @property
    def state(self):
        return self.t[-1], self.x[-1], self.y[-1]

    def _step(self, t, x, y, h, law):
        nx, ny, nc = _rk4_step(t, x, y, 0.0, h, law, self.bound.gamma)
        if law.side is not None:
            ny = boundary_y(law.side, nx, self.bound.mu)
        return nx, ny, nc

    def run(self, law: ControlLaw, t_end: float, step: float, events: Optional[dict] = None):
        """Integrate ``law`` until ``t_end`` or the first event sign change.

        ``events`` maps names to functions ``g(t, x, y)``; an event fires when
        ``g`` changes sign from its value at the arc start. Returns the name of
        the event that fired (or None).
        """
        t, x, y = self.state
        # right-continuous control at the junction
        self.u[-1] = law.value(t, x, y)
        events = events or {}
        signs = {k: math.copysign(1.0, g(t, x, y)) for k, g in events.items()}
        t_arc0 = t
        fired = None
        n = max(1, int(math.ceil((t_end - t) / step - 1e-9)))
        for i in range(n):
            h = (t_end - t) if i == n - 1 else step
            if h <= 0:
                break
            nx, ny, nc = self._step(t, x, y, h, law)
            hit = [k for k, g in events.items() if g(t + h, nx, ny) * signs[k] <= 0]
            if hit:
                # locate the earliest crossing inside this step
                best = None
                for k in hit:
                    g = events[k]
                    fn = lambda tau, g=g: g(t + tau, *self._step(t, x, y, tau, law)[:2]) * signs[k]
                    lo = 0.0
                    if fn(lo) <= 0:
                        tau = 0.0
                    else:
                        tau = brentq(fn, lo, h, xtol=SWITCH_XTOL, rtol=4 * np.finfo(float).eps)
                    if best is None or tau < best[1]:
                        best = (k, tau)
                fired, tau = best
                if tau > 0:
                    nx, ny, nc = self._step(t, x, y, tau, law)
                    self._append(t + tau, nx, ny, nc, law)
                t = t + tau
                break
            self._append(t + h, nx, ny, nc, law)
            t, x, y = t + h, nx, ny
        self.segments.append(Segment(t_arc0, self.t[-1], law.tag, law))
        return fired

    def _append(self, t, x, y, dc, law):
        if self.feasible:
            ex = feasibility_excess(x, y, self.bound.mu)
            if ex > ESCAPE_TOL:
                raise IntegrationFault(f"state ({x}, {y}) left X by {ex:.3e} at t={t} under {law.tag}")
        self.u_end.append(law.value(t, x, y))
        self.t.append(t)
        self.x.append(x)
        self.y.append(y)
        self.u.append(law.value(t, x, y))
        self.cost += dc

    def build(self, problem=None, info=None) -> Trajectory:
        u = list(self.u)
        if len(u) > 1:
            u[-1] = self.u_end[-1]
        return Trajectory(
            t=np.array(self.t),
            x=np.array(self.x),
            y=np.array(self.y),
            u=np.array(u),
            u_end=np.array(self.u_end),
            segments=[s for s in self.segments if s.duration > 0],
            running_cost=self.cost,
            gamma=self.bound.gamma,
            mu=self.bound.mu,
            problem=problem,
            info=dict(info or {}),
        )


def integrate(
    s0: ControlState,
    law: ControlLaw,
    t0: float,
    t1: float,
    step: float,
    bound: CubicBound,
    feasible: bool = True,
    stop: Optional[Callable[[float, float, float], float]] = None,
) -> Trajectory:
    """Fixed-step RK4 path of ``law`` from ``s0`` at ``t0`` to ``t1``.

    With ``feasible=True`` the path must stay in X up to ESCAPE_TOL. ``stop``
    ends the path early at the first sign change of ``stop(t, x, y)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if feasible and not s0.feasible(bound):
        raise DomainError(f"initial state {s0} outside X")
    b = _Builder(t0, s0.x, s0.y, bound, feasible)
    b.run(law, t1, step, {"stop": stop} if stop else None)
    return b.build()


# ---------------------------------------------------------------------------
# optimal syntheses


def _c_minus(mu):
    return lambda t, x, y: mu * (1 - x) - y


def _a_minus(mu):
    return lambda t, x, y: mu * y - (1 - x)


def _switch_surface(t, x, y):
    # negative iff -t < t*(x, y); continuous across x + y = 1
    return math.exp(-2 * t) * (y + 1 - x) * (x + y - 1) - (1 - x * x + y * y)


def _on(side, x, y, mu, tol=ON_BOUNDARY_TOL):
    return abs(boundary_gaps(x, y, mu)[side]) <= tol * max(1.0, y)


def _check_start(s0, T, bound):
    if not T > 0:
        raise DomainError("T must be positive")
    if bound.mu <= 1:
        raise DomainError("the bounded problems need mu > 1")
    if not s0.feasible(bound, tol=1e-12):
        raise DomainError(f"initial state {s0} outside X")


def synthesize_max_fixed_start(s0: ControlState, T: float, bound: CubicBound, step: float = DEFAULT_STEP) -> Trajectory:
    """Optimal length-maximizing path from ``s0`` over ``[-T, 0]``, free end point.

    Follows the optimal feedback: ``+1`` while ``-t < t*`` and ``-1`` beyond,
    a singular ``u = 0`` arc once the switching surface ``-t = t*`` is met, and
    a ``-1`` slide after reaching the upper-right boundary.
    """
    _check_start(s0, T, bound)
    mu = bound.mu
    b = _Builder(-T, s0.x, s0.y, bound)
    c_minus = _c_minus(mu)
    t, x, y = b.state
    if c_minus(t, x, y) <= ON_BOUNDARY_TOL:
        phase = "slide"
    else:
        g = _switch_surface(t, x, y)
        phase = "+1" if g < 0 else ("-1" if g > 0 else "singular")
    while b.state[0] < 0:
        t, x, y = b.state
        if phase == "slide":
            b.run(slide("upper-right"), 0.0, step)
            break
        if phase == "singular":
            fired = b.run(const(0.0), 0.0, step, {"upper-right": c_minus})
            phase = "slide"
        else:
            if phase == "+1":
                side = "upper-left" if _on("upper-left", x, y, mu) else "lower-left" if _on("lower-left", x, y, mu) else None
            else:
                side = "lower-right" if _on("lower-right", x, y, mu) else None
            law = slide(side) if side else const(float(phase))
            fired = b.run(law, 0.0, step, {"upper-right": c_minus, "switch": _switch_surface})
            phase = "slide" if fired == "upper-right" else "singular"
        if fired is None:
            break
    return b.build(problem="max", info={"T": T})


def synthesize_min_fixed_start(s0: ControlState, T: float, bound: CubicBound, step: float = DEFAULT_STEP) -> Trajectory:
    """Optimal length-minimizing path: ``-1`` until the lower-left boundary, then ``+1`` along it."""
    _check_start(s0, T, bound)
    mu = bound.mu
    b = _Builder(-T, s0.x, s0.y, bound)
    a_minus = _a_minus(mu)
    t, x, y = b.state
    if a_minus(t, x, y) > ON_BOUNDARY_TOL:
        side = "lower-right" if _on("lower-right", x, y, mu) else "upper-right" if _on("upper-right", x, y, mu) else None
        law = slide(side) if side else const(-1.0)
        b.run(law, 0.0, step, {"lower-left": a_minus})
    if b.state[0] < 0:
        b.run(slide("lower-left"), 0.0, step)
    return b.build(problem="min", info={"T": T})


def synthesize_max_free(T: float, bound: CubicBound, step: float = DEFAULT_STEP) -> Trajectory:
    """Longest path over horizon ``T`` with both end points free."""
    ext = _bm.maximal_B(T, bound)
    traj = synthesize_max_fixed_start(ControlState(*ext.point), T, bound, step)
    traj.info.update(bellman_value=ext.value, branch=ext.branch)
    return traj


def synthesize_min_free(T: float, bound: CubicBound, step: float = DEFAULT_STEP) -> Trajectory:
    """Shortest path over horizon ``T`` with both end points free."""
    ext = _bm.minimal_B(T, bound)
    traj = synthesize_min_fixed_start(ControlState(*ext.point), T, bound, step)
    traj.info.update(bellman_value=ext.value, branch=ext.branch)
    return traj


def extend_to_corners(traj: Trajectory, horizon: float, step: float = 1e-3) -> Trajectory:
    """Prepend and append boundary arcs of length ``horizon`` to a free optimal path.

    For the maximization path the prefix runs ``+1`` along the upper-left
    segment and the suffix ``-1`` along the upper-right one; for minimization
    the roles are mirrored. Both tend to the corners of X; their distances to
    the corners are stored in ``info``.
    """
    if traj.problem not in ("max", "min"):
        raise ValueError("extension applies to optimal max/min paths")
    bound = traj.bound
    pre_side, post_side = ("upper-left", "upper-right") if traj.problem == "max" else ("lower-right", "lower-left")
    t0, s0 = float(traj.t[0]), traj.start
    back = _Builder(t0, s0.x, s0.y, bound)
    # negative steps integrate backwards in time
    _run_backward(back, slide(pre_side), t0 - horizon, step)
    fwd = _Builder(float(traj.t[-1]), traj.end.x, traj.end.y, bound)
    fwd.run(slide(post_side), float(traj.t[-1]) + horizon, step)

    bt = back.t[::-1]
    n_back = len(bt) - 1
    t = np.concatenate([bt[:-1], traj.t, fwd.t[1:]])
    x = np.concatenate([back.x[::-1][:-1], traj.x, fwd.x[1:]])
    y = np.concatenate([back.y[::-1][:-1], traj.y, fwd.y[1:]])
    u_pre = SIDE_CONTROL[pre_side]
    u = np.concatenate([np.full(n_back, u_pre), traj.u, np.full(len(fwd.t) - 1, SIDE_CONTROL[post_side])])
    u_end = np.concatenate([np.full(n_back, u_pre), traj.u_end, np.full(len(fwd.t) - 1, SIDE_CONTROL[post_side])])
    u[n_back + len(traj.t) - 1] = traj.u_end[-1] if len(fwd.t) == 1 else SIDE_CONTROL[post_side]
    segs = [Segment(t0 - horizon, t0, slide(pre_side).tag, slide(pre_side))] + list(traj.segments) + fwd.segments
    left, right = bound.corners
    first_corner, last_corner = (left, right) if traj.problem == "max" else (right, left)
    info = dict(traj.info)
    info.update(
        horizon=horizon,
        start_corner_distance=math.hypot(x[0] - first_corner[0], y[0] - first_corner[1]),
        end_corner_distance=math.hypot(x[-1] - last_corner[0], y[-1] - last_corner[1]),
    )
    return Trajectory(t, x, y, u, u_end, segs, traj.running_cost + (-back.cost) + fwd.cost, traj.gamma, traj.mu, traj.problem, info)


def _run_backward(b: _Builder, law: ControlLaw, t_end: float, step: float):
    t, x, y = b.state
    n = max(1, int(math.ceil((t - t_end) / step - 1e-9)))
    for i in range(n):
        h = (t_end - t) if i == n - 1 else -step
        nx, ny, nc = b._step(t, x, y, h, law)
        b._append(t + h, nx, ny, nc, law)
        t, x, y = t + h, nx, ny


# ---------------------------------------------------------------------------
# profiles from trajectories


class TrajectoryProfile(ImmersionProfile):
    """Immersion profile backed by a control path.

    ``alpha' = x`` and ``alpha'' = y^2 + x^2 - 1`` use cubic Hermite
    interpolation of the state with the vector field as slopes;
    ``alpha''' = 2 y y' + 2 x x'`` uses the control active in each step.
    """

    def __init__(self, traj: Trajectory, alpha0: float = 0.0, smoothness: Optional[str] = None, info=None):
        self.traj = traj
        t, x, y = traj.t, traj.x, traj.y
        self._gamma = traj.gamma
        self._t = t
        self._tl = t.tolist()
        self._x = x.tolist()
        self._y = y.tolist()
        self._xd = (y * y + x * x - 1).tolist()
        u0 = traj.u[:-1]
        u1 = traj.u_end
        self._u0 = u0.tolist()
        self._u1 = u1.tolist()
        self._yd0 = (2 * x[:-1] * y[:-1] + u0 * traj.gamma * y[:-1] ** 2).tolist()
        self._yd1 = (2 * x[1:] * y[1:] + u1 * traj.gamma * y[1:] ** 2).tolist()
        self._alpha = _alpha_knots(t, x, y * y + x * x - 1, alpha0).tolist()
        self.t_lo, self.t_hi = float(t[0]), float(t[-1])
        corners = [s.t_end for s in traj.segments[:-1] if s.law is None or s.law.func is None]
        # a corner only where the control actually jumps
        self.corners = tuple(c for c in corners if self._jump_at(c))
        if smoothness is None:
            smoothness = "piecewise-analytic" if self.corners else "C3"
        self.smoothness = smoothness
        self.info = dict(info or {})

    def _jump_at(self, c):
        k = int(np.searchsorted(self._t, c))
        if k <= 0 or k >= len(self._tl) - 1 or abs(self._tl[k] - c) > 1e-12:
            return True
        return abs(self._u1[k - 1] - self._u0[k]) > 1e-12

    def derivatives(self, t):
        self.check_domain(t)
        k = int(np.searchsorted(self._t, t, side="right")) - 1
        k = min(max(k, 0), len(self._tl) - 2)
        t0, t1 = self._tl[k], self._tl[k + 1]
        hs = t1 - t0
        s = (t - t0) / hs
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        x0, x1, y0, y1 = self._x[k], self._x[k + 1], self._y[k], self._y[k + 1]
        m0, m1 = self._xd[k], self._xd[k + 1]
        x = h00 * x0 + h10 * hs * m0 + h01 * x1 + h11 * hs * m1
        y = h00 * y0 + h10 * hs * self._yd0[k] + h01 * y1 + h11 * hs * self._yd1[k]
        # integrated Hermite basis for alpha
        s4 = s2 * s2
        ia = hs * ((s4 / 2 - s3 + s) * x0 + (s4 / 4 - 2 * s3 / 3 + s2 / 2) * hs * m0 + (-s4 / 2 + s3) * x1 + (s4 / 4 - s3 / 3) * hs * m1)
        alpha = self._alpha[k] + ia
        u = self._u0[k] + s * (self._u1[k] - self._u0[k])
        xd = y * y + x * x - 1
        yd = 2 * x * y + u * self._gamma * y * y
        return alpha, x, xd, 2 * y * yd + 2 * x * xd

    def state(self, t):
        """Interpolated ``(x, y)`` at time ``t``."""
        _, x, xd, _ = self.derivatives(t)
        return x, math.sqrt(max(xd - x * x + 1, 0.0))


def _smoothstep(s):
    s = min(max(s, 0.0), 1.0)
    return s * s * s * (10 - 15 * s + 6 * s * s)


def _side_gap(side, mu):
    return lambda t, x, y: boundary_gaps(x, y, mu)[side]


def _ramp_law(u_from, u_to, t_a, width):
    return feedback(lambda t, x, y: u_from + (u_to - u_from) * _smoothstep((t - t_a) / width), tag="ramp")


def _shoot_ramp_start(b: _Builder, base, u_from, u_to, side, width, step, ramp_step, t_limit):
    """Advance ``b`` under ``base`` and return the ramp start that lands on ``side`` at the ramp end.

    Returns None when ``base`` never reaches the boundary before ``t_limit``.
    """
    gap = _side_gap(side, b.bound.mu)
    t0, x0, y0 = b.state
    probe = _Builder(t0, x0, y0, b.bound, feasible=False)
    if probe.run(base, t_limit, step, {"gap": gap}) is None:
        return None
    t_hit = probe.t[-1]
    t_lo = max(t0, t_hit - 4 * width)
    if t_lo > t0:
        b.run(base, t_lo, step)
    t_lo, x_lo, y_lo = b.state

    def landing_gap(tau):
        p = _Builder(t_lo, x_lo, y_lo, b.bound, feasible=False)
        if tau > t_lo:
            p.run(base, tau, step)
        p.run(_ramp_law(u_from, u_to, tau, width), tau + width, ramp_step)
        return gap(*p.state)

    if landing_gap(t_lo) <= 0:
        return t_lo
    if landing_gap(t_hit) >= 0:
        return t_hit
    return brentq(landing_gap, t_lo, t_hit, xtol=SWITCH_XTOL)


def smooth_trajectory(traj: Trajectory, width: float, step: Optional[float] = None) -> Trajectory:
    """Re-integrate ``traj`` with each control jump replaced by a smooth ramp.

    The ramp occupies a window of ``width`` before each jump, so the new
    control is C^2 and still takes values in ``[-1, 1]``. A ramp into a
    boundary slide is timed by shooting so that it ends on that boundary;
    other ramps end at the original switch time. The largest state excursion
    out of X is stored in ``info``.
    """
    if not width > 0:
        raise ValueError("smoothing width must be positive")
    segs = [s for s in traj.segments if s.duration > 0]
    if any(s.law is None or s.law.u is None for s in segs):
        raise ValueError("smoothing needs piecewise-constant arcs")
    step = step or DEFAULT_STEP
    ramp_step = min(step, width / 50)
    bound = traj.bound
    b = _Builder(float(traj.t[0]), float(traj.x[0]), float(traj.y[0]), bound, feasible=False)
    on_side = segs[0].law.side is not None
    n_ramps = 0
    for k, s in enumerate(segs):
        u_here = s.law.u
        nxt = segs[k + 1] if k + 1 < len(segs) else None
        jump = nxt is not None and nxt.law.u != u_here
        if jump and width > s.duration:
            raise ValueError(f"smoothing window {width} exceeds arc length {s.duration:.3g}")
        base = s.law if (s.law.side is not None and on_side) else const(u_here)
        if not jump:
            if s.t_end > b.state[0]:
                b.run(base, s.t_end, step)
            on_side = nxt is not None and nxt.law.side is not None and on_side
            continue
        t_a = None
        if nxt.law.side is not None:
            t_a = _shoot_ramp_start(b, base, u_here, nxt.law.u, nxt.law.side, width, step, ramp_step, s.t_end + 2 * width)
        on_side = t_a is not None
        if t_a is None:
            t_a = s.t_end - width
        if t_a > b.state[0]:
            b.run(base, t_a, step)
        b.run(_ramp_law(u_here, nxt.law.u, t_a, width), t_a + width, ramp_step)
        n_ramps += 1
    t_final = float(traj.t[-1])
    if b.state[0] < t_final:
        b.run(segs[-1].law if on_side else const(segs[-1].law.u), t_final, step)
    out = b.build(problem=traj.problem, info=dict(traj.info))
    out.info.update(smoothing=width, ramps=n_ramps, max_state_excess=out.max_excess())
    return out


def profile_from_trajectory(traj: Trajectory, alpha0: float = 0.0, smoothing: float = 0.0, step: Optional[float] = None) -> TrajectoryProfile:
    """Immersion profile ``alpha`` with ``alpha' = x``, ``h = y^2`` along ``traj``.

    With ``smoothing > 0`` the control jumps are mollified over windows of
    that width first, giving a C^3 profile. ``profile.info`` reports the
    state-constraint excursion and the cubic-bound excess (zero, since the
    smoothed control stays in ``[-1, 1]``).
    """
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    if smoothing == 0:
        return TrajectoryProfile(traj, alpha0)
    sm = smooth_trajectory(traj, smoothing, step)
    cubic_excess = max(0.0, float(np.max(np.abs(np.concatenate([sm.u, sm.u_end])))) - 1.0)
    info = dict(sm.info, cubic_excess=cubic_excess, running_cost=sm.running_cost)
    return TrajectoryProfile(sm, alpha0, smoothness="C3", info=info)


# ---------------------------------------------------------------------------
# fuzzing generators


def piecewise_constant_path(
    s0: ControlState,
    switch_times,
    controls,
    T: float,
    bound: CubicBound,
    step: float = 1e-3,
    t0: float = 0.0,
) -> Trajectory:
    """Follow the given piecewise-constant control, sliding once an exit boundary is met.

    Upon reaching the upper-right (lower-left) segment the path is forced to
    slide along it with ``-1`` (``+1``) for the rest of the horizon, the only
    controls that keep it in X.
    """
    if not s0.feasible(bound):
        raise DomainError(f"initial state {s0} outside X")
    mu = bound.mu
    b = _Builder(t0, s0.x, s0.y, bound)
    edges = [t0, *[t0 + s for s in switch_times], t0 + T]
    events = {"upper-right": _c_minus(mu), "lower-left": _a_minus(mu)}
    stuck = None
    for (lo, hi), u in zip(zip(edges[:-1], edges[1:]), controls):
        if hi <= b.state[0]:
            continue
        if stuck:
            b.run(slide(stuck), t0 + T, step)
            break
        fired = b.run(const(u), hi, step, events)
        if fired:
            stuck = fired
            b.run(slide(stuck), t0 + T, step)
            break
    return b.build()


def random_admissible_profile(bound: CubicBound, T: float, seed: int, step: float = 1e-3, max_pieces: int = 6) -> TrajectoryProfile:
    """Random trajectory-backed profile on ``[0, T]`` satisfying the cubic bound and state constraints."""
    if not T > 0:
        raise DomainError("T must be positive")
    rng = np.random.default_rng(seed)
    mu = bound.mu
    margin = 0.05 * (mu - 1 / mu)
    w, z = rng.uniform(1 / mu + margin, mu - margin, 2)
    x0, y0 = _bm.wz_to_xy(w, z)
    n = int(rng.integers(1, max_pieces + 1))
    switches = np.sort(rng.uniform(0, T, n - 1))
    controls = rng.uniform(-1, 1, n)
    traj = piecewise_constant_path(ControlState(float(x0), float(y0)), switches.tolist(), controls.tolist(), T, bound, step)
    return TrajectoryProfile(traj, info={"seed": seed})


def random_free_profile(T: float, seed: int) -> AnalyticProfile:
    """Random smooth profile with ``|alpha'| < 1`` and ``h > 0`` on ``[0, T]``.

    ``alpha' = tanh(g)`` with ``g' > -1`` gives ``h = sech(g)^2 (g' + 1) > 0``.
    """
    rng = np.random.default_rng(seed)
    c0 = rng.uniform(0.02, 1.0)
    K = 3
    b = rng.uniform(0.0, 1.0, K)
    om = rng.uniform(0.5, 5.0, K)
    ph = rng.uniform(0, 2 * math.pi, K)
    g0 = rng.uniform(-2.0, 2.0)

    def g(t):
        return g0 - t + c0 * t + float(np.sum(b * (t + (np.sin(om * t + ph) - np.sin(ph)) / om)))

    def gd(t):
        return -1 + c0 + float(np.sum(b * (1 + np.cos(om * t + ph))))

    def gdd(t):
        return float(np.sum(-b * om * np.sin(om * t + ph)))

    def a1(t):
        return math.tanh(g(t))

    def a2(t):
        return gd(t) / math.cosh(g(t)) ** 2

    def a3(t):
        th = math.tanh(g(t))
        return (gdd(t) - 2 * th * gd(t) ** 2) / math.cosh(g(t)) ** 2

    return AnalyticProfile(dalpha=a1, ddalpha=a2, dddalpha=a3, t_lo=0.0, t_hi=T)


def near_extremal_free_profile(d: float, epsilon: float) -> AnalyticProfile:
    """Admissible C^2 profile on ``[-d, 0]`` whose length tends to the free bound as ``epsilon -> 0``.

    Scales the extremal ``x*`` running from -1 to 1 by ``1 - epsilon``, which
    keeps ``|alpha'| < 1`` and ``h >= epsilon > 0``.
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    c = _bm.constant_for_horizon(d)
    k = 1 - epsilon
    return AnalyticProfile(
        dalpha=lambda t: k * _bm.euler_lagrange_family(t, c),
        ddalpha=lambda t: k * _bm.euler_lagrange_derivative(t, c),
        t_lo=-d,
        t_hi=0.0,
        smoothness="C2",
    )
