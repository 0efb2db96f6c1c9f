"""Bellman functions of the length-extremization control problems.

Three problems share the dynamics ``x' = y^2 + x^2 - 1``, ``y' = 2xy + u gamma y^2``
and the running reward ``y`` (or ``sqrt(u - x^2 + 1)`` for the free problem):

* ``free-max``: no cubic bound, ``x' = u >= x^2 - 1``, state ``x in [-1, 1]``;
* ``bounded-max`` / ``bounded-min``: ``u in [-1, 1]``, state in the feasible set
  ``X = {(1+|x|)/mu <= y <= mu (1-|x|)}``.

Time runs over ``t <= 0`` with the free end at ``t = 0``; ``B(t, x, y)`` is the
optimal value on ``[t, 0]``. Evaluators accept numpy arrays and broadcast.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import bounds as _bounds
from .centroaffine import CubicBound
from .errors import DomainError

ZERO_TOL = 1e-13
W_FAIL = 1e-9
MAX_REGIONS = ("I", "II", "III", "IV")
MIN_REGIONS = ("I", "II")


# ---------------------------------------------------------------------------
# auxiliary quantities and coordinates


@dataclass(frozen=True)
class AuxQuantities:
    a_plus: object
    a_minus: object
    b_plus: object
    b_minus: object
    c_plus: object
    c_minus: object
    d_plus: object
    d_minus: object


def aux(x, y, mu: float) -> AuxQuantities:
    return AuxQuantities(
        a_plus=mu * y + (1 - x),
        a_minus=mu * y - (1 - x),
        b_plus=mu * y + (1 + x),
        b_minus=mu * y - (1 + x),
        c_plus=mu * (1 - x) + y,
        c_minus=mu * (1 - x) - y,
        d_plus=mu * (1 + x) + y,
        d_minus=mu * (1 + x) - y,
    )


def xy_to_wz(x, y):
    return y / (1 - x), y / (1 + x)


def wz_to_xy(w, z):
    return (w - z) / (w + z), 2 * w * z / (w + z)


def in_feasible_set(x, y, mu, tol=1e-12):
    ax = np.abs(x)
    return (y >= (1 + ax) / mu - tol) & (y <= mu * (1 - ax) + tol)


def _require_feasible(x, y, mu):
    if not np.all(in_feasible_set(x, y, mu)):
        raise DomainError("state outside the feasible set X")


# ---------------------------------------------------------------------------
# free problem


def bellman_free(t, x):
    """Bellman function of the unconstrained length maximization (``t <= 0``, ``|x| <= 1``)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t > 0) or np.any(np.abs(x) > 1):
        raise DomainError("bellman_free needs t <= 0 and |x| <= 1")
    e = np.exp(2 * t)
    om = -np.expm1(2 * t)  # 1 - e^{2t}
    rad = om * (1 - x) * (1 + e - x * om)
    if np.any(rad < -1e-14):
        raise DomainError("negative radicand in free Bellman function")
    val = 0.5 * np.log(np.sqrt(np.maximum(rad, 0.0)) - x * om + 1) - t
    return val[()] if val.ndim == 0 else val


def optimal_u_free(t: float, x: float) -> float:
    """Control ``x'`` attaining equality in the free Bellman inequality."""
    if t >= 0:
        raise DomainError("optimal_u_free is singular at t = 0")
    e = math.exp(2 * t)
    om = -math.expm1(2 * t)
    return 2 * (1 - x) * (e - x * om) / om


def euler_lagrange_family(t: float, c: float) -> float:
    """Extremal ``x(t; c)`` of ``int sqrt(x' - x^2 + 1) dt`` for ``c in (-1, 1)``."""
    if not -1 < c < 1:
        raise DomainError(f"integration constant must lie in (-1, 1), got {c}")
    e2 = math.exp(2 * t)
    e4 = e2 * e2
    den = (e2 + (e2 - 2) * c) * (e2 * c + e2 - 2)
    if den == 0:
        raise DomainError("pole of the extremal family")
    return -(e4 * c * c + 2 * (e4 - 2) * c + e4) / den


def euler_lagrange_derivative(t: float, c: float) -> float:
    """Closed-form ``d/dt`` of :func:`euler_lagrange_family`."""
    e2 = math.exp(2 * t)
    e4 = e2 * e2
    num = e4 * c * c + 2 * (e4 - 2) * c + e4
    dnum = 4 * e4 * c * c + 8 * e4 * c + 4 * e4
    p = e2 + (e2 - 2) * c
    q = e2 * c + e2 - 2
    dp = 2 * e2 * (1 + c)
    dq = 2 * e2 * (1 + c)
    return -(dnum * p * q - num * (dp * q + p * dq)) / (p * q) ** 2


def constant_for_horizon(d: float) -> float:
    """The ``c in (0, 1)`` with ``e^{-2d} = 4c/(1+c)^2``: extremal from x=-1 at -d to x=1 at 0."""
    if not d > 0:
        raise DomainError("horizon must be positive")
    k = math.exp(-2 * d)
    s = math.sqrt(-math.expm1(-2 * d))
    return (1 - s) ** 2 / k if k > 1e-300 else 0.0


# ---------------------------------------------------------------------------
# bounded maximization


@dataclass(frozen=True)
class RegionThresholds:
    t_plus1: float = math.inf
    t_hat: float = math.inf
    t_star: float = math.inf
    t_minus1: float = math.inf


@dataclass(frozen=True)
class BellmanEval:
    value: float
    region: str
    W: Optional[float] = None


def _thresholds_max_arrays(x, y, mu):
    q = aux(x, y, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = q.a_minus > ZERO_TOL
        safe_am = np.where(pos, q.a_minus, 1.0)
        tp1 = np.where(pos, 0.5 * np.log1p(2 * q.c_minus / (safe_am * q.c_plus)), np.inf)
        th = np.where(pos, 0.5 * np.log(q.b_plus / safe_am), np.inf)
        s = x + y - 1
        above = s > ZERO_TOL
        safe_s = np.where(above, s, 1.0)
        ts = np.where(above, 0.5 * np.log((1 - x * x + y * y) / ((y + 1 - x) * safe_s)), np.inf)
    # the three thresholds are ordered; rounding near the seams must not flip them
    th = np.maximum(th, tp1)
    ts = np.maximum(ts, th)
    return np.maximum(tp1, 0.0), th, ts


def thresholds_max(x: float, y: float, bound: CubicBound) -> RegionThresholds:
    _require_feasible(x, y, bound.mu)
    tp1, th, ts = _thresholds_max_arrays(np.float64(x), np.float64(y), bound.mu)
    return RegionThresholds(t_plus1=float(tp1), t_hat=float(th), t_star=float(ts), t_minus1=thresholds_min(x, y, bound))


def _kmu(mu):
    return mu / (mu * mu + 1)


def max_region_I(t, x, y, mu):
    q = aux(x, y, mu)
    E = np.exp(-2 * t)
    return _kmu(mu) * np.log((q.c_plus * E + q.d_minus) / (mu * (-q.a_minus * E + q.b_plus)))


def max_region_II(t, x, y, mu):
    q = aux(x, y, mu)
    E = np.exp(-2 * t)
    m = mu
    poly = (
        m**4 * x * y - m**4 * y + m**3 * x * x - m**3 * y * y - m**3 + 6 * m * m * y
        + m * x * x - m * y * y - m - x * y - y
    )
    inner = E * (m * m + 1) * q.c_plus**2 / (8 * m * y) + q.c_plus * poly / (8 * m * y * q.a_minus)
    return _kmu(mu) * np.log(inner)


def _radicand(Q, y, mu):
    rad = Q * Q - ((mu * mu - 1) * y) ** 2
    if np.any(rad < -W_FAIL * np.maximum(1.0, Q * Q)):
        raise DomainError("negative W radicand: regional formula used outside its region")
    # seam-adjacent rounding noise
    return np.maximum(rad, 0.0)


def _W_III(t, x, y, mu):
    q = aux(x, y, mu)
    E = np.exp(-2 * t)
    m = mu
    Q = q.c_plus * q.a_minus * E + m * m * x * y + m * x * x - m * y * y - m - x * y
    return np.sqrt(_radicand(Q, y, mu)), Q, q


def max_region_III(t, x, y, mu):
    W, Q, q = _W_III(t, x, y, mu)
    m = mu
    first = 0.5 * np.log((W + Q) / ((m + 1) ** 2 * y))
    # (1+m^2) W - 2 m Q carries the factor c_+ a_- (e^{-2t} - e^{2 t_hat}) of the
    # denominator; dividing it out analytically keeps the seam at t_hat exact
    second = _kmu(m) * np.log(2 * m * m * q.c_plus * (Q + (m * m + 1) * y) / (q.a_minus * ((1 + m * m) * W + 2 * m * Q)))
    return first + second


def _W_IV(t, x, y, mu):
    q = aux(x, y, mu)
    E = np.exp(-2 * t)
    m = mu
    R = q.c_minus * q.a_plus * E + m * m * x * y - m * x * x + m * y * y + m - x * y
    return np.sqrt(_radicand(R, y, mu)), R, q


def max_region_IV(t, x, y, mu):
    W, R, q = _W_IV(t, x, y, mu)
    E = np.exp(-2 * t)
    m = mu
    first = 0.5 * np.log((W + R) / ((m + 1) ** 2 * y))
    # (m^2+1) W - 2 m R = (m^2-1)^2 (R^2 - (m^2+1)^2 y^2) / ((m^2+1) W + 2 m R) and
    # R - (m^2+1) y = c_- (a_+ E - b_-); cancelling c_- keeps the upper-right boundary exact
    num = 2 * m * m * (q.a_plus * E - q.b_minus) * (R + (m * m + 1) * y)
    den = ((m * m + 1) * W + 2 * m * R) * (q.c_minus * E + q.d_plus)
    return first + _kmu(m) * np.log(num / den)


_MAX_FORMULAS = (max_region_I, max_region_II, max_region_III, max_region_IV)


def max_region_value(region: str, t, x, y, mu: float):
    """Evaluate one regional formula regardless of which region ``(t, x, y)`` is in."""
    return _MAX_FORMULAS[MAX_REGIONS.index(region)](t, x, y, mu)


def _check_mu(bound):
    if not bound.mu > 1:
        raise DomainError("the bounded problems need mu > 1")


def bellman_max_arrays(t, x, y, bound: CubicBound):
    """Vectorized maximization Bellman function: ``(value, region_index)``, index 0..3."""
    _check_mu(bound)
    mu = bound.mu
    t, x, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))
    if np.any(t > 0):
        raise DomainError("Bellman functions are defined for t <= 0")
    _require_feasible(x, y, mu)
    tp1, th, ts = _thresholds_max_arrays(x, y, mu)
    s = -t
    region = np.where(s <= tp1, 0, np.where(s <= th, 1, np.where(s <= ts, 2, 3)))
    value = np.empty(t.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, fn in enumerate(_MAX_FORMULAS):
            m = region == k
            if np.any(m):
                value[m] = fn(t[m], x[m], y[m], mu)
    return value, region


def bellman_max(t: float, x: float, y: float, bound: CubicBound) -> BellmanEval:
    value, region = bellman_max_arrays(t, x, y, bound)
    k = int(region)
    W = None
    if k >= 2:
        W = float((_W_III if k == 2 else _W_IV)(t, x, y, bound.mu)[0])
    return BellmanEval(float(value), MAX_REGIONS[k], W)


def optimal_control_max(t: float, x: float, y: float, bound: CubicBound) -> float:
    mu = bound.mu
    c_minus = mu * (1 - x) - y
    if c_minus <= ZERO_TOL:
        return -1.0
    _, _, ts = _thresholds_max_arrays(np.float64(x), np.float64(y), mu)
    if -t < ts:
        return 1.0
    if -t == ts:
        return 0.0
    return -1.0


def optimal_control_max_arrays(t, x, y, bound):
    mu = bound.mu
    c_minus = mu * (1 - x) - y
    _, _, ts = _thresholds_max_arrays(x, y, mu)
    u = np.where(-t < ts, 1.0, np.where(-t == ts, 0.0, -1.0))
    return np.where(c_minus <= ZERO_TOL, -1.0, u)


# ---------------------------------------------------------------------------
# bounded minimization


def _t_minus1_arrays(x, y, mu):
    q = aux(x, y, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = q.c_minus > ZERO_TOL
        safe = np.where(pos, q.c_minus, 1.0)
        tm1 = np.where(pos, 0.5 * np.log1p(2 * mu * q.a_minus / (safe * q.a_plus)), np.inf)
    return np.maximum(tm1, 0.0)


def thresholds_min(x: float, y: float, bound: CubicBound) -> float:
    _require_feasible(x, y, bound.mu)
    return float(_t_minus1_arrays(np.float64(x), np.float64(y), bound.mu))


def min_region_I(t, x, y, mu):
    q = aux(x, y, mu)
    E = np.exp(-2 * t)
    return _kmu(mu) * np.log(mu * (q.a_plus * E - q.b_minus) / (q.c_minus * E + q.d_plus))


def min_region_II(t, x, y, mu):
    q = aux(x, y, mu)
    E = np.exp(-2 * t)
    m = mu
    bracket = (
        (m * m + 1) * q.c_minus * q.a_plus * E + m**4 * y * (1 + x)
        + m * (1 + m * m) * (y * y - x * x + 1) - 6 * m * m * y + y * (1 - x)
    )
    return _kmu(m) * np.log(q.a_plus / (8 * m**3 * y * q.c_minus) * bracket)


_MIN_FORMULAS = (min_region_I, min_region_II)


def min_region_value(region: str, t, x, y, mu: float):
    return _MIN_FORMULAS[MIN_REGIONS.index(region)](t, x, y, mu)


def bellman_min_arrays(t, x, y, bound: CubicBound):
    _check_mu(bound)
    mu = bound.mu
    t, x, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))
    if np.any(t > 0):
        raise DomainError("Bellman functions are defined for t <= 0")
    _require_feasible(x, y, mu)
    tm1 = _t_minus1_arrays(x, y, mu)
    region = np.where(-t <= tm1, 0, 1)
    value = np.empty(t.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, fn in enumerate(_MIN_FORMULAS):
            m = region == k
            if np.any(m):
                value[m] = fn(t[m], x[m], y[m], mu)
    return value, region


def bellman_min(t: float, x: float, y: float, bound: CubicBound) -> BellmanEval:
    value, region = bellman_min_arrays(t, x, y, bound)
    return BellmanEval(float(value), MIN_REGIONS[int(region)])


def optimal_control_min(t: float, x: float, y: float, bound: CubicBound) -> float:
    a_minus = bound.mu * y - (1 - x)
    return -1.0 if a_minus > ZERO_TOL else 1.0


def optimal_control_min_arrays(t, x, y, bound):
    a_minus = bound.mu * y - (1 - x)
    return np.where(a_minus > ZERO_TOL, -1.0, 1.0) + 0 * np.asarray(t, float)


# ---------------------------------------------------------------------------
# extremization over initial points


@dataclass(frozen=True)
class Extremum:
    point: tuple
    value: float
    branch: str = ""


def maximal_B(T: float, bound: CubicBound) -> Extremum:
    """Maximizer of ``B(-T, ., .)`` over X and the value there.

    The maximizer lies on the upper-left boundary segment ``y = mu (1 + x)``.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    _check_mu(bound)
    mu = bound.mu
    m2 = mu * mu
    e = math.exp(T)
    if T <= _bounds.branch_point(bound):
        em1 = math.expm1(T)
        den = m2 * em1 + e + 1
        x = -(m2 - 1) * em1 / den
        y = 2 * mu * e / den
        branch = "two-arc"
    else:
        r = 1 / math.sqrt(-math.expm1(-2 * T))  # e^T / sqrt(e^{2T} - 1)
        x = -1 + r / mu
        y = r
        branch = "three-arc"
    value = bellman_max(-T, x, y, bound).value
    return Extremum((x, y), value, branch)


def minimal_B(T: float, bound: CubicBound) -> Extremum:
    """Minimizer of ``B(-T, ., .)`` over X; it lies on the lower-right segment."""
    if not T > 0:
        raise DomainError("T must be positive")
    _check_mu(bound)
    mu = bound.mu
    m2 = mu * mu
    e = math.exp(T)
    den = e * (m2 + 1) + m2 - 1
    x = math.expm1(T) * (m2 - 1) / den
    y = 2 * mu * e / den
    value = bellman_min(-T, x, y, bound).value
    return Extremum((x, y), value, "two-arc")


@dataclass(frozen=True)
class GridExtremum:
    point: tuple
    wz: tuple
    value: float
    cell: float
    grid_point: tuple = ()
    grid_value: float = math.nan


def _grid_eval(problem, T, bound):
    mu = bound.mu
    arrays = bellman_max_arrays if problem == "bounded-max" else bellman_min_arrays

    def f(w, z):
        x, y = wz_to_xy(np.asarray(w, dtype=float), np.asarray(z, dtype=float))
        # closing the grid onto the boundary can round a hair outside X
        y = np.clip(y, (1 + np.abs(x)) / mu, mu * (1 - np.abs(x)))
        return arrays(np.full(np.shape(x), -T), x, y, bound)[0], x, y

    return f


def brute_force_extremum(problem: str, T: float, bound: CubicBound, n: int = 256, refine: bool = True) -> GridExtremum:
    """Extremize ``B(-T, ., .)`` over an ``n x n`` grid in the ``(w, z)`` coordinates.

    ``w = y/(1-x)`` and ``z = y/(1+x)`` both range over ``[1/mu, mu]``. With
    ``refine`` the best grid node is polished by a bounded quasi-Newton search
    over its neighbouring cells, removing the O(cell^2) grid error.
    """
    if problem not in ("bounded-max", "bounded-min"):
        raise ValueError(f"unknown problem {problem!r}")
    mu = bound.mu
    sign = 1.0 if problem == "bounded-max" else -1.0
    f = _grid_eval(problem, T, bound)
    g = np.linspace(1 / mu, mu, n)
    w, z = np.meshgrid(g, g, indexing="ij")
    vals, x, y = f(w, z)
    k = np.unravel_index(np.argmax(sign * vals), vals.shape)
    cell = float(g[1] - g[0])
    w0, z0, v0 = float(w[k]), float(z[k]), float(vals[k])
    best = (w0, z0, v0)
    if refine:
        box = [(max(1 / mu, c - cell), min(mu, c + cell)) for c in (w0, z0)]
        res = minimize(
            lambda p: -sign * float(f(p[0], p[1])[0]),
            [w0, z0],
            method="L-BFGS-B",
            bounds=box,
            options={"ftol": 1e-15, "gtol": 1e-12},
        )
        v = float(f(res.x[0], res.x[1])[0])
        if sign * v > sign * v0:
            best = (float(res.x[0]), float(res.x[1]), v)
    bw, bz, bv = best
    bx, by = f(bw, bz)[1:]
    return GridExtremum((float(bx), float(by)), (bw, bz), bv, cell, (float(x[k]), float(y[k])), v0)


# ---------------------------------------------------------------------------
# certification harness


PROBLEMS = ("free-max", "bounded-max", "bounded-min")
FREE_CONTROL_SPREAD = 4.0


@dataclass
class VerificationGrid:
    """Sample points for the Bellman-inequality check.

    ``w`` and ``z`` map to ``x = (w-z)/(w+z)``, ``y = 2wz/(w+z)``; the free
    problem uses ``x_free`` instead. ``controls`` are fractions in ``[0, 1]``
    mapped onto each problem's control set.
    """

    w: np.ndarray
    z: np.ndarray
    t: np.ndarray
    controls: np.ndarray
    x_free: np.ndarray

    @classmethod
    def uniform(cls, bound: CubicBound, n: int = 64, n_t: int = 20, n_u: int = 9, t_min: float = 0.05, t_max: float = 4.0):
        mu = bound.mu
        lo, hi = 1 / mu, mu
        # cell centres keep every point strictly inside X
        ws = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        xf = -1 + (np.arange(n) + 0.5) * 2 / n
        return cls(
            w=ws.copy(),
            z=ws.copy(),
            t=-np.linspace(t_min, t_max, n_t),
            controls=np.linspace(0.0, 1.0, n_u),
            x_free=xf,
        )

    def points(self):
        w, z = np.meshgrid(self.w, self.z, indexing="ij")
        return wz_to_xy(w.ravel(), z.ravel())


@dataclass
class VerificationReport:
    problem: str
    gamma: float
    mu: float
    tol: float
    fd_step: float
    n_points: int
    n_checks: int
    n_violations: int
    max_signed_residual: float
    max_uhat_residual: float
    worst: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} problem={self.problem} gamma={self.gamma:g} points={self.n_points} "
            f"checks={self.n_checks} violations={self.n_violations} "
            f"max_signed_residual={self.max_signed_residual:.3e} max_uhat_residual={self.max_uhat_residual:.3e}"
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "u", "residual", "region", "pass"])
            for row in self.worst:
                w.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}", f"{row[4]:.17g}", row[5], row[6]])


def _fd_along_flow(fn, t, x, y, gx, gy, h):
    fp = fn(t + h, x + h * gx, y + h * gy)
    fm = fn(t - h, x - h * gx, y - h * gy)
    return (fp - fm) / (2 * h)


def verify_bellman(
    problem: str,
    bound: CubicBound,
    grid: VerificationGrid,
    fd_step: float = 1e-6,
    tol: float = 1e-5,
    keep_worst: int = 10,
) -> VerificationReport:
    """Check the Bellman inequality along the flow for every grid point and control.

    The residual is ``dB/dt + L`` with the total derivative taken by central
    differences along the flow of each sampled control. Maximization needs
    ``residual <= tol (1 + |B|)``, minimization ``residual >= -tol (1 + |B|)``;
    at the optimal control ``|residual| <= tol``.
    """
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}")
    if not 1e-8 <= fd_step <= 1e-4:
        raise ValueError("fd_step must lie in [1e-8, 1e-4]")
    if np.any(grid.t >= 0):
        raise DomainError("time samples must be negative")
    h = fd_step
    gamma, mu = bound.gamma, bound.mu

    if problem == "free-max":
        if np.any(np.abs(grid.x_free) >= 1):
            raise DomainError("free grid must lie inside (-1, 1)")
        T, X = np.meshgrid(grid.t, grid.x_free, indexing="ij")
        T, X = T.ravel(), X.ravel()
        Y = np.zeros_like(X)
        B = bellman_free(T, X)
        fn = lambda tt, xx, yy: bellman_free(tt, np.clip(xx, -1, 1))
        # admissible controls are u >= x^2 - 1; sample x^2 - 1 + [0, FREE_CONTROL_SPREAD]
        U = (X * X - 1)[None, :] + FREE_CONTROL_SPREAD * grid.controls[:, None]
        rewards = np.sqrt(np.maximum(U - X * X + 1, 0.0))
        res = np.stack([_fd_along_flow(fn, T, X, Y, U[k], 0.0, h) for k in range(len(U))]) + rewards
        uh = np.array([optimal_u_free(tt, xx) for tt, xx in zip(T, X)])
        res_hat = _fd_along_flow(fn, T, X, Y, uh, 0.0, h) + np.sqrt(np.maximum(uh - X * X + 1, 0.0))
        regions = np.full(T.shape, "I", dtype=object)
        sign = 1.0
    else:
        xs, ys = grid.points()
        if not np.all(in_feasible_set(xs, ys, mu, tol=-1e-15)):
            raise DomainError("grid points must lie strictly inside X")
        T, I = np.meshgrid(grid.t, np.arange(xs.size), indexing="ij")
        T = T.ravel()
        X, Y = xs[I.ravel()], ys[I.ravel()]
        U = (2 * grid.controls - 1)[:, None] * np.ones_like(X)[None, :]
        if problem == "bounded-max":
            arrays, names, sign = bellman_max_arrays, MAX_REGIONS, 1.0
            uh = optimal_control_max_arrays(T, X, Y, bound)
        else:
            arrays, names, sign = bellman_min_arrays, MIN_REGIONS, -1.0
            uh = optimal_control_min_arrays(T, X, Y, bound)
        B, reg = arrays(T, X, Y, bound)
        regions = np.array(names, dtype=object)[reg]
        fn = lambda tt, xx, yy: arrays(np.minimum(tt, 0.0), xx, yy, bound)[0]
        gx = Y * Y + X * X - 1
        res = np.stack([_fd_along_flow(fn, T, X, Y, gx, 2 * X * Y + U[k] * gamma * Y * Y, h) for k in range(len(U))]) + Y
        res_hat = _fd_along_flow(fn, T, X, Y, gx, 2 * X * Y + uh * gamma * Y * Y, h) + Y

    limit = tol * (1 + np.abs(B))
    bad = sign * res > limit[None, :]
    bad_hat = np.abs(res_hat) > tol
    n_viol = int(bad.sum() + bad_hat.sum())

    # rank rows by how far they exceed their limit
    margin = sign * res - limit[None, :]
    order = np.argsort(margin, axis=None)[::-1][:keep_worst]
    worst = []
    for flat in order:
        k, j = np.unravel_index(flat, margin.shape)
        worst.append((float(T[j]), float(X[j]), float(Y[j]), float(U[k][j]), float(res[k, j]), str(regions[j]), bool(not bad[k, j])))
    for j in np.argsort(np.abs(res_hat))[::-1][:keep_worst]:
        if bad_hat[j] or len(worst) < 2 * keep_worst:
            worst.append((float(T[j]), float(X[j]), float(Y[j]), float(uh[j]), float(res_hat[j]), str(regions[j]) + ":uhat", bool(not bad_hat[j])))
    return VerificationReport(
        problem=problem,
        gamma=gamma,
        mu=mu,
        tol=tol,
        fd_step=fd_step,
        n_points=int(T.size),
        n_checks=int(res.size + res_hat.size),
        n_violations=n_viol,
        max_signed_residual=float(np.max(sign * res)),
        max_uhat_residual=float(np.max(np.abs(res_hat))),
        worst=worst,
    )


# ---------------------------------------------------------------------------
# seam continuity


@dataclass
class SeamResult:
    name: str
    n: int
    max_rel_jump: float
    max_stated_error: float


def _interior_samples(mu, n, rng, accept=None):
    out_x, out_y = [], []
    while sum(len(a) for a in out_x) < n:
        w = rng.uniform(1 / mu, mu, 4 * n)
        z = rng.uniform(1 / mu, mu, 4 * n)
        x, y = wz_to_xy(w, z)
        keep = (mu * (1 - x) - y > 1e-6) & (mu * y - (1 - x) > 1e-6)
        if accept is not None:
            keep &= accept(x, y)
        out_x.append(x[keep])
        out_y.append(y[keep])
    return np.concatenate(out_x)[:n], np.concatenate(out_y)[:n]


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)


def seam_values(bound: CubicBound):
    """Closed-form common values of adjacent regional formulas on each seam."""
    mu = bound.mu
    k = _kmu(mu)
    m2 = mu * mu
    return {
        "max I/II": lambda x, y: k * np.log((m2 - 1) * aux(x, y, mu).c_plus / (2 * mu * aux(x, y, mu).a_minus)),
        "max II/III": lambda x, y: k * np.log(mu * aux(x, y, mu).c_plus / aux(x, y, mu).a_minus),
        "max III/IV": lambda x, y: 0.5 * np.log((mu - 1) * (y - x + 1) / ((mu + 1) * (y + x - 1)))
        + k * np.log(2 * m2 / (m2 - 1)),
        "min I/II": lambda x, y: k * np.log((m2 - 1) * aux(x, y, mu).a_plus / (2 * mu * aux(x, y, mu).c_minus)),
    }


def seam_continuity(bound: CubicBound, n: int = 1000, seed: int = 0) -> list[SeamResult]:
    """Evaluate both neighbouring formulas on ``n`` points of every seam."""
    _check_mu(bound)
    mu = bound.mu
    rng = np.random.default_rng(seed)
    stated = seam_values(bound)
    out = []
    specs = [
        ("max I/II", 0, max_region_I, max_region_II, None),
        ("max II/III", 1, max_region_II, max_region_III, None),
        ("max III/IV", 2, max_region_III, max_region_IV, lambda x, y: x + y > 1 + 1e-6),
    ]
    for name, idx, left, right, accept in specs:
        x, y = _interior_samples(mu, n, rng, accept)
        thr = _thresholds_max_arrays(x, y, mu)[idx]
        t = -thr
        a, b = left(t, x, y, mu), right(t, x, y, mu)
        s = stated[name](x, y)
        out.append(SeamResult(name, n, float(np.max(_rel(a, b))), float(np.max(np.maximum(np.abs(a - s), np.abs(b - s))))))
    x, y = _interior_samples(mu, n, rng)
    t = -_t_minus1_arrays(x, y, mu)
    a, b = min_region_I(t, x, y, mu), min_region_II(t, x, y, mu)
    s = stated["min I/II"](x, y)
    out.append(SeamResult("min I/II", n, float(np.max(_rel(a, b))), float(np.max(np.maximum(np.abs(a - s), np.abs(b - s))))))
    return out
