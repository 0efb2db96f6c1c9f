"""Centro-affine geometry of curves ``t -> exp(alpha(t)) * (e^t, e^-t)``.

A curve in the positive quadrant is described by the scalar function
``alpha``. Its centro-affine metric is ``h = alpha'' - alpha'^2 + 1`` and its
cubic form ``C = alpha''' - 6 alpha' alpha'' + 4 alpha'^3 - 4 alpha'``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _quad

from .errors import CubicFormUndefined, DomainError, InadmissibleProfileError

SMOOTHNESS_TAGS = ("C2", "C3", "piecewise-analytic")
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class CubicBound:
    """Cubic-form bound constant ``gamma`` and the matching state constant ``mu``.

    ``mu = gamma/2 + sqrt(1 + gamma^2/4)`` and ``gamma = (mu^2 - 1)/mu``.
    Pass ``check=False`` only to build deliberately inconsistent pairs.
    """

    gamma: float
    mu: float
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.mu)):
            raise DomainError("non-finite cubic bound")
        if self.gamma < 0 or self.mu < 1:
            raise DomainError(f"need gamma >= 0 and mu >= 1, got {self.gamma}, {self.mu}")
        if self.check:
            g = gamma_from_mu_value(self.mu)
            if abs(g - self.gamma) > 1e-12 * max(1.0, self.gamma):
                raise DomainError(f"inconsistent pair gamma={self.gamma}, mu={self.mu}")

    @classmethod
    def from_gamma(cls, gamma: float) -> "CubicBound":
        return mu_from_gamma(gamma)

    @classmethod
    def from_mu(cls, mu: float) -> "CubicBound":
        if not (math.isfinite(mu) and mu >= 1):
            raise DomainError(f"mu must be >= 1, got {mu}")
        return cls(gamma_from_mu_value(mu), mu)

    @property
    def corners(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Left-most and right-most points of the feasible set."""
        m2 = self.mu * self.mu
        x = (m2 - 1) / (m2 + 1)
        y = 2 * self.mu / (m2 + 1)
        return (-x, y), (x, y)


def gamma_from_mu_value(mu: float) -> float:
    return mu - 1.0 / mu


def mu_from_gamma(gamma: float) -> CubicBound:
    if not math.isfinite(gamma) or gamma < 0:
        raise DomainError(f"gamma must be finite and >= 0, got {gamma}")
    mu = gamma / 2 + math.sqrt(1 + gamma * gamma / 4)
    # mu - 1/mu reproduces gamma up to rounding; store the given gamma
    return CubicBound(gamma, mu)


# ---------------------------------------------------------------------------
# profiles


class ImmersionProfile:
    """Evaluator of ``(alpha, alpha', alpha'', alpha''')`` on ``[t_lo, t_hi]``.

    Subclasses implement :meth:`derivatives`. ``corners`` lists the times
    where the third derivative jumps (only meaningful for non-C3 profiles).
    """

    t_lo: float
    t_hi: float
    smoothness: str = "C3"
    corners: tuple = ()

    def derivatives(self, t: float) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def check_domain(self, t: float) -> None:
        if not (self.t_lo - 1e-12 <= t <= self.t_hi + 1e-12):
            raise DomainError(f"t={t} outside profile domain [{self.t_lo}, {self.t_hi}]")

    def sqrt_h(self, t: float) -> float:
        _, a1, a2, _ = self.derivatives(t)
        h = a2 - a1 * a1 + 1.0
        if not h > 0:
            raise InadmissibleProfileError(f"metric h={h} <= 0 at t={t}")
        return math.sqrt(h)


class AnalyticProfile(ImmersionProfile):
    """Profile given by closed-form derivative callables.

    ``alpha`` may be omitted; it is then recovered by quadrature of
    ``dalpha`` from ``alpha0`` at ``t_lo``.
    """

    def __init__(
        self,
        dalpha: Callable[[float], float],
        ddalpha: Callable[[float], float],
        dddalpha: Optional[Callable[[float], float]] = None,
        alpha: Optional[Callable[[float], float]] = None,
        t_lo: float = -math.inf,
        t_hi: float = math.inf,
        smoothness: str = "C3",
        alpha0: float = 0.0,
    ):
        if smoothness not in SMOOTHNESS_TAGS:
            raise ValueError(f"unknown smoothness tag {smoothness!r}")
        if dddalpha is None and smoothness == "C3":
            smoothness = "C2"
        self._a = alpha
        self._a1 = dalpha
        self._a2 = ddalpha
        self._a3 = dddalpha
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.smoothness = smoothness
        self.alpha0 = alpha0

    def derivatives(self, t):
        self.check_domain(t)
        if self._a is not None:
            a0 = self._a(t)
        elif math.isfinite(self.t_lo):
            a0 = self.alpha0 + _quad.quad(self._a1, self.t_lo, t, epsabs=1e-13)[0]
        else:
            a0 = math.nan
        a3 = self._a3(t) if self._a3 is not None else math.nan
        return a0, self._a1(t), self._a2(t), a3

    def sqrt_h(self, t):
        # skip the alpha quadrature on the hot path
        self.check_domain(t)
        a1 = self._a1(t)
        h = self._a2(t) - a1 * a1 + 1.0
        if not h > 0:
            raise InadmissibleProfileError(f"metric h={h} <= 0 at t={t}")
        return math.sqrt(h)


def constant_profile(value: float = 0.0, t_lo: float = -math.inf, t_hi: float = math.inf):
    """``alpha = const``: the hyperbola, with ``h = 1`` and ``C = 0``."""
    return AnalyticProfile(
        dalpha=lambda t: 0.0,
        ddalpha=lambda t: 0.0,
        dddalpha=lambda t: 0.0,
        alpha=lambda t: value,
        t_lo=t_lo,
        t_hi=t_hi,
    )


def cosine_profile(eps: float, t_lo: float = -math.inf, t_hi: float = math.inf):
    """``alpha = eps * cos t``; admissible for small ``eps``."""
    return AnalyticProfile(
        alpha=lambda t: eps * math.cos(t),
        dalpha=lambda t: -eps * math.sin(t),
        ddalpha=lambda t: -eps * math.cos(t),
        dddalpha=lambda t: eps * math.sin(t),
        t_lo=t_lo,
        t_hi=t_hi,
    )


class SampledProfile(ImmersionProfile):
    """Profile tabulated at knots and interpolated by cubic Hermite pieces.

    ``alpha`` uses the pair (alpha, alpha'), ``alpha'`` the pair
    (alpha', alpha''), ``alpha''`` the pair (alpha'', alpha'''); ``alpha'''``
    is interpolated linearly. Knot values are reproduced exactly.
    """

    def __init__(self, t, alpha, dalpha, ddalpha, dddalpha, smoothness="C3", corners=(), info=None):
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("knot times must be strictly increasing with at least two entries")
        if smoothness not in SMOOTHNESS_TAGS:
            raise ValueError(f"unknown smoothness tag {smoothness!r}")
        self.t = t
        self.alpha = np.asarray(alpha, dtype=float)
        self.dalpha = np.asarray(dalpha, dtype=float)
        self.ddalpha = np.asarray(ddalpha, dtype=float)
        self.dddalpha = np.asarray(dddalpha, dtype=float)
        self.t_lo = float(t[0])
        self.t_hi = float(t[-1])
        self.smoothness = smoothness
        self.corners = tuple(corners)
        self.info = dict(info or {})
        # python lists make scalar lookups much cheaper than numpy indexing
        self._tl = t.tolist()
        self._cols = [c.tolist() for c in (self.alpha, self.dalpha, self.ddalpha, self.dddalpha)]

    def _locate(self, t):
        self.check_domain(t)
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        return min(max(k, 0), len(self._tl) - 2)

    def derivatives(self, t):
        k = self._locate(t)
        t0, t1 = self._tl[k], self._tl[k + 1]
        hstep = t1 - t0
        s = (t - t0) / hstep
        a, a1, a2, a3 = self._cols
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)

        def herm(p, q):
            return h00 * p[k] + h10 * hstep * q[k] + h01 * p[k + 1] + h11 * hstep * q[k + 1]

        third = a3[k] + s * (a3[k + 1] - a3[k])
        return herm(a, a1), herm(a1, a2), herm(a2, a3), third

    def to_csv(self, path):
        write_profile_csv(path, self.t, self.alpha, self.dalpha, self.ddalpha, self.dddalpha)


PROFILE_COLUMNS = ("t", "alpha", "dalpha", "ddalpha", "dddalpha")


def write_profile_csv(path, t, alpha, dalpha, ddalpha, dddalpha):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for row in zip(t, alpha, dalpha, ddalpha, dddalpha):
            w.writerow([f"{float(v):.17g}" for v in row])


def read_profile_csv(path, smoothness="C3") -> SampledProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SampledProfile(*data.T, smoothness=smoothness)


def sample_profile(profile: ImmersionProfile, ts: Sequence[float]) -> np.ndarray:
    """Rows ``(t, alpha, alpha', alpha'', alpha''')`` at the given times."""
    return np.array([(t, *profile.derivatives(t)) for t in ts])


# ---------------------------------------------------------------------------
# pointwise quantities


def metric_h(profile: ImmersionProfile, t: float) -> float:
    _, a1, a2, _ = profile.derivatives(t)
    return a2 - a1 * a1 + 1.0


def _at_corner(profile, t, tol=1e-9):
    return profile.smoothness != "C3" and any(abs(t - c) <= tol for c in profile.corners)


def cubic_form(profile: ImmersionProfile, t: float) -> float:
    if _at_corner(profile, t):
        raise CubicFormUndefined(f"cubic form undefined at corner t={t}")
    _, a1, a2, a3 = profile.derivatives(t)
    if math.isnan(a3):
        raise CubicFormUndefined("profile carries no third derivative")
    return a3 - 6 * a1 * a2 + 4 * a1**3 - 4 * a1


# ---------------------------------------------------------------------------
# length


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 48, panels: Sequence[float] = ()):
    """Adaptive Simpson quadrature of ``f`` over ``[a, b]`` to absolute ``tol``.

    ``panels`` are extra break points (e.g. kinks) where the interval is
    split up front. Uses an explicit stack and Richardson correction.
    """
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth, panels)
    if a == b:
        return 0.0
    cuts = sorted({a, b, *[p for p in panels if a < p < b]})
    # a few uniform panels guard against aliasing of the first Simpson estimate
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = 8
        pieces.extend((lo + (hi - lo) * k / n, lo + (hi - lo) * (k + 1) / n) for k in range(n))
    total_len = b - a
    total = 0.0
    for lo, hi in pieces:
        flo, fhi = f(lo), f(hi)
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        whole = (hi - lo) / 6 * (flo + 4 * fmid + fhi)
        stack = [(lo, hi, flo, fmid, fhi, whole, tol * (hi - lo) / total_len, 0)]
        while stack:
            lo_, hi_, fa, fm, fb, s, eps, depth = stack.pop()
            m = 0.5 * (lo_ + hi_)
            lm = 0.5 * (lo_ + m)
            rm = 0.5 * (m + hi_)
            flm, frm = f(lm), f(rm)
            left = (m - lo_) / 6 * (fa + 4 * flm + fm)
            right = (hi_ - m) / 6 * (fm + 4 * frm + fb)
            delta = left + right - s
            # two forced levels keep a lucky first estimate from being accepted
            if depth >= max_depth or (depth >= 2 and abs(delta) <= 15 * eps):
                total += left + right + delta / 15
            else:
                stack.append((lo_, m, fa, flm, fm, left, eps / 2, depth + 1))
                stack.append((m, hi_, fm, frm, fb, right, eps / 2, depth + 1))
    return total


def riemann_length(profile: ImmersionProfile, t_i: float, t_f: float, tol: float = 1e-10) -> float:
    """Length of ``[t_i, t_f]`` in the centro-affine metric, ``int sqrt(h) dt``.

    Raises InadmissibleProfileError if ``h <= 0`` is met at any quadrature node.
    """
    if not t_i < t_f:
        raise DomainError(f"need t_i < t_f, got {t_i}, {t_f}")
    profile.check_domain(t_i)
    profile.check_domain(t_f)
    return adaptive_simpson(profile.sqrt_h, t_i, t_f, tol=tol, panels=profile.corners)


# ---------------------------------------------------------------------------
# admissibility


@dataclass
class Violation:
    t: float
    kind: str
    amount: float


@dataclass
class AdmissibilityReport:
    samples: int
    violations: list = field(default_factory=list)
    skipped_corners: int = 0
    max_cubic_ratio: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}


def check_admissible(
    profile: ImmersionProfile,
    bound: CubicBound,
    grid_step: float,
    state_bounds: bool = False,
    tol: float = 1e-9,
) -> AdmissibilityReport:
    """Sample ``profile`` on a uniform grid and collect constraint violations.

    Checked: ``h > 0``, ``|alpha'| < 1``, ``|C| <= 2 gamma h^{3/2}`` and, with
    ``state_bounds``, ``(1 + |alpha'|)/mu <= sqrt(h) <= mu (1 - |alpha'|)``.
    Corner samples of C2 profiles skip the cubic-form check.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    n = max(1, int(math.ceil((profile.t_hi - profile.t_lo) / grid_step)))
    ts = np.linspace(profile.t_lo, profile.t_hi, n + 1)
    report = AdmissibilityReport(samples=len(ts))
    for t in ts:
        t = float(t)
        _, a1, a2, a3 = profile.derivatives(t)
        h = a2 - a1 * a1 + 1.0
        if not h > 0:
            report.violations.append(Violation(t, "h", h))
            continue
        if abs(a1) >= 1:
            report.violations.append(Violation(t, "dalpha", abs(a1) - 1))
        if _at_corner(profile, t) or math.isnan(a3):
            report.skipped_corners += 1
        else:
            c = a3 - 6 * a1 * a2 + 4 * a1**3 - 4 * a1
            lim = 2 * bound.gamma * h**1.5
            report.max_cubic_ratio = max(report.max_cubic_ratio, abs(c) / h**1.5)
            if abs(c) > lim + tol * (1 + lim):
                report.violations.append(Violation(t, "cubic", abs(c) - lim))
        if state_bounds:
            status = state_bounds_check(a1, math.sqrt(h), bound, tol=max(tol, BOUNDARY_TOL))
            if status.status == "outside":
                report.violations.append(Violation(t, "state", status.excess))
    return report


@dataclass(frozen=True)
class StateBoundsStatus:
    status: str  # "inside", "on_boundary" or "outside"
    sides: tuple = ()
    excess: float = 0.0


def boundary_gaps(x: float, y: float, mu: float) -> dict:
    """Signed slack of the four boundary segments (positive inside)."""
    return {
        "upper-left": mu * (1 + x) - y,
        "upper-right": mu * (1 - x) - y,
        "lower-left": y - (1 - x) / mu,
        "lower-right": y - (1 + x) / mu,
    }


def state_bounds_check(x: float, y: float, bound: CubicBound, tol: float = BOUNDARY_TOL) -> StateBoundsStatus:
    """Classify ``(x, y)`` against ``(1+|x|)/mu <= y <= mu (1-|x|)``.

    Only the half of each constraint selected by the sign of ``x`` is active,
    which splits the boundary into four segments.
    """
    mu = bound.mu
    gaps = boundary_gaps(x, y, mu)
    active = ["upper-left", "lower-left"] if x < 0 else ["upper-right", "lower-right"]
    if x == 0:
        active = list(gaps)
    worst = min(gaps[s] for s in active)
    if worst < -tol:
        return StateBoundsStatus("outside", tuple(s for s in active if gaps[s] < -tol), -worst)
    on = tuple(s for s in gaps if abs(gaps[s]) <= tol and (s in active or abs(x) <= tol))
    if on:
        return StateBoundsStatus("on_boundary", on)
    return StateBoundsStatus("inside")
