"""Closed-form bounds on the centro-affine length of a segment.

All functions take the Hilbert distance ``d`` of the segment end-points and,
where relevant, a :class:`~hcl.centroaffine.CubicBound`. For ``mu`` within
``MU_ONE_TOL`` of 1 every bound collapses to ``d`` (hyperbola case).
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

from .centroaffine import CubicBound, mu_from_gamma
from .errors import DomainError

MU_ONE_TOL = 1e-12
LOG2 = math.log(2.0)


def _check_d(d):
    if not math.isfinite(d) or d < 0:
        raise DomainError(f"Hilbert distance must be finite and >= 0, got {d}")


def _log_e_plus_sqrt(d):
    """``log(e^d + sqrt(e^{2d} - 1))`` without overflow."""
    return d + math.log1p(math.sqrt(-math.expm1(-2 * d)))


def _is_hyperbolic(bound):
    return bound.mu <= 1 + MU_ONE_TOL


def branch_point(bound: CubicBound) -> float:
    """Hilbert distance ``log((mu^2+1)/(mu^2-1))`` where the upper bound changes form."""
    m2 = bound.mu**2
    if m2 - 1 <= 0:
        return math.inf
    return math.log((m2 + 1) / (m2 - 1))


def thm1_upper(d: float) -> float:
    """Sharp upper bound on the length without a cubic-form bound."""
    _check_d(d)
    return _log_e_plus_sqrt(d)


def _thm2_branches(d, mu):
    m2 = mu * mu
    k = 2 * mu / (m2 + 1)
    first = k * math.log1p((m2 + 1) * math.expm1(d) / 2)
    # (sqrt(E+1)+sqrt(E-1))/(sqrt(E+1)-sqrt(E-1)) = E + sqrt(E^2-1)
    second = math.log((mu - 1) / (mu + 1)) + _log_e_plus_sqrt(d) + k * math.log(2 * m2 / (m2 - 1))
    return first, second


def thm2_upper(d: float, bound: CubicBound) -> float:
    _check_d(d)
    if _is_hyperbolic(bound):
        return d
    first, second = _thm2_branches(d, bound.mu)
    return first if d <= branch_point(bound) else second


def thm2_relaxed_constant(bound: CubicBound) -> float:
    """Supremum of ``thm2_upper(d) - d``."""
    mu = bound.mu
    m2 = mu * mu
    return LOG2 - math.log((mu + 1) / (mu - 1)) + 2 * mu / (m2 + 1) * math.log(2 * m2 / (m2 - 1))


def thm2_relaxed(d: float, bound: CubicBound) -> float:
    _check_d(d)
    if _is_hyperbolic(bound):
        return d
    return d + thm2_relaxed_constant(bound)


def thm3_lower(d: float, bound: CubicBound) -> float:
    _check_d(d)
    if _is_hyperbolic(bound):
        return d
    mu = bound.mu
    m2 = mu * mu
    # log((E(mu^2+1) + mu^2 - 1) / (2 mu^2)) = log1p((mu^2+1)(E-1) / (2 mu^2))
    return 2 * mu / (m2 + 1) * math.log1p((m2 + 1) * math.expm1(d) / (2 * m2))


def thm3_relaxed(d: float, bound: CubicBound) -> float:
    _check_d(d)
    if _is_hyperbolic(bound):
        return d
    mu = bound.mu
    m2 = mu * mu
    return 2 * mu / (m2 + 1) * (d - math.log(2 * m2 / (m2 + 1)))


def thm4_geodesic_bounds(d: float, bound: CubicBound) -> tuple[float, float]:
    _check_d(d)
    return d / bound.mu, d * bound.mu


def delta(T: float, bound: CubicBound) -> float:
    """Excess ``thm2_upper(T) - T`` of the sharp upper bound over the Hilbert distance."""
    return thm2_upper(T, bound) - T


def delta_derivative(T: float, bound: CubicBound) -> float:
    mu = bound.mu
    e = math.exp(T)
    if T <= branch_point(bound):
        return (mu - 1) * (mu + 1 - (mu - 1) * e) / (mu * mu * (e - 1) + e + 1)
    s = math.sqrt(-math.expm1(-2 * T))
    return (1 - s) / s


def blaschke_bound(n: int) -> CubicBound:
    """Cubic bound of an affine sphere over a domain in RP^n: ``mu = sqrt(n)``."""
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n}")
    mu = math.sqrt(n)
    return CubicBound((n - 1) / mu, mu)


@dataclass(frozen=True)
class BoundCurveSample:
    dH: float
    E: float
    thm1_upper: float
    thm2_upper: float
    thm2_relaxed: float
    thm3_lower: float
    thm3_relaxed: float
    gamma: float
    mu: float


BOUND_COLUMNS = tuple(f.name for f in fields(BoundCurveSample))


def bound_curve_sample(d: float, bound: CubicBound) -> BoundCurveSample:
    return BoundCurveSample(
        dH=d,
        E=math.exp(d),
        thm1_upper=thm1_upper(d),
        thm2_upper=thm2_upper(d, bound),
        thm2_relaxed=thm2_relaxed(d, bound),
        thm3_lower=thm3_lower(d, bound),
        thm3_relaxed=thm3_relaxed(d, bound),
        gamma=bound.gamma,
        mu=bound.mu,
    )


def blaschke_corollary_bounds(d: float, n: int) -> BoundCurveSample:
    return bound_curve_sample(d, blaschke_bound(n))


def bound_curve(d_values, bound: CubicBound) -> list[BoundCurveSample]:
    return [bound_curve_sample(float(d), bound) for d in d_values]


def write_bounds_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUND_COLUMNS)
        for s in samples:
            w.writerow([f"{v:.17g}" for v in astuple(s)])


def bound_for(gamma: float | None = None, n: int | None = None) -> CubicBound:
    """Build the cubic bound from either ``gamma`` or a Blaschke dimension ``n``."""
    if (gamma is None) == (n is None):
        raise ValueError("give exactly one of gamma and n")
    return mu_from_gamma(gamma) if n is None else blaschke_bound(n)
