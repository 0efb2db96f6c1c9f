import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hcl import bellman as bm
from hcl.bounds import branch_point, thm1_upper, thm2_upper, thm3_lower
from hcl.centroaffine import CubicBound, mu_from_gamma
from hcl.errors import DomainError

MUS = [CubicBound.from_mu(m) for m in (1.1, 1.2807764064044151, 2.0, 3.0)]
wz = st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 1.0))


def _point(bound, fw, fz):
    lo, hi = 1 / bound.mu, bound.mu
    return bm.wz_to_xy(lo + (hi - lo) * fw, lo + (hi - lo) * fz)


# ---------------------------------------------------------------- free problem


def test_free_initial_condition_and_maximum():
    xs = np.linspace(-1, 1, 41)
    assert np.all(np.abs(bm.bellman_free(0.0, xs)) < 1e-15)
    for d in (0.1, 1.0, 4.0):
        assert bm.bellman_free(-d, -1.0) == pytest.approx(thm1_upper(d), rel=1e-13)


def test_free_decreasing_in_x():
    h = 1e-6
    for t in np.linspace(-3, -0.05, 12):
        for x in np.linspace(-0.99, 0.99, 25):
            assert bm.bellman_free(t, x + h) - bm.bellman_free(t, x - h) < 0


def test_free_rejects_outside():
    with pytest.raises(DomainError):
        bm.bellman_free(0.1, 0.0)
    with pytest.raises(DomainError):
        bm.bellman_free(-1.0, 1.5)


@given(st.floats(-5, -0.01), st.floats(-1, 1))
def test_free_control_balances_the_inequality(t, x):
    u = bm.optimal_u_free(t, x)
    e = math.exp(2 * t)
    assert u >= x * x - 1 - 1e-12
    lhs = (1 - x) * (1 + e - x * (1 - e))
    rhs = (u - x * x + 1) * (1 - e)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_free_control_at_right_end():
    assert bm.optimal_u_free(-1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        bm.optimal_u_free(0.0, 0.5)


@pytest.mark.parametrize("d", [0.5, 1.0, 2.0])
def test_free_optimal_flow_reaches_right_end(d):
    from scipy.integrate import solve_ivp

    sol = solve_ivp(lambda t, x: [bm.optimal_u_free(t, x[0])], (-d, -1e-9), [-1.0], rtol=1e-11, atol=1e-12, dense_output=True)
    assert sol.y[0, -1] == pytest.approx(1.0, abs=1e-6)
    c = bm.constant_for_horizon(d)
    assert math.exp(-2 * d) == pytest.approx(4 * c / (1 + c) ** 2, rel=1e-12)
    for t in np.linspace(-d, -0.01, 9):
        assert sol.sol(t)[0] == pytest.approx(bm.euler_lagrange_family(t, c), abs=1e-6)


@given(st.floats(0.2, 4), st.floats(0.0, 0.95))
def test_euler_lagrange_solves_second_order_ode(d, frac):
    c = bm.constant_for_horizon(d)
    t = -d * (1 - frac)
    h = 1e-4
    x = bm.euler_lagrange_family(t, c)
    xp = bm.euler_lagrange_family(t + h, c)
    xm = bm.euler_lagrange_family(t - h, c)
    xd = bm.euler_lagrange_derivative(t, c)
    assert xd == pytest.approx((xp - xm) / (2 * h), rel=1e-5, abs=1e-7)
    xdd = (xp - 2 * x + xm) / h**2
    assert xdd == pytest.approx(2 * x * (3 * xd - 2 * x * x + 2), rel=1e-4, abs=1e-4)


def test_euler_lagrange_rejects_parameter():
    with pytest.raises(DomainError):
        bm.euler_lagrange_family(0.0, 1.0)


# ------------------------------------------------------------- aux quantities


@given(wz, st.sampled_from(MUS))
def test_aux_identities_and_signs(p, bound):
    x, y = _point(bound, *p)
    mu = bound.mu
    q = bm.aux(x, y, mu)
    assert q.a_plus - q.a_minus == pytest.approx(2 * (1 - x), abs=1e-14)
    assert q.b_plus + q.b_minus == pytest.approx(2 * mu * y, abs=1e-14)
    assert q.c_plus - q.c_minus == pytest.approx(2 * y, abs=1e-14)
    assert q.d_plus + q.d_minus == pytest.approx(2 * mu * (1 + x), abs=1e-14)
    for v in (q.a_plus, q.a_minus, q.b_plus, q.b_minus, q.c_plus, q.c_minus, q.d_plus, q.d_minus):
        assert v >= -1e-13


# ---------------------------------------------------------------- thresholds


def test_thresholds_examples():
    b2 = CubicBound.from_mu(2.0)
    th = bm.thresholds_max(0.0, 1.0, b2)
    assert th.t_plus1 == pytest.approx(0.5 * math.log(5 / 3), rel=1e-14)
    assert th.t_hat == pytest.approx(0.5 * math.log(3), rel=1e-14)
    assert 0 <= th.t_plus1 <= th.t_hat <= th.t_star
    # lower-left boundary: a_- = 0
    x = -0.2
    lower_left = bm.thresholds_max(x, (1 - x) / 2.0, b2)
    assert lower_left.t_plus1 == lower_left.t_hat == math.inf
    assert bm.thresholds_max(-0.1, 1.0, b2).t_star == math.inf
    with pytest.raises(DomainError):
        bm.thresholds_max(0.0, 2.5, b2)


@given(wz, st.sampled_from(MUS))
def test_threshold_ordering(p, bound):
    th = bm.thresholds_max(*_point(bound, *p), bound)
    assert 0 <= th.t_plus1 <= th.t_hat <= th.t_star
    assert th.t_minus1 >= 0


# ------------------------------------------------------------- max problem


@given(wz, st.sampled_from(MUS))
def test_initial_condition(p, bound):
    x, y = _point(bound, *p)
    ev = bm.bellman_max(0.0, x, y, bound)
    assert abs(ev.value) < 1e-12 and ev.region == "I" and ev.W is None
    ev = bm.bellman_min(0.0, x, y, bound)
    assert abs(ev.value) < 1e-12 and ev.region == "I"


def test_frozen_max_values(half):
    # costs of independently synthesized optimal trajectories from (0, 1.1)
    frozen = {0.5: 0.5708607360159866, 1.0: 1.0893763898119826, 2.0: 2.091466710477368, 4.0: 4.091304019113254}
    regions = {0.5: "II", 1.0: "III", 2.0: "IV", 4.0: "IV"}
    for T, v in frozen.items():
        ev = bm.bellman_max(-T, 0.0, 1.1, half)
        assert ev.value == pytest.approx(v, abs=1e-10)
        assert ev.region == regions[T]
        assert (ev.W is not None) == (ev.region in ("III", "IV"))


def _verbatim_region_III(t, x, y, mu):
    q = bm.aux(x, y, mu)
    E = math.exp(-2 * t)
    Q = q.a_minus * q.c_plus * E + mu**2 * x * y + mu * x * x - mu * y * y - mu - x * y
    W = math.sqrt(Q * Q - (mu * mu * y - y) ** 2)
    first = 0.5 * math.log((W + Q) / ((mu + 1) ** 2 * y))
    num = 2 * mu**2 * (W * (1 + mu**2) - 2 * mu * Q)
    den = (mu**2 - 1) ** 2 * q.a_minus * (q.a_minus * E - q.b_plus)
    return first + mu / (mu**2 + 1) * math.log(num / den)


def test_region_III_matches_verbatim_form_away_from_seam(half):
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(400):
        x, y = _point(half, *rng.uniform(0, 1, 2))
        th = bm.thresholds_max(x, y, half)
        if not math.isfinite(th.t_hat) or th.t_star - th.t_hat < 0.05:
            continue
        s = th.t_hat + rng.uniform(0.02, 0.98) * (min(th.t_star, th.t_hat + 3) - th.t_hat)
        ref = _verbatim_region_III(-s, x, y, half.mu)
        assert bm.max_region_value("III", -s, x, y, half.mu) == pytest.approx(ref, rel=1e-9)
        checked += 1
    assert checked > 50


@pytest.mark.parametrize("bound", MUS)
def test_seam_continuity(bound):
    for s in bm.seam_continuity(bound, n=1000, seed=1):
        assert s.max_rel_jump < 1e-9, s
        assert s.max_stated_error < 1e-10, s


def test_radicand_guard(half):
    # the region III formula well before its time window has a negative W radicand
    x, y = 0.07130750535952109, 1.0447788444406487
    assert -0.405 > -bm.thresholds_max(x, y, half).t_hat
    with pytest.raises(DomainError):
        bm.max_region_value("III", -0.405, x, y, half.mu)


def test_optimal_control_max_examples(half):
    mu = half.mu
    assert bm.optimal_control_max(-1.0, 0.2, mu * 0.8, half) == -1.0
    assert bm.optimal_control_max(-1.0, -0.2, 1.2 / mu, half) == 1.0
    assert bm.optimal_control_max(-0.1, 0.0, 1.1, half) == 1.0
    assert bm.optimal_control_max(-5.0, 0.0, 1.1, half) == -1.0


@given(wz, st.floats(0.01, 4), st.sampled_from(MUS))
def test_max_dominates_min(p, T, bound):
    x, y = _point(bound, *p)
    # near the exit boundaries the value amplifies input rounding by up to e^{2T}
    hi = bm.bellman_max(-T, x, y, bound).value
    assert hi >= bm.bellman_min(-T, x, y, bound).value - 1e-9 * max(1.0, hi)


def test_right_corner_is_forced(half):
    mu = half.mu
    x, y = (mu * mu - 1) / (mu * mu + 1), 2 * mu / (mu * mu + 1)
    for T in (0.1, 1.0, 3.0):
        assert bm.bellman_max(-T, x, y, half).value == pytest.approx(bm.bellman_min(-T, x, y, half).value, abs=1e-12)


@pytest.mark.parametrize("bound", MUS[1:3])
def test_monotone_in_z(bound):
    mu = bound.mu
    g = np.linspace(1 / mu + 1e-3, mu - 1e-3, 40)
    w, z = np.meshgrid(g, g, indexing="ij")
    h = 1e-7
    for T in (0.3, 1.0, 3.0):
        for arrays in (bm.bellman_max_arrays, bm.bellman_min_arrays):
            up = arrays(-T, *bm.wz_to_xy(w, z + h), bound)[0]
            dn = arrays(-T, *bm.wz_to_xy(w, z - h), bound)[0]
            assert np.all(up - dn >= -1e-9)


# ------------------------------------------------------------- min problem


def test_min_examples(half):
    mu = half.mu
    x = -0.1
    assert bm.optimal_control_min(-1.0, x, (1 - x) / mu, half) == 1.0
    assert bm.optimal_control_min(-1.0, 0.0, 1.0, half) == -1.0
    ev = bm.bellman_min(-2.0, 0.0, 1.1, half)
    assert ev.region == "II"
    assert bm.thresholds_min(0.0, 1.1, half) == pytest.approx(0.612625965551545, rel=1e-12)


# ---------------------------------------------------------------- extremizers


@pytest.mark.parametrize("bound", MUS)
def test_extremizer_values_equal_theorem_bounds(bound):
    for T in np.linspace(0.01, 6, 60):
        assert bm.maximal_B(T, bound).value == pytest.approx(thm2_upper(T, bound), abs=1e-12)
        assert bm.minimal_B(T, bound).value == pytest.approx(thm3_lower(T, bound), abs=1e-12)


def test_extremizer_locations(half):
    mu = half.mu
    T0 = branch_point(half)
    for T in (0.5, T0 * 0.99, T0 * 1.01, 4.0):
        ext = bm.maximal_B(T, half)
        x, y = ext.point
        assert y == pytest.approx(mu * (1 + x), abs=1e-12)
        if T <= T0:
            em1 = math.expm1(T)
            assert x == pytest.approx(-(mu**2 - 1) * em1 / (mu**2 * em1 + math.exp(T) + 1), abs=1e-14)
            assert ext.branch == "two-arc"
        else:
            assert x == pytest.approx(-1 + math.exp(T) / (mu * math.sqrt(math.exp(2 * T) - 1)), abs=1e-12)
            assert ext.branch == "three-arc"
        x, y = bm.minimal_B(T, half).point
        assert y == pytest.approx((1 + x) / mu, abs=1e-12)
    x, y = bm.minimal_B(1e-9, half).point
    assert x == pytest.approx(0.0, abs=1e-8) and y == pytest.approx(1 / mu, abs=1e-8)


@pytest.mark.parametrize("T", [0.5, 2.0, 4.0])
def test_extremizers_against_brute_force(half, T):
    for problem, fn in (("bounded-max", bm.maximal_B), ("bounded-min", bm.minimal_B)):
        ext = fn(T, half)
        grid = bm.brute_force_extremum(problem, T, half, n=256)
        assert grid.value == pytest.approx(ext.value, abs=1e-6)
        w_true = bm.xy_to_wz(*ext.point)
        w_node = bm.xy_to_wz(*grid.grid_point)
        assert max(abs(a - b) for a, b in zip(w_true, w_node)) <= grid.cell
        sign = 1 if problem == "bounded-max" else -1
        assert sign * (ext.value - grid.grid_value) >= -1e-12


def test_extremum_minus_T_is_increasing(half):
    ts = np.arange(1e-3, 8, 1e-2)
    vals = np.array([bm.maximal_B(T, half).value - T for T in ts])
    assert np.all(np.diff(vals) > 0)


# ---------------------------------------------------------------- certification


@pytest.mark.parametrize("problem", bm.PROBLEMS)
def test_verification_passes(half, problem):
    grid = bm.VerificationGrid.uniform(half, n=24, n_t=8, n_u=9)
    rep = bm.verify_bellman(problem, half, grid)
    assert rep.passed, rep.summary()
    assert rep.max_uhat_residual < 1e-5


def test_verification_catches_inconsistent_pair(half, tmp_path):
    bad = CubicBound(half.gamma, half.mu * 1.01, check=False)
    grid = bm.VerificationGrid.uniform(bad, n=24, n_t=8, n_u=9)
    rep = bm.verify_bellman("bounded-max", bad, grid)
    assert not rep.passed and rep.n_violations > 0
    rep.to_csv(tmp_path / "worst.csv")
    lines = (tmp_path / "worst.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,u,residual,region,pass"
    assert any(line.endswith("False") for line in lines[1:])


def test_verification_rejects_bad_setup(half):
    grid = bm.VerificationGrid.uniform(half, n=8, n_t=3, n_u=3)
    with pytest.raises(ValueError):
        bm.verify_bellman("bounded-max", half, grid, fd_step=1e-9)
    with pytest.raises(ValueError):
        bm.verify_bellman("other", half, grid)
    grid.t = np.array([0.0])
    with pytest.raises(DomainError):
        bm.verify_bellman("bounded-max", half, grid)


def test_grid_points_strictly_inside(half):
    x, y = bm.VerificationGrid.uniform(half, n=64).points()
    assert np.all(bm.in_feasible_set(x, y, half.mu, tol=-1e-12))
