import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_bvp

from seglab import profiles1d
from seglab.grid import PolarGrid2D


@pytest.fixture(scope="module")
def profile():
    return profiles1d.find_profile(1.0, X=20.0, h=1e-3)


@pytest.fixture(scope="module")
def profile_a2():
    return profiles1d.find_profile(2.0, h=5e-4)


# --------------------------------------------------------------------------
# shooting


def test_zero_slope_is_too_small():
    tr = profiles1d.shoot(0.0, 1.0, 5.0, 1e-3)
    assert tr.tag == profiles1d.TOO_SMALL
    # equal data: u and v coincide
    assert np.max(np.abs(tr.u - tr.v)) == 0.0


def test_large_slope_is_too_large():
    tr = profiles1d.shoot(1e3, 1.0, 5.0, 1e-3)
    assert tr.tag == profiles1d.TOO_LARGE
    assert tr.v[-1] <= 0.0 and tr.x[-1] < 5.0


def test_shoot_validation():
    for args in ((-1.0, 1.0, 5.0, 1e-3), (1.0, 0.0, 5.0, 1e-3), (1.0, 1.0, 5.0, 0.0), (1.0, 1.0, 1e-3, 1.0)):
        with pytest.raises(ValueError):
            profiles1d.shoot(*args)


def test_bisection_brackets_the_slope(profile):
    m = profile.m
    assert profiles1d.shoot(m * (1 + 1e-9), 1.0, 20.0, 1e-3).tag == profiles1d.TOO_LARGE
    assert profiles1d.shoot(m * (1 - 1e-9), 1.0, 20.0, 1e-3).tag == profiles1d.TOO_SMALL


def test_slope_matches_boundary_value_oracle(profile):
    # u(0) = v(0) = 1, u'(0) = -v'(0), and v' = -u v (WKB decay) at x = L
    L = 8.0

    def rhs(x, y):
        u, du, v, dv = y
        return np.vstack([du, u * v * v, dv, u * u * v])

    def bc(y0, yL):
        return np.array([y0[0] - 1.0, y0[2] - 1.0, y0[1] + y0[3], yL[3] + yL[0] * yL[2]])

    x = np.linspace(0.0, L, 400)
    guess = np.vstack([1 + 1.5 * x, 1.5 + 0 * x, np.exp(-x - x**2), -np.exp(-x)])
    sol = solve_bvp(rhs, bc, x, guess, tol=1e-10, max_nodes=200000)
    assert sol.success
    assert sol.sol(0.0)[1] == pytest.approx(profile.m, rel=1e-4)


# --------------------------------------------------------------------------
# the accepted profile


def test_profile_symmetry_and_monotonicity(profile):
    assert profile.tag == "accepted"
    assert profile.symmetry_defect < 1e-6
    half = (profile.x >= 0) & (profile.x <= 10.0 + 1e-9)
    assert np.all(np.diff(profile.u[half]) > 0)
    assert np.all(np.diff(profile.v[half]) < 0)
    assert np.all(profile.u > 0) and np.all(profile.v > 0)


def test_profile_linear_growth(profile):
    x = profile.x
    sel = (x >= 0) & (x <= 10.0)
    drift = profile.u[sel] - profile.b * x[sel]
    assert np.ptp(drift) < 2.0
    assert profile.b > 0
    # the losing component decays superlinearly: v(X/2) << v(X/4)
    i_quarter, i_half = np.searchsorted(x, [5.0, 10.0])
    assert profile.v[i_half] / profile.v[i_quarter] < 1e-3


def test_profile_ode_residual(profile):
    assert profiles1d.ode_residual(profile) < 1e-5


def test_profile_scaling_law(profile, profile_a2):
    # u_lambda(x) = lambda u(lambda x) with lambda = 2
    a2 = profile_a2
    x2 = a2.x
    sel = np.abs(x2) <= 5.0 + 1e-12
    expect = 2.0 * np.interp(2.0 * x2[sel], profile.x, profile.u)
    assert np.max(np.abs(a2.u[sel] - expect)) < 1e-5
    assert a2.m == pytest.approx(4.0 * profile.m, rel=1e-6)


def test_profile_trajectory_csv(tmp_path):
    tr = profiles1d.shoot(0.5, 1.0, 0.01, 1e-3)
    p = tmp_path / "traj.csv"
    tr.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,u,v"
    assert len(lines) == tr.x.size + 1


def test_extension_growth_rate(suite):
    res = suite.cached("c11", suite.c11)
    assert abs(res.measured["d_hat"] - 1.0) <= 0.05


def test_extension_is_nonnegative(profile):
    g = PolarGrid2D(16, 32, 40.0)
    f = profiles1d.extend_to_disk(profile, g)
    x, _ = g.cartesian()
    assert f.k == 2 and np.all(f.values >= 0)
    far = x > 30
    assert np.all(f.values[1][far] == 0.0)


# --------------------------------------------------------------------------
# exponential decay


def test_decay_zero_K():
    assert profiles1d.decay_experiment(0.0, 2.5, 1.0, 2).sup_Br == 2.5


@pytest.mark.parametrize("K", [1.0, 4.0, 9.0, 16.0])
def test_decay_one_dimensional_closed_form(K):
    r = 5.0
    exact = math.cosh(math.sqrt(K) * r) / math.cosh(2 * math.sqrt(K) * r)
    assert profiles1d.decay_experiment(K, 1.0, r, 1).sup_Br == pytest.approx(exact, rel=1e-6)
    if K == 1.0:
        assert exact == pytest.approx(6.74e-3, rel=1e-3)


@pytest.mark.parametrize("N", [2, 3])
def test_decay_slope(N):
    r = 2.0
    slope, _ = profiles1d.decay_slope(r, N)
    assert slope < 0
    assert abs(slope + r) / r < 0.05


@settings(max_examples=25, deadline=None)
@given(
    K=st.floats(0.1, 20.0),
    dK=st.floats(0.05, 5.0),
    A=st.floats(0.1, 10.0),
    r=st.floats(0.2, 3.0),
    N=st.integers(1, 3),
)
def test_decay_monotone_in_K_and_A(K, dK, A, r, N):
    base = profiles1d.decay_experiment(K, A, r, N).sup_Br
    assert profiles1d.decay_experiment(K + dK, A, r, N).sup_Br < base
    assert profiles1d.decay_experiment(K, 1.5 * A, r, N).sup_Br > base


def test_decay_validation():
    with pytest.raises(ValueError):
        profiles1d.decay_experiment(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        profiles1d.decay_experiment(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        profiles1d.decay_experiment(1.0, 1.0, 1.0, N=0)


def test_decay_csv(tmp_path):
    res = [profiles1d.decay_experiment(K, 1.0, 1.0) for K in (1.0, 4.0)]
    p = tmp_path / "decay.csv"
    profiles1d.write_decay_csv(res, p)
    assert p.read_text().splitlines()[0] == "K,A,r,sup_Br"
