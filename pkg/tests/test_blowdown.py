import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seglab import almgren, blowdown, elliptic
from seglab.acceptance import BETA
from seglab.grid import GridDomainError, MultiField, PolarGrid2D

from conftest import psi_pair

HALF_INTEGERS = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]


# --------------------------------------------------------------------------
# blow-down family


@pytest.mark.parametrize("R", [0.25, 0.5, 1.0])
def test_family_of_homogeneous_pair(R):
    src = PolarGrid2D(128, 256, 1.0)
    f = psi_pair(src, 2.0)
    tgt = PolarGrid2D(64, 256, 1.0)
    fam = blowdown.blowdown_family(f, [R], tgt, BETA)
    m = fam.members[0]
    assert almgren.compute_H(m, 1.0) == pytest.approx(1.0, abs=1e-3)
    ref = psi_pair(tgt, 2.0)
    assert np.max(np.abs(m.values - ref.values)) < 5e-3


def test_family_skips_overflowing_windows():
    g = PolarGrid2D(32, 64, 1.0)
    f = psi_pair(g, 1.0)
    fam = blowdown.blowdown_family(f, [0.5, 2.0, -1.0], g, 1.0)
    assert fam.skipped == [False, True, True]
    assert fam.members[1] is None and len(fam.valid) == 1


def test_family_of_solver_output_is_normalised(suite):
    f, _ = suite.solve_k2(1.0)
    unit = PolarGrid2D(64, f.grid.n_theta, 1.0)
    fam = blowdown.blowdown_family(f, [0.125, 0.25, 0.5, 1.0], unit, BETA)
    for m in fam.valid:
        assert almgren.compute_H(m, 1.0) == pytest.approx(1.0, abs=1e-3)


# --------------------------------------------------------------------------
# classification


def test_classify_psi1_pair():
    g = PolarGrid2D(64, 256, 1.0)
    fit = blowdown.classify_profile(psi_pair(g, 1.0), 1.0)
    assert fit.theta0 == pytest.approx(0.0, abs=1e-9)
    assert fit.relative_l2_residual < 1e-3
    assert fit.assignment == [0, 1]
    assert fit.admissible and not fit.ties


def test_classify_rotated_three_cone_split():
    g = PolarGrid2D(64, 240, 1.0)
    f = elliptic.profile_field(g, 1.5, theta0=0.3)
    fit = blowdown.classify_profile(f, 1.5)
    assert abs(fit.theta0 - 0.3) <= g.dtheta
    assert fit.relative_l2_residual < 1e-3
    assert sorted(fit.assignment) == [0, 1, 2]


@st.composite
def admissible(draw):
    d = draw(st.sampled_from(HALF_INTEGERS))
    n = elliptic.n_cones(d)
    k = draw(st.integers(max(2, 3 if n % 2 else 2), 4)) if n > 1 else draw(st.integers(1, 3))
    assignment = [draw(st.integers(0, k - 1))]
    for c in range(1, n):
        choices = [i for i in range(k) if i != assignment[-1] and (c < n - 1 or i != assignment[0])]
        assignment.append(draw(st.sampled_from(choices)))
    return d, k, assignment


@settings(max_examples=30, deadline=None)
@given(case=admissible())
def test_classify_recovers_exact_profiles(case):
    d, k, assignment = case
    g = PolarGrid2D(48, 240, 1.0)
    f = elliptic.profile_field(g, d, k, assignment=assignment)
    fit = blowdown.classify_profile(f, d)
    assert fit.relative_l2_residual < 1e-3
    assert fit.assignment == assignment


@settings(max_examples=20, deadline=None)
@given(d=st.sampled_from([1.0, 1.5, 2.0]), shift=st.integers(0, 239))
def test_theta0_is_rotation_equivariant(d, shift):
    g = PolarGrid2D(32, 240, 1.0)
    f = elliptic.profile_field(g, d, theta0=0.1)
    rotated = MultiField(g, np.roll(f.values, shift, axis=-1))
    t_in = blowdown.classify_profile(f, d).theta0
    t_out = blowdown.classify_profile(rotated, d).theta0
    period = math.pi / d
    diff = (t_out - t_in - shift * g.dtheta) % period
    assert min(diff, period - diff) <= g.dtheta


def test_classify_flags_ties():
    g = PolarGrid2D(32, 64, 1.0)
    f = psi_pair(g, 1.0)
    both = MultiField(g, np.stack([f.values[0] + f.values[1]] * 2))
    fit = blowdown.classify_profile(both, 1.0)
    assert fit.ties == [0, 1]
    assert fit.assignment == [0, 0] and not fit.admissible


def test_classify_needs_unit_disk():
    g = PolarGrid2D(16, 32, 0.5)
    with pytest.raises(GridDomainError):
        blowdown.classify_profile(psi_pair(g, 1.0), 1.0)


def test_profile_fit_json():
    g = PolarGrid2D(32, 64, 1.0)
    d = blowdown.classify_profile(psi_pair(g, 1.0), 1.0).to_dict()
    assert {"d", "theta0", "assignment", "residual", "segregation"} <= set(d)


def test_solver_blowdown_improves_with_window(suite):
    f, _ = suite.solve_k2(2.0)
    unit = PolarGrid2D(f.grid.n_r // 2, f.grid.n_theta, 1.0)
    res = []
    for R in (0.25, 0.5, 1.0):
        fam = blowdown.blowdown_family(f, [R], unit, BETA)
        res.append(blowdown.classify_profile(fam.members[0], 2.0).relative_l2_residual)
    assert res[1] < 0.1
    assert res[0] > res[1] > res[2]


# --------------------------------------------------------------------------
# segregation and vanishing


def test_segregation_residual_of_segregated_input():
    g = PolarGrid2D(32, 64, 1.0)
    assert blowdown.segregation_residual(psi_pair(g, 1.0), 3.0) == 0.0
    with pytest.raises(ValueError):
        blowdown.segregation_residual(psi_pair(g, 1.0), 0.0)


def test_segregation_residual_decreases_along_R(suite):
    f, _ = suite.solve_k2(1.0)
    unit = PolarGrid2D(64, f.grid.n_theta, 1.0)
    vals = []
    for R in (0.125, 0.25, 0.5, 1.0):
        m = blowdown.blowdown_family(f, [R], unit, BETA).members[0]
        scale = almgren.compute_H(f, R) * R**2
        vals.append(blowdown.segregation_residual(m, BETA * scale))
    assert all(b < a for a, b in zip(vals, vals[1:])), vals


def test_segregation_residual_decreases_along_beta():
    g = PolarGrid2D(24, 48, 1.0)
    vals = []
    for beta in (50.0, 100.0, 200.0):
        f, _ = elliptic.solve_dirichlet(g, 2, elliptic.BoundarySpec(d=1.0), elliptic.SolveConfig(beta=beta, tol_grad=1e-8))
        m = blowdown.blowdown_family(f, [0.5], g, beta).members[0]
        vals.append(blowdown.segregation_residual(m, almgren.compute_H(f, 0.5) * 0.25))
    assert vals[0] >= vals[1] >= vals[2]


def test_vanishing_of_padded_field():
    g = PolarGrid2D(64, 128, 1.0)
    fam = [psi_pair(g, 1.0).padded(3)]
    rep = blowdown.vanishing_diagnostic(fam)
    assert rep.vanishing == [False, False, True]
    assert rep.masses[0] == pytest.approx(0.5, rel=1e-6) and rep.masses[1] == pytest.approx(0.5, rel=1e-6)
    with pytest.raises(ValueError):
        blowdown.vanishing_diagnostic([])


@given(perm=st.permutations([0, 1, 2]))
def test_vanishing_is_permutation_equivariant(perm):
    g = PolarGrid2D(16, 48, 1.0)
    f = MultiField(g, elliptic.profile_values(g, 1.5, 3) * np.array([1.0, 0.5, 0.01])[:, None, None])
    base = blowdown.vanishing_diagnostic([f])
    permuted = blowdown.vanishing_diagnostic([f.with_values(f.values[list(perm)])])
    assert permuted.masses == [base.masses[i] for i in perm]


@pytest.mark.parametrize("d_hat,expect", [(1.48, (1.5, 0.02)), (2.0, (2.0, 0.0)), (0.1, (0.5, 0.4)), (2.74, (2.5, 0.24))])
def test_quantization(d_hat, expect):
    q, dev = blowdown.quantization_check(d_hat)
    assert q == expect[0] and dev == pytest.approx(expect[1], abs=1e-12)


def test_quantization_domain():
    with pytest.raises(ValueError):
        blowdown.quantization_check(0.0)
