from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmresp import kernels
from pmresp.errors import DomainError
from pmresp.orbit import (ParamAlpha, branch_points, inverse_orbit, left_inverse,
                          logg, map_T, return_time)


def test_param_alpha_rejects_endpoints():
    ParamAlpha(0.5)
    for bad in (0.0, 1.0, -0.1, 1.5, float("nan")):
        with pytest.raises(DomainError):
            ParamAlpha(bad)


def test_map_right_branch():
    for alpha in (0.2, 0.5, 0.8):
        assert map_T(alpha, 0.75) == pytest.approx(0.5, abs=0)


def test_map_left_endpoint_reaches_one():
    for alpha in (0.2, 0.5, 0.8):
        assert map_T(alpha, 0.5) == pytest.approx(1.0, abs=1e-15)


def test_map_hand_value():
    # 0.25 (1 + sqrt(2) * 0.5) evaluated by hand
    assert map_T(0.5, 0.25) == pytest.approx(0.4267766953, abs=1e-10)


def test_map_domain_errors():
    with pytest.raises(DomainError):
        map_T(0.5, -0.1)
    with pytest.raises(DomainError):
        map_T(0.5, 1.1)


def test_left_inverse_trivials():
    for alpha in (0.2, 0.5, 0.8):
        assert left_inverse(alpha, 1.0) == pytest.approx(0.5, abs=1e-14)
        assert left_inverse(alpha, 0.0) == 0.0
    assert left_inverse(0.5, 0.4267766953) == pytest.approx(0.25, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(0.05, 0.95),
    v=st.floats(1e-12, 1.0),
)
def test_left_inverse_roundtrip(alpha, v):
    w = left_inverse(alpha, v)
    assert 0.0 <= w <= 0.5
    assert map_T(alpha, w) == pytest.approx(v, abs=1e-13)


def test_inverse_orbit_base_case():
    st0 = inverse_orbit(0.7, 0.83, 0)[0]
    assert (st0.z, st0.dz, st0.d2z, st0.d3z) == (0.83, 1.0, 0.0, 0.0)
    assert (st0.da_z, st0.da_dz, st0.da_d2z) == (0.0, 0.0, 0.0)
    assert not st0.underflowed


def test_inverse_orbit_recursion_consistency():
    alpha = 0.5
    A = 2.0**alpha
    states = inverse_orbit(alpha, 0.8, 40)
    for s0, s1 in zip(states, states[1:]):
        assert s1.z * (1.0 + A * s1.z**alpha) == pytest.approx(s0.z, abs=1e-14)
        assert s1.r == s0.r + 1
        if s1.r >= 1:
            assert 0.0 < s1.z <= 0.5
            assert s1.z < s0.z or s0.r == 0


def test_dz_product_formula():
    # dz equals the product of the inverse multipliers to 1e-12 relative
    alpha = 0.35
    A = 2.0**alpha
    states = inverse_orbit(alpha, 0.9, 50)
    prod = 1.0
    for s in states[1:]:
        prod /= 1.0 + (alpha + 1.0) * A * s.z**alpha
        assert abs(s.dz - prod) <= 1e-12 * prod


def test_signs_along_orbit():
    for alpha in (0.2, 0.5, 0.8):
        for s in inverse_orbit(alpha, 0.77, 200)[1:]:
            assert 0.0 < s.dz <= 1.0
            assert s.d2z <= 0.0
            assert s.da_z >= 0.0


def test_sandwich_inequality():
    # 1/(z^-a + r a 2^a) <= z_r^a <= 1/(z^-a + r a (1-a) 2^(a-1))
    for alpha in (0.2, 0.5, 0.8):
        out = kernels.sandwich_audit(alpha, np.linspace(0.5, 1.0, 30), 3000)
        assert out[:, 0].max() <= 1e-12
        assert out[:, 1].max() <= 1e-12


def _orbit_z(alpha, z, r):
    return inverse_orbit(alpha, z, r)[r]


@pytest.mark.parametrize("alpha,z,r", [(0.5, 0.8, 25), (0.3, 0.6, 40), (0.75, 0.95, 15)])
def test_alpha_derivatives_match_central_differences(alpha, z, r):
    # central difference with halving: error must drop ~4x (O(eps^2))
    for field, get in [
        ("da_z", lambda s: s.z),
        ("da_dz", lambda s: s.dz),
        ("da_d2z", lambda s: s.d2z),
    ]:
        errs = []
        for eps in (1e-4, 5e-5):
            sp = _orbit_z(alpha + eps, z, r)
            sm = _orbit_z(alpha - eps, z, r)
            fd = (get(sp) - get(sm)) / (2 * eps)
            errs.append(abs(getattr(_orbit_z(alpha, z, r), field) - fd))
        scale = abs(getattr(_orbit_z(alpha, z, r), field)) + 1e-12
        assert errs[0] <= 1e-6 * scale + 1e-12
        # the second error should be about 4x smaller unless already at roundoff
        if errs[0] > 1e-13 * scale:
            assert errs[1] <= 0.6 * errs[0]


def test_branch_points_basics():
    bp = branch_points(0.5, 12)
    assert bp.xs[0] == 1.0
    assert bp.xs[1] == 0.5
    assert bp.ys[0] == 1.0
    assert bp.ys[1] == 0.75
    assert np.all(np.diff(bp.xs) < 0)
    assert np.all(np.diff(bp.ys) < 0)
    for k in range(1, 12):
        assert map_T(0.5, bp.xs[k + 1]) == pytest.approx(bp.xs[k], abs=1e-12)


def test_branch_point_x2_against_bisection_oracle():
    # independent bisection for w (1 + sqrt(2) sqrt(w)) = 1/2
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * (1.0 + math.sqrt(2.0) * math.sqrt(mid)) < 0.5:
            lo = mid
        else:
            hi = mid
    x2 = branch_points(0.5, 2).xs[2]
    assert x2 == pytest.approx(0.5 * (lo + hi), abs=1e-12)
    assert x2 == pytest.approx(0.2849, abs=5e-5)


def test_return_time_first_branch():
    for alpha in (0.3, 0.6):
        assert return_time(alpha, 0.76) == 1
        assert return_time(alpha, 0.9999) == 1


def test_return_time_matches_partition_and_iteration():
    alpha = 0.45
    bp = branch_points(alpha, 25)
    rng = np.random.default_rng(5)
    for r in range(0, 20):
        x = rng.uniform(bp.ys[r + 1], bp.ys[r])
        assert return_time(alpha, x) == r + 1
        # direct iteration oracle
        y = x
        k = 0
        while True:
            y = map_T(alpha, y)
            k += 1
            if y >= 0.5:
                break
        assert k == r + 1


def test_logg_values():
    assert logg(1) == 1.0
    assert logg(2) == 1.0
    assert logg(10) == pytest.approx(2.302585093, abs=1e-9)
    assert logg(0) == 1.0
