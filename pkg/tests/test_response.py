from __future__ import annotations

import numpy as np
import pytest

from pmresp.errors import PlanError, PreconditionError
from pmresp.response import (ResponseResult, expectation_kac, make_c1_observable,
                             obs_constant, obs_coordinate, obs_cos2pi,
                             obs_power_singular, obs_poly, parse_observable,
                             response_density, response_kac, sweep)
from pmresp.transfer import plan_truncation


def test_parse_observable_specs():
    assert parse_observable("one").name == "one"
    assert parse_observable("x").name == "x"
    assert parse_observable("x2").name == "x2"
    assert parse_observable("cos2pi").name == "cos2pi"
    assert parse_observable("poly:1,2,3").eval(np.array([2.0]))[0] == 17.0
    phi = parse_observable("xpow:-0.1:12")
    assert phi.kind == "Lq_singular" and phi.q == 12.0
    with pytest.raises(PreconditionError):
        parse_observable("bogus")


def test_constant_observable_exact(pair_bank, norm_bank):
    alpha = 0.5
    pair = pair_bank(alpha)
    rk = response_kac(alpha, obs_constant(1.0), pair)
    assert rk.expectation == pytest.approx(1.0, abs=1e-12)
    assert abs(rk.derivative) <= 1e-8
    rd = response_density(alpha, obs_constant(1.0), pair, norm_bank(alpha))
    assert rd.expectation == pytest.approx(1.0, abs=1e-9)
    assert abs(rd.derivative) <= 1e-7


def test_route_agreement(pair_bank, norm_bank):
    for alpha in (0.25, 0.5):
        pair = pair_bank(alpha)
        norm = norm_bank(alpha)
        for phi in (obs_coordinate(), obs_cos2pi()):
            rk = response_kac(alpha, phi, pair)
            rd = response_density(alpha, phi, pair, norm)
            assert abs(rk.expectation - rd.expectation) <= 1e-8
            assert abs(rk.derivative - rd.derivative) <= 1e-5 * (1 + abs(rk.derivative))


def test_expectation_kac_equals_response(pair_bank):
    alpha = 0.5
    pair = pair_bank(alpha)
    phi = obs_coordinate()
    assert expectation_kac(alpha, phi, pair) == pytest.approx(
        response_kac(alpha, phi, pair).expectation, abs=1e-12)


def test_scale_equivariance(pair_bank):
    alpha = 0.4
    pair = pair_bank(alpha)
    base = response_kac(alpha, obs_poly([0.0, 1.0]), pair)
    scaled = response_kac(alpha, obs_poly([0.0, 3.0]), pair)
    assert scaled.expectation == pytest.approx(3.0 * base.expectation, rel=1e-12)
    assert scaled.derivative == pytest.approx(3.0 * base.derivative, rel=1e-10)


def test_shift_invariance(pair_bank):
    alpha = 0.4
    pair = pair_bank(alpha)
    base = response_kac(alpha, obs_poly([0.0, 1.0]), pair)
    shifted = response_kac(alpha, obs_poly([2.5, 1.0]), pair)
    assert shifted.derivative == pytest.approx(base.derivative, rel=1e-10, abs=1e-12)
    assert shifted.expectation == pytest.approx(base.expectation + 2.5, rel=1e-12)


def test_plan_weight_validation(pair_bank):
    pair = pair_bank(0.5)
    bad = plan_truncation(0.5, 1e-10, 0.0)
    with pytest.raises(PlanError):
        response_kac(0.5, obs_coordinate(), pair, plan=bad)


def test_kac_route_rejects_singular(pair_bank):
    with pytest.raises(PreconditionError):
        response_kac(0.5, obs_power_singular(0.1), pair_bank(0.5))


def test_lq_q_condition(pair_bank, norm_bank):
    alpha = 0.5
    phi = obs_power_singular(0.1, q=1.5)  # needs q > 2 at alpha = 0.5
    with pytest.raises(PreconditionError) as exc:
        response_density(alpha, phi, pair_bank(alpha), norm_bank(alpha))
    assert "q >" in str(exc.value)


def test_lq_density_route_runs(pair_bank, norm_bank):
    alpha = 0.5
    phi = obs_power_singular(0.1)
    rd = response_density(alpha, phi, pair_bank(alpha), norm_bank(alpha))
    assert isinstance(rd, ResponseResult)
    assert rd.expectation > 1.0  # E[x^-0.1] > 1 since x <= 1
    assert np.isfinite(rd.derivative)


def test_custom_observable_wrapper(pair_bank, norm_bank):
    alpha = 0.5
    custom = make_c1_observable(lambda x: float(np.cos(2 * np.pi * x)),
                                name="custom-cos")
    builtin = obs_cos2pi()
    rd_c = response_density(alpha, custom, pair_bank(alpha), norm_bank(alpha))
    rd_b = response_density(alpha, builtin, pair_bank(alpha), norm_bank(alpha))
    assert rd_c.expectation == pytest.approx(rd_b.expectation, abs=1e-6)
    assert rd_c.derivative == pytest.approx(rd_b.derivative, abs=1e-3)


def test_sweep_rows_and_secant_consistency():
    phi = obs_constant(1.0)
    rows = sweep([0.4, 0.45, 0.5], phi, jobs=1)
    assert [r["alpha"] for r in rows] == [0.4, 0.45, 0.5]
    for r in rows:
        assert "error" not in r
        assert r["expectation"] == pytest.approx(1.0, abs=1e-9)
        assert abs(r["derivative"]) <= 1e-7


def test_sweep_requires_increasing_grid():
    with pytest.raises(PreconditionError):
        sweep([0.5, 0.4], obs_constant(1.0))


def _max_secant_gap(rows):
    al = np.array([r["alpha"] for r in rows])
    ex = np.array([r["expectation"] for r in rows])
    dv = np.array([r["derivative"] for r in rows])
    secant = (ex[2:] - ex[:-2]) / (al[2:] - al[:-2])
    return float(np.max(np.abs(secant - dv[1:-1])))


def test_sweep_secant_refinement():
    # halving the grid spacing shrinks the secant-vs-derivative gap ~4x
    phi = obs_coordinate()
    coarse = sweep([0.30, 0.34, 0.38, 0.42], phi, jobs=1)
    fine = sweep([0.30, 0.32, 0.34, 0.36, 0.38, 0.40, 0.42], phi, jobs=1)
    assert all("error" not in r for r in coarse + fine)
    g_coarse = _max_secant_gap(coarse)
    g_fine = _max_secant_gap(fine)
    assert g_coarse <= 2.0 * 0.04**2  # O(spacing^2) scale
    assert g_fine <= 0.45 * g_coarse  # ~4x reduction

