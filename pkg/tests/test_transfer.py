from __future__ import annotations

import numpy as np
import pytest

from pmresp.errors import PlanError
from pmresp.orbit import orbit_arrays
from pmresp.solver import contraction_probe, contraction_rate
from pmresp.space import constant, integrate_m, sample
from pmresp.transfer import (TruncationPlan, apply_P, apply_Q, build_operators,
                             get_bundle, plan_truncation)


def test_plan_finite_and_monotone():
    plan = plan_truncation(0.5, 1e-10, 0.0)
    assert plan.R >= 4096
    assert plan.tail_bound <= 1e-10
    # tail_bound decreasing in R
    from pmresp.transfer import FIT_MARGIN, raw_tail_envelope

    bounds = [raw_tail_envelope(0.5, R, 0.0) * FIT_MARGIN for R in (2**13, 2**15, 2**17)]
    assert bounds[0] > bounds[1] > bounds[2]


def test_plan_alpha_ordering():
    # smaller alpha needs a smaller cutoff at equal tolerance
    r_small = plan_truncation(0.25, 1e-10, 0.0).R
    r_large = plan_truncation(0.75, 1e-10, 0.0).R
    assert r_small <= r_large


def test_plan_divergence_guard():
    with pytest.raises(PlanError):
        plan_truncation(0.9, 1e-8, 1.2)  # 1.2 >= 1/0.9


def test_empirical_tail_halving():
    # doubling R cuts the raw weight-series tail by about 2^(1/alpha)
    alpha = 0.5
    Z, DZ, *_ = orbit_arrays(alpha, np.array([1.0]), 8192)
    w = 0.5 * DZ[:, 0]
    tail_R = w[1024:].sum()
    tail_2R = w[2048:].sum()
    ratio = tail_R / tail_2R
    assert ratio >= 0.97 * 2.0 ** (1.0 / alpha)
    assert tail_2R < tail_R


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_apply_P_mean_and_positivity(alpha):
    b = get_bundle(alpha)
    h = sample(lambda z: 1.0 + 0.3 * np.sin(5 * z), 128)
    ph = apply_P(alpha, h, bundle=b)
    assert abs(integrate_m(ph) - integrate_m(h)) <= 1e-9
    assert ph.values.min() > 0.0


def test_apply_P_agrees_with_refined_plan():
    # apply at the default plan vs a 4x deeper cutoff, at the endpoint z=1
    alpha = 0.5
    plan = plan_truncation(alpha, 1e-12, 0.0)
    fine = TruncationPlan(R=4 * plan.R, tail_bound=plan.tail_bound / 8,
                          alpha=alpha, tol=plan.tol, weight_exponent=0.0)
    b1 = build_operators(alpha, plan)
    b2 = build_operators(alpha, fine)
    one = constant(1.0, 128)
    v1 = apply_P(alpha, one, bundle=b1).values[-1]
    v2 = apply_P(alpha, one, bundle=b2).values[-1]
    assert abs(v1 - v2) <= 1e-9


def test_apply_Q_zero_mean_and_linearity():
    alpha = 0.6
    b = get_bundle(alpha)
    f = sample(lambda z: np.exp(z), 128)
    g = sample(lambda z: np.cos(3 * z), 128)
    qf = apply_Q(alpha, f, bundle=b)
    assert abs(integrate_m(qf)) <= 1e-9
    zero = apply_Q(alpha, f.with_values(np.zeros(128)), bundle=b)
    assert np.max(np.abs(zero.values)) == 0.0
    lin = apply_Q(alpha, f.with_values(2.0 * f.values + 3.0 * g.values), bundle=b)
    ref = 2.0 * qf.values + 3.0 * apply_Q(alpha, g, bundle=b).values
    assert np.max(np.abs(lin.values - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_apply_P_linearity():
    alpha = 0.4
    b = get_bundle(alpha)
    f = sample(lambda z: np.exp(z), 128)
    g = sample(lambda z: z**3, 128)
    lin = apply_P(alpha, f.with_values(1.5 * f.values - 0.5 * g.values), bundle=b)
    ref = 1.5 * apply_P(alpha, f, bundle=b).values - 0.5 * apply_P(alpha, g, bundle=b).values
    assert np.max(np.abs(lin.values - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_Q_matches_alpha_derivative_of_P():
    alpha = 0.5
    h = sample(lambda z: 1.0 + 0.2 * np.cos(4 * z), 128)
    q = apply_Q(alpha, h).values
    errs = []
    for eps in (1e-3, 1e-4):
        bp = get_bundle(alpha + eps)
        bm = get_bundle(alpha - eps)
        fd = (bp.P_mat @ h.values - bm.P_mat @ h.values) / (2 * eps)
        errs.append(np.max(np.abs(q - fd)))
    assert errs[0] <= 1e-7
    assert errs[1] <= errs[0] / 20.0  # O(eps^2)


def test_contraction_probe_geometric():
    for alpha in (0.2, 0.5, 0.8):
        f = sample(lambda z: z - 0.75, 128)
        probe = contraction_probe(alpha, f, 30)
        assert probe[0] > probe[5] > probe[15]
        rate = contraction_rate(probe)
        assert 0.0 < rate < 0.999


def test_plan_mismatch_rejected():
    plan = plan_truncation(0.3, 1e-10, 0.0)
    with pytest.raises(PlanError):
        build_operators(0.4, plan)
