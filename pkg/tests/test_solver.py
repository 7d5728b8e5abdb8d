from __future__ import annotations

import numpy as np
import pytest

from pmresp.errors import PreconditionError
from pmresp.solver import (contraction_probe, select_cone_constants, solve_dh,
                           solve_h)
from pmresp.space import constant, integrate_m, norms, require_positive_norms
from pmresp.transfer import apply_P
from pmresp.verify import mc_induced_map, mu_interval_mass


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_fixed_point_residual(alpha, pair_bank):
    pair = pair_bank(alpha)
    assert pair.residual <= 1e-11
    assert integrate_m(pair.h) == pytest.approx(1.0, abs=1e-12)
    assert pair.h.values.min() > 0.0
    ph = apply_P(alpha, pair.h)
    assert np.max(np.abs(ph.values - pair.h.values)) <= 2e-11


def test_solver_records_trace_on_failure():
    from pmresp.errors import ConvergenceError

    with pytest.raises(ConvergenceError) as exc:
        solve_h(0.5, tol=1e-13, max_iterations=3)
    assert exc.value.residuals is not None and len(exc.value.residuals) == 3


def test_density_is_regular(pair_bank):
    # h stays within the cone constants fitted from a generous K0
    pair = pair_bank(0.5)
    rep = require_positive_norms(pair.h)
    kl, kp, theta = select_cone_constants(16.0)
    assert rep.L <= kl
    assert rep.P <= kp
    # C2-norm bounded by K1 for the configured constants
    k1 = 1.0 + 2.0 / theta * np.exp(0.5 * kl) * max(1.0, kl, kp)
    assert rep.c2_norm <= k1


def test_dh_zero_mean_and_series_decay(pair_bank):
    pair = pair_bank(0.5)
    assert pair.dh is not None
    assert abs(integrate_m(pair.dh)) <= 1e-9
    assert pair.series_terms > 3
    assert pair.series_tail <= 1e-12


def test_solve_dh_requires_pair():
    pair = solve_h(0.3, tol=1e-10)
    out = solve_dh(0.3, pair)
    assert out.dh is not None


def test_contraction_requires_zero_mean():
    with pytest.raises(PreconditionError):
        contraction_probe(0.5, constant(1.0, 128), 5)


def test_mu_visit_frequency_against_mc(pair_bank):
    # mu([0.6, 0.7]) vs induced-map Monte Carlo within 4 standard errors
    alpha = 0.5
    pair = pair_bank(alpha)
    mass = mu_interval_mass(pair, 0.6, 0.7)
    rep = mc_induced_map(alpha, n_returns=2 * 10**5, seed=1234,
                         track_interval=(0.6, 0.7))
    z = abs(rep.extra["interval_freq"] - mass) / rep.extra["interval_freq_se"]
    assert z <= 4.0


def test_joint_continuity_in_alpha(pair_bank):
    # neighbouring alphas give node-wise close densities (C * spacing)
    h1 = pair_bank(0.5).h.values
    h2 = pair_bank(0.51).h.values
    assert np.max(np.abs(h1 - h2)) <= 2.0 * 0.01


def test_cone_constants_satisfy_klkp():
    for k0 in (1.0, 5.0, 20.0):
        kl, kp, theta = select_cone_constants(k0)
        damp = 1.0 - theta * np.exp(0.5 * kl)
        assert kl * damp > 0.5 * kl + k0
        assert kp * damp > 0.25 * kp + 1.5 * k0 * kl + k0
