"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest -v -s tests/test_acceptance.py` to see the per-criterion
lines; every tolerance is stated inline.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import get_norm, get_pair

from pmresp import kernels
from pmresp.density import kac_branch_sum, rho_profile
from pmresp.response import (obs_coordinate, obs_cos2pi, obs_power_singular,
                             response_density, response_kac)
from pmresp.solver import contraction_probe, contraction_rate, solve_h
from pmresp.space import constant, integrate_m, sample
from pmresp.transfer import apply_P, apply_Q, build_operators, plan_truncation
from pmresp.verify import (audit_assumptions, distortion_audit, mc_full_map,
                           mc_induced_map)

ALPHAS_MAIN = (0.2, 0.5, 0.8)
ALPHAS_RESPONSE = (0.25, 0.5, 0.75)


def report(n: int, ok: bool, detail: str):
    print(f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_fixed_point_residual():
    details = []
    ok = True
    for alpha in ALPHAS_MAIN:
        t0 = time.time()
        plan = plan_truncation(alpha, 1e-12, 0.0)
        bundle = build_operators(alpha, plan, 128)
        pair = solve_h(alpha, tol=1e-11, bundle=bundle)
        res = float(np.max(np.abs(bundle.P_mat @ pair.h.values - pair.h.values)))
        dt = time.time() - t0
        ok = ok and res <= 1e-10 and dt < 30.0
        details.append(f"a={alpha}: |Ph-h|={res:.2e} ({dt:.1f}s)")
    report(1, ok, "; ".join(details) + "  [tol 1e-10, 30s each]")


def test_criterion_2_Q_zero_mean():
    worst = 0.0
    for alpha in ALPHAS_MAIN:
        pair = get_pair(alpha)
        q = apply_Q(alpha, pair.h)
        worst = max(worst, abs(integrate_m(q)))
    report(2, worst <= 1e-9, f"max |int Q h dm| = {worst:.2e}  [tol 1e-9]")


def test_criterion_3_neumann_series_vs_fd():
    alpha = 0.5
    pair = get_pair(alpha)
    errs = {}
    for eps in (1e-2, 1e-3):
        hp = get_pair(alpha + eps).h.values
        hm = get_pair(alpha - eps).h.values
        errs[eps] = float(np.max(np.abs((hp - hm) / (2 * eps) - pair.dh.values)))
    ratio = errs[1e-2] / errs[1e-3]
    bound = 1e-4 * float(np.max(np.abs(pair.dh.values)))
    ok = ratio >= 30.0 and errs[1e-3] <= bound
    report(3, ok, f"err(1e-2)/err(1e-3) = {ratio:.1f} (~100 expected); "
                  f"err(1e-3) = {errs[1e-3]:.2e} <= {bound:.2e}")


def _response_with_fd(alpha: float, phi):
    pair = get_pair(alpha)
    norm = get_norm(alpha)
    rk = response_kac(alpha, phi, pair)
    rd = response_density(alpha, phi, pair, norm)
    eps = 1e-3
    es = {}
    for s in (+1, -1):
        a2 = alpha + s * eps
        es[s] = response_density(a2, phi, get_pair(a2), get_norm(a2)).expectation
    fd = (es[1] - es[-1]) / (2 * eps)
    return rk, rd, fd


def test_criterion_4_and_5_linear_response_vs_fd():
    details = []
    ok_all = True
    ok_075 = True
    for alpha in ALPHAS_RESPONSE:
        for phi in (obs_coordinate(), obs_cos2pi()):
            rk, rd, fd = _response_with_fd(alpha, phi)
            tol_fd = 1e-4 * (1.0 + abs(rk.derivative))
            tol_gap = 1e-5 * (1.0 + abs(rk.derivative))
            e_fd = max(abs(rk.derivative - fd), abs(rd.derivative - fd))
            e_gap = abs(rk.derivative - rd.derivative)
            ok = e_fd <= tol_fd and e_gap <= tol_gap
            ok_all = ok_all and ok
            if alpha == 0.75:
                ok_075 = ok_075 and ok
            details.append(
                f"a={alpha} {phi.name}: |d-FD|={e_fd:.1e}<={tol_fd:.1e}, "
                f"routes|{e_gap:.1e}|<={tol_gap:.1e}"
            )
    report(4, ok_all, "; ".join(details))
    report(5, ok_075, "criterion 4 at alpha = 0.75 (nonsummable correlations)")


def test_criterion_6_inverse_orbit_sandwich():
    ok = True
    details = []
    zs = np.linspace(0.5, 1.0, 1000)
    for alpha in ALPHAS_MAIN:
        out = kernels.sandwich_audit(alpha, zs, 10**4)
        viol = float(max(out[:, 0].max(), out[:, 1].max()))
        signs = out[:, 2].min() > 0.0 and out[:, 4].max() <= 0.0 and out[:, 5].min() >= 0.0
        ok = ok and viol <= 1e-12 and signs
        details.append(f"a={alpha}: viol={viol:.1e} signs={'ok' if signs else 'BAD'}")
    report(6, ok, "; ".join(details) + "  [slack 1e-12, 10^3 z-points, r<=10^4]")


def test_criterion_7_density_bounds():
    ok = True
    details = []
    for alpha in (0.3, 0.6):
        pair = get_pair(alpha)
        norm = get_norm(alpha)
        sups = {}
        for z_lo in (1e-6, 1e-8):
            zs = np.geomspace(z_lo, 1.0, 160)
            rho, da_rho = rho_profile(alpha, pair, norm, zs)
            k1 = float(np.max(rho * zs**alpha))
            k2 = float(np.max(np.abs(da_rho) * zs**alpha / (1.0 - np.log(zs))))
            sups[z_lo] = (k1, k2)
        r1 = sups[1e-8][0] / sups[1e-6][0]
        r2 = sups[1e-8][1] / sups[1e-6][1]
        good = (np.isfinite(sups[1e-8]).all() and 0.5 < r1 < 2.0 and 0.5 < r2 < 2.0)
        ok = ok and good
        details.append(f"a={alpha}: sup z^a rho = {sups[1e-8][0]:.3f} (x{r1:.3f}), "
                       f"sup z^a|da_rho|/(1-log z) = {sups[1e-8][1]:.3f} (x{r2:.3f})")
    report(7, ok, "; ".join(details) + "  [stability < 2x under refinement]")


def test_criterion_8_kac_consistency():
    alpha = 0.3
    pair = get_pair(alpha)
    norm = get_norm(alpha)
    bs, _, _ = kac_branch_sum(alpha, pair)
    t0 = time.time()
    rep = mc_induced_map(alpha, n_returns=10**7, seed=20160315)
    dt = time.time() - t0
    z = abs(rep.estimate - norm.value) / rep.batch_std_error
    ok = (norm.value >= 1.0 and abs(norm.value - bs) <= 1e-6 and z <= 4.0 and dt < 120.0)
    report(8, ok, f"kac={norm.value:.8f} >= 1; |kac - branch sum|={abs(norm.value-bs):.1e} "
                  f"<= 1e-6; MC tau={rep.estimate:.6f}+-{rep.batch_std_error:.1e} "
                  f"(z={z:.2f} <= 4, {dt:.0f}s < 120s)")


def test_criterion_9_full_map_birkhoff():
    alpha = 0.25
    phi = obs_coordinate()
    rep = mc_full_map(alpha, phi, n=10**7, seed=987654321)
    expect = response_density(alpha, phi, get_pair(alpha), get_norm(alpha)).expectation
    z = abs(rep.estimate - expect) / rep.batch_std_error
    report(9, z <= 4.0, f"MC={rep.estimate:.7f}+-{rep.batch_std_error:.1e} vs "
                        f"E={expect:.7f} (z={z:.2f} <= 4, n=10^7)")


def test_criterion_10_audit_suite():
    const, checks = audit_assumptions(alpha_range=ALPHAS_MAIN, r_max=10**4,
                                      phi=obs_coordinate())
    audit_ok = all(c["pass"] for c in checks)
    rates = {}
    for alpha in ALPHAS_MAIN:
        probe = contraction_probe(alpha, sample(lambda z: z - 0.75, 128), 30)
        rates[alpha] = contraction_rate(probe)
    rate_ok = all(0.0 < r < 0.999 for r in rates.values())
    dist_ok = True
    for alpha in ALPHAS_MAIN:
        dist_ok = dist_ok and all(c["pass"] for c in distortion_audit(alpha, const))
    ok = audit_ok and rate_ok and dist_ok
    rates_s = ", ".join(f"a={a}: {r:.3f}" for a, r in rates.items())
    report(10, ok, f"A1-A7 {'pass' if audit_ok else 'FAIL'}; rates {rates_s} < 0.999; "
                   f"distortion {'pass' if dist_ok else 'FAIL'}")


def test_criterion_11_lq_observable():
    alpha = 0.5
    phi = obs_power_singular(0.1)
    rd = response_density(alpha, phi, get_pair(alpha), get_norm(alpha))
    eps = 1e-3
    es = {}
    for s in (+1, -1):
        a2 = alpha + s * eps
        es[s] = response_density(a2, phi, get_pair(a2), get_norm(a2)).expectation
    fd = (es[1] - es[-1]) / (2 * eps)
    rel = abs(rd.derivative - fd) / abs(fd)
    report(11, rel <= 1e-4, f"x^-0.1 at a=0.5: d={rd.derivative:.8f} vs FD={fd:.8f} "
                            f"(rel {rel:.1e} <= 1e-4)")
