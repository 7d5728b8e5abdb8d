"""Observable averages against nu_alpha and their linear-response derivative.

Two independent routes:

  * Kac quotient: int phi d nu = int Phi d mu / int tau d mu with branch-wise
    numerator series and the Abel-resummed return-time denominator; the
    derivative differentiates each branch term (dh-, observable- and
    weight-parts) and combines by the quotient rule.  The observable is
    shifted by phi(0) first: the response is shift invariant, and the
    shifted series sheds the nonsummable (r+1) phi(0) component exactly.
  * Density integral: int phi rho dz and int phi d_alpha rho dz on the
    graded mesh of the Kac normalizer, singular head in closed form.

C1 observables go through both; Lq-singular observables only through the
density route.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels, tails
from .density import KacNormalizer, kac_branch_sum
from .errors import PlanError, PreconditionError
from .orbit import as_alpha
from .solver import DensityPair, solve_pair
from .transfer import TruncationPlan, get_bundle, plan_truncation

R_SERIES_CAP = 2**17     # doubled at alpha >= 0.6 where closures carry more mass


@dataclass(frozen=True, eq=False)
class Observable:
    """Observable on (0, 1] with the derivative/Taylor data the routes need.

    C1 observables carry a derivative and Taylor rows at 0 and 1/2 (value,
    first, half-second derivative).  Lq_singular observables are monomially
    singular, phi = z^-s psi(z) with psi smooth, and carry the psi Taylor
    row used by the closed-form singular head.
    """

    kind: str
    eval: Callable
    deriv: Callable | None = None
    q: float | None = None
    c1_norm: float | None = None
    name: str = "custom"
    taylor0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    taylor0_deriv: np.ndarray = field(default_factory=lambda: np.zeros(3))
    taylor_half: np.ndarray = field(default_factory=lambda: np.zeros(3))
    taylor_half_deriv: np.ndarray = field(default_factory=lambda: np.zeros(3))
    singular_power: float = 0.0
    smooth_taylor0: np.ndarray | None = None


def obs_constant(c: float = 1.0) -> Observable:
    cf = float(c)
    return Observable(
        kind="C1",
        eval=lambda x: np.full_like(np.asarray(x, dtype=float), cf),
        deriv=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        c1_norm=abs(cf), name="one" if cf == 1.0 else f"const:{cf}",
        taylor0=np.array([cf, 0.0, 0.0]),
        taylor_half=np.array([cf, 0.0, 0.0]),
    )


def obs_poly(coeffs) -> Observable:
    """Polynomial observable sum c_k x^k with exact Taylor data."""
    c = np.asarray(coeffs, dtype=float)
    p = np.polynomial.Polynomial(c)
    dp = p.deriv()
    d2p = dp.deriv()
    name = "poly:" + ",".join(f"{v:g}" for v in c)
    if np.array_equal(c, [0.0, 1.0]):
        name = "x"
    elif np.array_equal(c, [0.0, 0.0, 1.0]):
        name = "x2"
    return Observable(
        kind="C1", eval=p, deriv=dp,
        c1_norm=float(np.sum(np.abs(c)) + np.sum(np.abs(dp.coef))),
        name=name,
        taylor0=np.array([p(0.0), dp(0.0), 0.5 * d2p(0.0)]),
        taylor0_deriv=np.array([dp(0.0), d2p(0.0), 0.5 * d2p.deriv()(0.0)]),
        taylor_half=np.array([p(0.5), dp(0.5), 0.5 * d2p(0.5)]),
        taylor_half_deriv=np.array([dp(0.5), d2p(0.5), 0.5 * d2p.deriv()(0.5)]),
    )


def obs_coordinate() -> Observable:
    return obs_poly([0.0, 1.0])


def obs_cos2pi(k: float = 1.0) -> Observable:
    w = 2.0 * np.pi * k

    def f(x):
        return np.cos(w * np.asarray(x, dtype=float))

    def df(x):
        return -w * np.sin(w * np.asarray(x, dtype=float))

    def taylor(x0):
        return np.array([np.cos(w * x0), -w * np.sin(w * x0), -0.5 * w**2 * np.cos(w * x0)])

    def taylor_d(x0):
        return np.array([-w * np.sin(w * x0), -w**2 * np.cos(w * x0), 0.5 * w**3 * np.sin(w * x0)])

    return Observable(
        kind="C1", eval=f, deriv=df, c1_norm=max(1.0, w),
        name="cos2pi" if k == 1.0 else f"cos2pi:{k:g}",
        taylor0=taylor(0.0), taylor0_deriv=taylor_d(0.0),
        taylor_half=taylor(0.5), taylor_half_deriv=taylor_d(0.5),
    )


def obs_power_singular(s: float, q: float | None = None) -> Observable:
    """phi(x) = x^-s with 0 < s < 1; integrable-singularity (L^q) kind."""
    if not 0.0 < s < 1.0:
        raise PreconditionError("singular power must lie in (0, 1)")
    if q is None:
        q = 0.5 * (1.0 / s + 1.0)  # any q < 1/s; midpoint default

    def f(x):
        return np.asarray(x, dtype=float) ** (-s)

    return Observable(
        kind="Lq_singular", eval=f, deriv=None, q=q,
        name=f"xpow:{-s:g}", singular_power=s,
        smooth_taylor0=np.array([1.0, 0.0, 0.0]),
    )


def make_c1_observable(fn, deriv=None, name="custom", fd_step=1e-5) -> Observable:
    """Wrap a plain callable, filling Taylor data by finite differences."""
    f = np.vectorize(fn, otypes=[float])
    if deriv is not None:
        df = np.vectorize(deriv, otypes=[float])
    else:
        def df(x):
            return (f(np.asarray(x) + fd_step) - f(np.asarray(x) - fd_step)) / (2 * fd_step)

    def taylor(x0):
        h = fd_step
        base = max(x0, 2 * h)
        d1 = float(df(base))
        d2 = float((df(base + h) - df(base - h)) / (2 * h))
        return np.array([float(f(base)), d1, 0.5 * d2])

    def taylor_d(x0):
        h = fd_step
        base = max(x0, 2 * h)
        d1 = float((df(base + h) - df(base - h)) / (2 * h))
        return np.array([float(df(base)), d1, 0.0])

    return Observable(
        kind="C1", eval=f, deriv=df, name=name,
        taylor0=taylor(0.0), taylor0_deriv=taylor_d(0.0),
        taylor_half=taylor(0.5), taylor_half_deriv=taylor_d(0.5),
    )


BUILTIN_OBSERVABLES = {
    "one": obs_constant,
    "x": obs_coordinate,
    "x2": lambda: obs_poly([0.0, 0.0, 1.0]),
    "cos2pi": obs_cos2pi,
}


def parse_observable(spec: str) -> Observable:
    """Builtin observable specs: one, x, x2, cos2pi[:k], poly:c0,c1,.., xpow:-s[:q]."""
    head, _, rest = spec.partition(":")
    if head == "poly":
        return obs_poly([float(v) for v in rest.split(",")])
    if head == "xpow":
        parts = rest.split(":")
        s = -float(parts[0])
        q = float(parts[1]) if len(parts) > 1 else None
        return obs_power_singular(s, q)
    if head == "cos2pi":
        return obs_cos2pi(float(rest)) if rest else obs_cos2pi()
    if head in BUILTIN_OBSERVABLES and not rest:
        return BUILTIN_OBSERVABLES[head]()
    raise PreconditionError(f"unknown observable spec {spec!r}")


@dataclass(frozen=True, eq=False)
class ResponseResult:
    """Expectation, its alpha-derivative, and route diagnostics."""

    alpha: float
    observable: str
    expectation: float
    derivative: float
    route: str
    diagnostics: dict = field(default_factory=dict)


def _kac_series(alpha, phi: Observable, pair: DensityPair, r_total: int, n: int):
    """Shifted numerator series (value, derivative) with tail closures."""
    a = as_alpha(alpha)
    bundle = get_bundle(a, None, n)
    grid = bundle.grid
    Z = bundle.Z
    phi0 = float(phi.eval(np.array([0.0]))[0]) if phi.kind == "C1" else None
    if phi0 is None:
        raise PreconditionError("Kac route requires a C1 observable")
    PHI = phi.eval(Z) - phi0
    PHIP = phi.deriv(Z)
    INV = 0.5 * (Z + 1.0)
    PHI_INV = phi.eval(INV) - phi0
    PHIP_INV = phi.deriv(INV)
    from .density import _taylor_coeffs

    tc, hp, dh = _taylor_coeffs(pair)
    pt = np.array([0.0, phi.taylor0[1], phi.taylor0[2]])
    ptd = phi.taylor0_deriv.copy()
    ph = phi.taylor_half - np.array([phi0, 0.0, 0.0])
    phd = phi.taylor_half_deriv.copy()
    r_store = bundle.r_store
    fit_r = tails.fit_window_depths(r_total, r_store)
    num_i, dnum_i, csamp_i, dcsamp_i = kernels.response_series(
        a, Z, bundle.DZ, bundle.AZ, bundle.RA1,
        PHI, PHIP, PHI_INV, PHIP_INV,
        grid.nodes, grid.bary_w, pair.h.values, hp, dh, grid.quad_weights_m,
        tc, pt, ptd, ph, phd, r_total, fit_r,
    )
    num = float(num_i.sum())
    dnum = float(dnum_i.sum())
    diag = {}
    if len(fit_r) and r_total > r_store:
        B = a * 2.0**a
        shift = float(np.mean(grid.nodes ** (-a))) / B
        beta = (a + 1.0) / a
        eta = 1.0 / a - 1.0 if a > 0.5 else None
        tn, dn_ = tails.fit_tail(fit_r, csamp_i.sum(axis=0), beta, r_total,
                                 shift=shift, log_deg=3, extra_offset=eta)
        tdn, ddn_ = tails.fit_tail(fit_r, dcsamp_i.sum(axis=0), beta, r_total,
                                   shift=shift, log_deg=3, extra_offset=eta)
        num += tn
        dnum += tdn
        diag["series_tail"] = abs(tn) + abs(tdn)
        diag["series_tail_consistency"] = dn_ + ddn_
    return num, dnum, phi0, diag


def _check_plan(alpha, plan: TruncationPlan | None) -> TruncationPlan:
    a = as_alpha(alpha)
    if plan is None:
        plan = plan_truncation(a, 1e-10, 1.0)
    if plan.weight_exponent < 1.0:
        raise PlanError(
            "response branch sums carry return-time weight; "
            "the plan must use weight_exponent >= 1"
        )
    return plan


def expectation_kac(alpha, phi: Observable, pair: DensityPair,
                    plan: TruncationPlan | None = None, n: int = 128) -> float:
    """int phi d nu_alpha by the Kac quotient."""
    a = as_alpha(alpha)
    plan = _check_plan(a, plan)
    r_total = min(plan.R, R_SERIES_CAP * (2 if a >= 0.6 else 1))
    num, _dnum, phi0, _diag = _kac_series(a, phi, pair, r_total, n)
    D, _Dp, _ = kac_branch_sum(a, pair)
    return num / D + phi0


def response_kac(alpha, phi: Observable, pair: DensityPair,
                 plan: TruncationPlan | None = None, n: int = 128) -> ResponseResult:
    """Expectation and d/d_alpha by branch-wise differentiation + Kac quotient."""
    a = as_alpha(alpha)
    plan = _check_plan(a, plan)
    if pair.dh is None:
        raise PreconditionError("response_kac requires dh (run solve_dh first)")
    r_total = min(plan.R, R_SERIES_CAP * (2 if a >= 0.6 else 1))
    num, dnum, phi0, diag = _kac_series(a, phi, pair, r_total, n)
    D, Dp, kdiag = kac_branch_sum(a, pair)
    expectation = num / D + phi0
    derivative = (dnum * D - num * Dp) / D**2
    diag.update({"denominator": D, "denominator_derivative": Dp,
                 "kac_closure_consistency": kdiag["closure_consistency"]})
    return ResponseResult(alpha=a, observable=phi.name, expectation=expectation,
                          derivative=derivative, route="kac_quotient", diagnostics=diag)


def response_density(alpha, phi: Observable, pair: DensityPair,
                     norm: KacNormalizer) -> ResponseResult:
    """Expectation and derivative by integrating phi against rho and da_rho."""
    a = as_alpha(alpha)
    if phi.kind == "Lq_singular":
        q_required = 1.0 / (1.0 - a)
        if phi.q is None or phi.q <= q_required:
            raise PreconditionError(
                f"Lq observable needs q > {q_required:.6g} at alpha={a}, got {phi.q}"
            )
        if phi.singular_power >= (1.0 - a):
            raise PreconditionError("singular power too strong for this alpha")
    table = norm.table
    if table is None:
        raise PreconditionError("KacNormalizer carries no density table; use kac_normalizer()")
    pv = phi.eval(table.nodes)
    Ig = float(table.weights @ (pv * table.g))
    Idag = float(table.weights @ (pv * table.da_g))
    eps = table.z_floor
    if phi.kind == "Lq_singular":
        coeffs = phi.smooth_taylor0
        s = phi.singular_power
    else:
        coeffs = phi.taylor0
        s = 0.0
    for j, cj in enumerate(coeffs):
        if cj != 0.0:
            Ig += cj * table.model.integral_g(eps, monomial=j - s)
            Idag += cj * table.model.integral_da_g(eps, monomial=j - s)
    V, dV = norm.value, norm.da_value
    expectation = Ig / V
    derivative = Idag / V - Ig * dV / V**2
    diag = dict(table.diagnostics)
    diag["head_mass"] = abs(coeffs[0]) * abs(table.model.integral_g(eps, monomial=-s))
    return ResponseResult(alpha=a, observable=phi.name, expectation=expectation,
                          derivative=derivative, route="density_integral",
                          diagnostics=diag)


def sweep(alphas, phi: Observable, n: int = 128, tol: float = 1e-11,
          series_tol: float = 1e-12, jobs: int | None = None) -> list[dict]:
    """Per-alpha expectation/derivative table over an increasing alpha grid.

    Each point runs the full pipeline (solve, normalize, both routes when
    the observable allows).  Failures are recorded per point; the sweep
    continues.
    """
    alphas = [as_alpha(al) for al in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise PreconditionError("alpha grid must be strictly increasing")

    def one(a: float) -> dict:
        try:
            pair = solve_pair(a, tol=tol, series_tol=series_tol, n=n)
            from .density import kac_normalizer

            norm = kac_normalizer(a, pair)
            rd = response_density(a, phi, pair, norm)
            row = {
                "alpha": a,
                "expectation": rd.expectation,
                "derivative": rd.derivative,
                "residual": pair.residual,
                "tail": rd.diagnostics.get("tail_estimate", 0.0),
            }
            if phi.kind == "C1":
                rk = response_kac(a, phi, pair, n=n)
                row["expectation"] = rk.expectation
                row["derivative"] = rk.derivative
                row["route_gap"] = abs(rk.derivative - rd.derivative)
                row["tail"] = rk.diagnostics.get("series_tail", row["tail"])
            return row
        except Exception as exc:  # per-point failures must not kill the sweep
            return {"alpha": a, "error": f"{type(exc).__name__}: {exc}"}

    workers = jobs or os.cpu_count() or 1
    if workers == 1 or len(alphas) == 1:
        return [one(a) for a in alphas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, alphas))
