"""Fixed point of P_alpha and its parameter derivative by the Neumann series.

h_alpha is the limit of P_alpha^n 1 (normalized against m); the derivative
is d_alpha h_alpha = sum_k P_alpha^k (Q_alpha h_alpha), summed term by term
with compensated summation until the term C1 norm drops below tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, PreconditionError
from .orbit import as_alpha
from .space import SampledFunction, integrate_m
from .transfer import OperatorBundle, TruncationPlan, get_bundle

MAX_ITERATIONS = 10**4


@dataclass(frozen=True, eq=False)
class DensityPair:
    """Induced invariant density h_alpha and (once filled) d_alpha h_alpha."""

    alpha: float
    h: SampledFunction
    dh: SampledFunction | None
    iterations: int
    residual: float
    series_terms: int = 0
    series_tail: float = 0.0


def _sup(v: np.ndarray) -> float:
    return float(np.max(np.abs(v)))


def solve_h(alpha, tol: float = 1e-11, plan: TruncationPlan | None = None,
            bundle: OperatorBundle | None = None, n: int = 128,
            max_iterations: int = MAX_ITERATIONS) -> DensityPair:
    """Iterate h <- P_alpha h from h == 1 until ||P h - h||_inf < tol.

    The iterate is renormalized to integrate_m(h) = 1 on return (the
    corrected operator preserves the mean exactly, so this is a no-op up
    to roundoff).
    """
    a = as_alpha(alpha)
    if tol <= 0.0:
        raise PreconditionError("tolerance must be positive")
    b = bundle if bundle is not None else get_bundle(a, plan, n)
    P = b.P_mat
    v = np.ones(b.grid.n)
    trace = []
    for it in range(1, max_iterations + 1):
        w = P @ v
        res = _sup(w - v)
        trace.append(res)
        v = w
        if res < tol:
            v = v / (b.grid.quad_weights_m @ v)
            h = SampledFunction(b.grid.nodes, v, b.grid)
            return DensityPair(alpha=a, h=h, dh=None, iterations=it, residual=res)
    raise ConvergenceError(
        f"fixed-point iteration did not reach {tol} in {max_iterations} steps",
        residuals=np.array(trace),
    )


def solve_dh(alpha, pair: DensityPair, tol: float = 1e-12,
             plan: TruncationPlan | None = None,
             bundle: OperatorBundle | None = None) -> DensityPair:
    """Fill dh = sum_k P_alpha^k (Q_alpha h_alpha), truncated at C1 norm < tol."""
    a = as_alpha(alpha)
    if pair.h is None:
        raise PreconditionError("solve_dh requires a solved pair")
    b = bundle if bundle is not None else get_bundle(a, plan, pair.h.grid.n)
    P = b.P_mat
    D1 = b.grid.diff1
    term = b.Q_mat @ pair.h.values
    total = np.zeros_like(term)
    comp = np.zeros_like(term)
    prev_norm = math.inf
    last_norm = 0.0
    stalls = 0
    k = 0
    while True:
        c1 = max(_sup(term), _sup(D1 @ term))
        if c1 < tol:
            last_norm = c1
            break
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if c1 >= 0.999 * prev_norm:
            stalls += 1
            if stalls > 50:
                raise ConvergenceError(
                    "Neumann series terms stopped decaying geometrically; "
                    "the collocation grid is too coarse for this alpha"
                )
        else:
            stalls = 0
        prev_norm = c1
        term = P @ term
        k += 1
        if k > 10**5:
            raise ConvergenceError("Neumann series exceeded the iteration cap")
    dh = pair.h.with_values(total)
    return DensityPair(
        alpha=a, h=pair.h, dh=dh,
        iterations=pair.iterations, residual=pair.residual,
        series_terms=k, series_tail=last_norm,
    )


def solve_pair(alpha, tol: float = 1e-11, series_tol: float = 1e-12,
               plan: TruncationPlan | None = None, n: int = 128,
               bundle: OperatorBundle | None = None) -> DensityPair:
    """solve_h followed by solve_dh on a shared bundle."""
    a = as_alpha(alpha)
    b = bundle if bundle is not None else get_bundle(a, plan, n)
    pair = solve_h(a, tol=tol, bundle=b)
    return solve_dh(a, pair, tol=series_tol, bundle=b)


def contraction_probe(alpha, f: SampledFunction, n_steps: int,
                      plan: TruncationPlan | None = None,
                      bundle: OperatorBundle | None = None) -> np.ndarray:
    """Sup norms of P_alpha^k f for k = 0..n_steps; f must have zero mean."""
    a = as_alpha(alpha)
    if abs(integrate_m(f)) > 1e-10:
        raise PreconditionError("contraction probe requires a mean-zero function")
    b = bundle if bundle is not None else get_bundle(a, plan, f.grid.n)
    out = np.empty(n_steps + 1)
    v = f.values.copy()
    for k in range(n_steps + 1):
        out[k] = _sup(v)
        if k < n_steps:
            v = b.P_mat @ v
    return out


def contraction_rate(probe: np.ndarray) -> float:
    """Geometric rate fitted to the decaying part of a contraction probe."""
    vals = probe[probe > 0.0]
    if len(vals) < 3:
        return 0.0
    k = np.arange(len(vals))
    slope = np.polyfit(k, np.log(vals), 1)[0]
    return float(np.exp(slope))


def select_cone_constants(k0: float, sigma: float = 0.5, interval_length: float = 0.5):
    """Constants (K_L, K_P, theta) strictly satisfying the coupling inequalities

        K_L (1 - theta e^{|I| K_L}) > sigma K_L + K_0
        K_P (1 - theta e^{|I| K_L}) > sigma^2 K_P + 3 sigma K_0 K_L + K_0.

    theta starts at 0.1 (1 - sigma) and is halved until the fixed-point
    construction for K_L goes through.
    """
    theta = 0.1 * (1.0 - sigma)
    for _ in range(200):
        kl = _fixed_point_kl(k0, sigma, theta, interval_length)
        if kl is not None:
            damp = 1.0 - theta * math.exp(interval_length * kl)
            kp = 2.0 * (3.0 * sigma * k0 * kl + k0) / (damp - sigma**2)
            if damp > sigma**2 and kp > 0.0 and _klkp_ok(kl, kp, theta, k0, sigma, interval_length):
                return kl, kp, theta
        theta *= 0.5
    raise ConvergenceError("could not find coupling constants; K_0 audit suspect")


def _fixed_point_kl(k0, sigma, theta, ell):
    x = 2.0 * k0 / (1.0 - sigma)
    for _ in range(500):
        damp = 1.0 - theta * math.exp(ell * x)
        if damp <= sigma:
            return None
        x_new = (sigma * x + k0) / damp
        if not math.isfinite(x_new) or x_new <= 0.0:
            return None
        if abs(x_new - x) < 1e-12 * x:
            return 2.0 * x_new
        x = x_new
    return None


def _klkp_ok(kl, kp, theta, k0, sigma, ell):
    damp = 1.0 - theta * math.exp(ell * kl)
    return (
        kl * damp > sigma * kl + k0
        and kp * damp > sigma**2 * kp + 3.0 * sigma * k0 * kl + k0
    )
