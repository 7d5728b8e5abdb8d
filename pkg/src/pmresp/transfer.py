"""The induced-map transfer operator P_alpha and its parameter derivative Q_alpha.

Both operators act on SampledFunctions through dense collocation matrices
assembled from one shared inverse-orbit sweep per node:

  * branches r <= r_store (4096) enter exactly via barycentric rows;
  * deeper branches, whose inverse points are within 1e-4 of 1/2, enter
    through a second-order Taylor tail in h about 1/2 driven by orbit sums
    continued to plan.R and closed asymptotically (see tails.py);
  * an exact rank-one mean correction pins int P h dm = int h dm and
    int Q h dm = 0 identically, distributing the residual tail mass along
    the asymptotic branch shape xi^-(alpha+1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels, tails
from .errors import PlanError, PreconditionError
from .orbit import as_alpha, logg
from .space import SampledFunction, chebyshev_grid, from_values

R_MATRIX = 4096          # exact-matrix branch depth
R_MIN = 4096
R_CAP = 2**19
ENVELOPE_C = 4.0         # fitted scale of the decay envelope
FIT_MARGIN = 1e-4        # residual fraction left by the asymptotic closure


def raw_tail_envelope(alpha: float, R: int, weight_exponent: float) -> float:
    """Fitted-envelope estimate of sum_{r>R} C r^(we-(a+1)/a) (logg r)^3.

    The cubed-log factor only enters the alpha-derivative-weighted series;
    the plain weight series (weight_exponent == 0) is log-free.
    """
    a = alpha
    b = (a + 1.0) / a - 1.0 - weight_exponent
    if b <= 0.0:
        return np.inf
    if weight_exponent == 0.0:
        poly = 1.0
    else:
        L = logg(R)
        poly = L**3 + 3.0 * L**2 / b + 6.0 * L / b**2 + 6.0 / b**3
    return ENVELOPE_C * R ** (-b) * poly / b


@dataclass(frozen=True)
class TruncationPlan:
    """Branch cutoff R and the estimated mass the closed tail leaves behind."""

    R: int
    tail_bound: float
    alpha: float
    tol: float
    weight_exponent: float = 0.0
    capped: bool = False


def plan_truncation(alpha, tol: float, weight_exponent: float = 0.0) -> TruncationPlan:
    """Choose the branch cutoff for the given tolerance.

    The tail beyond R is not dropped but closed by an asymptotic fit, so the
    bound is envelope(R) * FIT_MARGIN.  If even the deepest supported cutoff
    cannot meet tol the plan is returned `capped` with the achieved bound.
    """
    a = as_alpha(alpha)
    if tol <= 0.0:
        raise PreconditionError("tolerance must be positive")
    if weight_exponent < 0.0:
        raise PreconditionError("weight_exponent must be nonnegative")
    if weight_exponent >= 1.0 / a:
        raise PlanError(
            f"branch series with weight exponent {weight_exponent} diverges at alpha={a}"
        )
    R = R_MIN
    while R < R_CAP and raw_tail_envelope(a, R, weight_exponent) * FIT_MARGIN > tol:
        R *= 2
    bound = raw_tail_envelope(a, R, weight_exponent) * FIT_MARGIN
    return TruncationPlan(
        R=R,
        tail_bound=float(bound),
        alpha=a,
        tol=tol,
        weight_exponent=weight_exponent,
        capped=bound > tol,
    )


@dataclass
class OperatorBundle:
    """Shared per-(alpha, plan, grid) operator data.

    P_mat and Q_mat are the fully corrected dense operators; the stored
    orbit table (depths 0..r_store) is reused by response sums and audits.
    """

    alpha: float
    plan: TruncationPlan
    grid: object
    r_store: int
    Z: np.ndarray
    DZ: np.ndarray
    AZ: np.ndarray
    RA1: np.ndarray
    P_mat: np.ndarray
    Q_mat: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)   # lazy attachments (Kac data)


def build_operators(alpha, plan: TruncationPlan | None = None, n: int = 128) -> OperatorBundle:
    """Assemble the corrected P and Q collocation matrices."""
    a = as_alpha(alpha)
    if plan is None:
        plan = plan_truncation(a, 1e-12, 0.0)
    if abs(plan.alpha - a) > 0.0:
        raise PlanError("plan was built for a different alpha")
    grid = chebyshev_grid(n)
    nodes = grid.nodes
    bw = grid.bary_w
    r_store = min(plan.R, R_MATRIX)
    Z, DZ, R2, R3, AZ, RA1, RA2, UF = kernels.orbit_table(a, nodes, r_store)
    P_tr, Q1, Q2 = kernels.pq_matrices(Z, DZ, AZ, RA1, nodes, bw)
    M = P_tr
    Mq = Q1 @ grid.diff1 + Q2

    diag = {"underflow_depth": int(UF.min()) if np.any(UF >= 0) else -1}
    if plan.R > r_store:
        fit_r = tails.fit_window_depths(plan.R, r_store)
        acc, samples, _state = kernels.tail_accumulate(
            a, Z[-1].copy(), DZ[-1].copy(), AZ[-1].copy(), RA1[-1].copy(),
            r_store, plan.R, fit_r,
        )
        shift = nodes ** (-a) / (a * 2.0**a)
        eta = 1.0 / a - 1.0 if a > 0.5 else None
        betas = [
            (a + 1.0) / a, (a + 2.0) / a, (a + 3.0) / a,   # tp0, tp1, tp2
            (a + 2.0) / a, (a + 3.0) / a,                  # tqa0, tqa1
            (a + 1.0) / a, (a + 2.0) / a,                  # tqb0, tqb1
        ]
        logdeg = [2, 2, 2, 3, 3, 3, 3]
        T = np.empty((7, len(nodes)))
        worst = 0.0
        for s in range(7):
            tail_s, diag_s = tails.batched_fit_tail(
                fit_r, samples[s], betas[s], plan.R,
                shift=shift, log_deg=logdeg[s], extra_offset=eta,
            )
            T[s] = acc[s] + tail_s
            worst = max(worst, float(np.max(diag_s)))
        diag["closure_consistency"] = worst
    else:
        T = np.zeros((7, len(nodes)))

    # Taylor tail about 1/2: rows picking h(1/2), h'(1/2), h''(1/2)
    e_half = np.zeros(len(nodes))
    e_half[0] = 1.0
    d_half = grid.diff1[0, :]
    d2_half = grid.diff2[0, :]
    M = M + (
        np.outer(T[0] / 2.0, e_half)
        + np.outer(T[1] / 4.0, d_half)
        + np.outer(T[2] / 16.0, d2_half)
    )
    Mq = Mq + (
        np.outer(T[5] / 2.0, e_half)
        + np.outer(T[3] / 4.0 + T[6] / 4.0, d_half)
        + np.outer(T[4] / 8.0, d2_half)
    )

    # exact mean pinning along the asymptotic branch shape
    wcc = grid.quad_weights_m
    phi_sh = nodes ** (-(a + 1.0))
    phi_sh = phi_sh / (wcc @ phi_sh)
    defect_p = wcc - wcc @ M
    defect_q = -(wcc @ Mq)
    diag["mean_defect_P"] = float(np.max(np.abs(defect_p)))
    diag["mean_defect_Q"] = float(np.max(np.abs(defect_q)))
    P_full = M + np.outer(phi_sh, defect_p)
    Q_full = Mq + np.outer(phi_sh, defect_q)

    return OperatorBundle(
        alpha=a, plan=plan, grid=grid, r_store=r_store,
        Z=Z, DZ=DZ, AZ=AZ, RA1=RA1,
        P_mat=P_full, Q_mat=Q_full, diagnostics=diag,
    )


@lru_cache(maxsize=6)
def _cached_bundle(alpha: float, plan: TruncationPlan, n: int) -> OperatorBundle:
    return build_operators(alpha, plan, n)


def get_bundle(alpha, plan: TruncationPlan | None = None, n: int = 128) -> OperatorBundle:
    """build_operators with an LRU cache keyed on (alpha, plan, n)."""
    a = as_alpha(alpha)
    if plan is None:
        plan = plan_truncation(a, 1e-12, 0.0)
    return _cached_bundle(a, plan, n)


def _resolve(alpha, h: SampledFunction, plan, bundle) -> OperatorBundle:
    if bundle is not None:
        if bundle.grid.n != h.grid.n:
            raise PreconditionError("bundle grid does not match the function grid")
        return bundle
    return get_bundle(alpha, plan, h.grid.n)


def apply_P(alpha, h: SampledFunction, plan: TruncationPlan | None = None,
            bundle: OperatorBundle | None = None) -> SampledFunction:
    """(P_alpha h)(xi) = sum_r G_{alpha,r}(xi) h(F_{alpha,r}^{-1}(xi))."""
    b = _resolve(alpha, h, plan, bundle)
    return h.with_values(b.P_mat @ h.values)


def apply_Q(alpha, h: SampledFunction, plan: TruncationPlan | None = None,
            bundle: OperatorBundle | None = None) -> SampledFunction:
    """Q_alpha h = d_alpha (P_alpha h) at fixed h; zero mean against m."""
    b = _resolve(alpha, h, plan, bundle)
    return h.with_values(b.Q_mat @ h.values)
