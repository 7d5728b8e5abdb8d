"""Asymptotic closure of slowly convergent branch series.

Branch-series terms behave like (r + s)^(-beta) * (polynomial in log(r+s))
with integer-ladder corrections in 1/(r+s); beta is known exactly from the
orbit-derivative decay rates and s is the analytic plateau offset
z0^(-alpha) / (alpha 2^alpha).  The remainder beyond the last computed
branch is obtained by least-squares fitting the known form on a geometric
window of exact terms and integrating the fitted model in closed form
(upper incomplete gamma).
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaincc, gamma as gamma_fn


def tail_integral(beta: float, m: int, r_cut: float, shift: float = 0.0,
                  n_exact: int = 64) -> float:
    """sum_{r > r_cut} (r+shift)^-beta * (log(r+shift) - log(r_cut+shift))^m.

    The first n_exact terms are summed directly; the remainder is a
    midpoint Euler-Maclaurin integral in closed form (upper incomplete
    gamma).  Requires beta > 1.
    """
    if beta <= 1.0:
        raise ValueError("tail integral requires decay exponent beta > 1")
    c = beta - 1.0
    L0 = np.log(r_cut + shift)
    r = np.arange(r_cut + 1, r_cut + n_exact + 1, dtype=float)
    u = np.log(r + shift) - L0
    head = float(np.sum((r + shift) ** (-beta) * u**m))
    x0 = c * (np.log(r_cut + n_exact + shift + 0.5) - L0)
    rest = np.exp(-c * L0) * gammaincc(m + 1.0, x0) * gamma_fn(m + 1.0) / c ** (m + 1.0)
    return head + float(rest)


def fit_tail(
    r: np.ndarray,
    terms: np.ndarray,
    beta: float,
    r_cut: int,
    shift: float = 0.0,
    log_deg: int | tuple[int, ...] = 3,
    ladder: int = 2,
    extra_offset: float | None = None,
    tiny: float = 1e-280,
):
    """Closure of sum_{r > r_cut} t_r from samples t_r on a fit window.

    Model: t_r = sum_{l,m} c_{lm} (r+s)^-(beta+l) u^m with
    u = log(r+s) - log(r_cut+s), l over ladder levels (plus an optional
    fractional level `extra_offset`), m up to the level's log degree.
    Passing a tuple of degrees (one per integer level) pins the known
    log-polynomial degree of each correction order; spurious higher log
    powers extrapolate badly.

    Returns (tail, diagnostic) where the diagnostic is the closure shift
    when refitting on the top half of the window (a model-error proxy).
    """
    r = np.asarray(r, dtype=float)
    terms = np.asarray(terms, dtype=float)
    if isinstance(log_deg, int):
        degs = [log_deg] * ladder
    else:
        degs = list(log_deg)
        ladder = len(degs)
    keep = np.abs(terms) > 0.0
    if keep.sum() < max(degs) + 2 or np.max(np.abs(terms)) < tiny:
        return 0.0, 0.0

    levels = [(float(l), degs[l]) for l in range(ladder)]
    if extra_offset is not None and 0.0 < extra_offset < 1.0:
        levels.append((extra_offset, min(degs[0] + 1, 3)))

    def closure(mask):
        rr = r[mask]
        tt = terms[mask]
        u = np.log(rr + shift) - np.log(r_cut + shift)
        cols = []
        ints = []
        for off, deg in levels:
            base = (rr + shift) ** (-(beta + off))
            for m in range(deg + 1):
                cols.append(base * u**m)
                ints.append(tail_integral(beta + off, m, r_cut, shift))
        Amat = np.array(cols).T
        scale = np.max(np.abs(Amat), axis=0)
        scale[scale == 0.0] = 1.0
        coef, *_ = np.linalg.lstsq(Amat / scale, tt, rcond=None)
        return float(np.dot(coef / scale, np.array(ints)))

    full = closure(keep)
    top = keep & (r >= np.sqrt(r.max() * max(r.min(), 1.0)))
    if top.sum() >= max(d for _, d in levels) + 2:
        half = closure(top)
        diag = abs(full - half)
    else:
        diag = abs(full)
    return full, diag


def batched_fit_tail(
    r: np.ndarray,
    terms: np.ndarray,
    beta: float,
    r_cut: int,
    shift=0.0,
    **kw,
):
    """fit_tail over the last axis being lanes: terms shape (n_fit, L)."""
    L = terms.shape[1]
    shifts = np.broadcast_to(np.asarray(shift, dtype=float), (L,))
    tails = np.empty(L)
    diags = np.empty(L)
    for i in range(L):
        ri = r[:, i] if r.ndim == 2 else r
        tails[i], diags[i] = fit_tail(ri, terms[:, i], beta, r_cut, shift=shifts[i], **kw)
    return tails, diags


def fit_window_depths(r_cut: int, r_min: int, n: int = 48) -> np.ndarray:
    """n geometrically spaced depths in [max(r_cut/16, r_min), r_cut]."""
    lo = max(r_cut / 16.0, float(r_min))
    if lo >= r_cut:
        return np.array([], dtype=np.int64)
    rs = np.unique(np.round(np.geomspace(lo, r_cut, n)).astype(np.int64))
    return rs[rs > r_min]
