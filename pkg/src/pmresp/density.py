"""Full-interval invariant density rho_alpha from the induced density.

The pull-back series g(z) = sum_k h((z_k+1)/2) z_k' converges on (0, 1]
with g(z) <= C z^-alpha; rho_alpha = g / int_0^1 g, and the normalizer
equals the expected return time int tau d mu (Kac).  Evaluation combines
exact orbit summation with asymptotic tail closure; the integrable
singularity at 0 is handled by a graded octave mesh plus a fitted
small-z model  g(z) z^alpha = c_0 + corrections  integrated in closed form.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels, tails
from .errors import DomainError, PreconditionError, TruncationCapError
from .orbit import as_alpha
from .solver import DensityPair
from .space import integrate_m

Z_SWITCH = 1e-4        # orbit depth at which h is Taylor-expanded about 1/2
N_FIT = 40
SERIES_CAP = 10**7
PLATEAU_MULT = 16      # orbit depth per lane: PLATEAU_MULT * z^-alpha / (alpha 2^alpha)
R_BASE_CAP = 2**17
K0_BUDGET = 2e5        # deepest affordable plateau length for direct evaluation


@dataclass(frozen=True)
class UnitDensityEval:
    """Point evaluation of g, rho and their alpha-derivatives."""

    z: float
    g: float
    da_g: float
    rho: float = float("nan")
    da_rho: float = float("nan")
    terms_used: int = 0
    tail_estimate: float = 0.0
    model_based: bool = False


@dataclass(frozen=True)
class KacNormalizer:
    """int_0^1 g dz = int tau d mu (>= 1) and its alpha-derivative."""

    value: float
    da_value: float
    diagnostics: dict = field(default_factory=dict, compare=False)
    table: "DensityTable | None" = field(default=None, repr=False, compare=False)


def _taylor_coeffs(pair: DensityPair):
    """Rows (f(1/2), f'(1/2), f''(1/2)/2) for f in (h, h', dh), powers of z/2."""
    grid = pair.h.grid
    d1 = grid.diff1
    h = pair.h.values
    hp = d1 @ h
    hpp = d1 @ hp
    hppp = d1 @ hpp
    dh = pair.dh.values if pair.dh is not None else np.zeros_like(h)
    dhp = d1 @ dh
    dhpp = d1 @ dhp
    tc = np.array([
        [h[0], hp[0], 0.5 * hpp[0]],
        [hp[0], hpp[0], 0.5 * hppp[0]],
        [dh[0], dhp[0], 0.5 * dhpp[0]],
    ])
    return tc, hp, dh


def _r_base(alpha: float, tol: float) -> int:
    from .transfer import plan_truncation

    return min(plan_truncation(alpha, tol, 0.0).R, R_BASE_CAP)


def eval_g_batch(alpha, pair: DensityPair, zs: np.ndarray, tol: float = 1e-9,
                 cap: int = SERIES_CAP):
    """g and d_alpha g at each z in zs, with tail closure diagnostics.

    Returns (g, da_g, tail_est, terms).  Raises TruncationCapError if any
    lane would need more than `cap` terms; the partial result rides along.
    """
    a = as_alpha(alpha)
    if pair.dh is None:
        raise PreconditionError("eval_g requires a pair with dh solved")
    zs = np.asarray(zs, dtype=float)
    if np.any(zs <= 0.0) or np.any(zs > 1.0):
        raise DomainError("g is defined on (0, 1]")
    grid = pair.h.grid
    tc, hp, dh = _taylor_coeffs(pair)
    B = a * 2.0**a
    k0 = zs ** (-a) / B
    r_base = _r_base(a, tol)
    caps_f = PLATEAU_MULT * k0 + r_base
    over = caps_f > cap
    r_caps = np.minimum(caps_f, cap).astype(np.int64)
    g, dag, gsamp, dgsamp, rsamp, state = kernels.g_series(
        a, zs, r_caps, grid.nodes, grid.bary_w,
        pair.h.values, hp, dh, tc, Z_SWITCH, N_FIT,
    )
    beta = (a + 1.0) / a
    eta = 1.0 / a - 1.0 if a > 0.5 else None
    tail_est = np.zeros(len(zs))
    for i in range(len(zs)):
        tg, dg_ = tails.fit_tail(rsamp[i], gsamp[i], beta, int(r_caps[i]),
                                 shift=k0[i], log_deg=(1, 2), extra_offset=eta)
        tdag, ddag_ = tails.fit_tail(rsamp[i], dgsamp[i], beta, int(r_caps[i]),
                                     shift=k0[i], log_deg=(3, 3), extra_offset=eta)
        g[i] += tg
        dag[i] += tdag
        tail_est[i] = (dg_ + ddag_) / (abs(g[i]) + 1.0)
    if np.any(over):
        raise TruncationCapError(
            f"{int(over.sum())} evaluation points need more than {cap} series terms",
            partial=(g, dag, tail_est, r_caps),
        )
    return g, dag, tail_est, r_caps


def eval_g(alpha, pair: DensityPair, z: float, tol: float = 1e-9) -> UnitDensityEval:
    """Series evaluation of (g, da_g) at one point z in (0, 1]."""
    g, dag, tail_est, terms = eval_g_batch(alpha, pair, np.array([float(z)]), tol)
    return UnitDensityEval(
        z=float(z), g=float(g[0]), da_g=float(dag[0]),
        terms_used=int(terms[0]), tail_estimate=float(tail_est[0]),
    )


def _head_integral(c: float, m: int, eps: float) -> float:
    """int_0^eps z^c (log z)^m dz for c > -1, m <= 2."""
    if c <= -1.0:
        raise PreconditionError(f"divergent head integral, exponent {c}")
    p = c + 1.0
    E = eps**p
    le = np.log(eps)
    if m == 0:
        return E / p
    if m == 1:
        return E * (le / p - 1.0 / p**2)
    if m == 2:
        return E * (le**2 / p - 2.0 * le / p**2 + 2.0 / p**3)
    raise PreconditionError("head integrals support log powers 0..2")


class SmallZModel:
    """Fitted asymptotics of g and da_g as z -> 0.

    g(z) z^a   = sum c_b z^(e_b) log(z)^(m_b)
    da_g(z) z^a = likewise with log-enriched basis; exponents are the
    analytically known correction ladder {0, a, 2a, 1} (deduplicated).
    """

    def __init__(self, alpha: float, zf: np.ndarray, gf: np.ndarray, dagf: np.ndarray):
        a = alpha
        self.alpha = a
        gb = [(0.0, 0), (a, 0), (a, 1), (2 * a, 0), (2 * a, 1), (1.0, 0)]
        db = [(0.0, 0), (0.0, 1), (a, 0), (a, 1), (a, 2),
              (2 * a, 0), (2 * a, 1), (1.0, 0), (1.0, 1)]
        self.g_basis = _dedupe(gb)
        self.d_basis = _dedupe(db)
        lz = np.log(zf)
        za = zf**a
        self.g_coef, self.g_resid = _fit(self.g_basis, zf, lz, gf * za)
        self.d_coef, self.d_resid = _fit(self.d_basis, zf, lz, dagf * za)

    def g(self, z):
        z = np.asarray(z, dtype=float)
        return z ** (-self.alpha) * _eval_basis(self.g_basis, self.g_coef, z)

    def da_g(self, z):
        z = np.asarray(z, dtype=float)
        return z ** (-self.alpha) * _eval_basis(self.d_basis, self.d_coef, z)

    def integral_g(self, eps: float, monomial: float = 0.0) -> float:
        """int_0^eps z^monomial g(z) dz in closed form."""
        return sum(
            c * _head_integral(e - self.alpha + monomial, m, eps)
            for (e, m), c in zip(self.g_basis, self.g_coef)
        )

    def integral_da_g(self, eps: float, monomial: float = 0.0) -> float:
        return sum(
            c * _head_integral(e - self.alpha + monomial, m, eps)
            for (e, m), c in zip(self.d_basis, self.d_coef)
        )


def _dedupe(basis, atol=0.03):
    out = []
    for e, m in basis:
        if any(abs(e - e2) < atol and m == m2 for e2, m2 in out):
            continue
        out.append((e, m))
    return out


def _fit(basis, z, lz, y):
    cols = [z**e * lz**m for e, m in basis]
    A = np.array(cols).T
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, y, rcond=None)
    coef = coef / scale
    resid = np.max(np.abs(A @ coef - y)) / max(np.max(np.abs(y)), 1e-300)
    return coef, float(resid)


def _eval_basis(basis, coef, z):
    lz = np.log(z)
    out = np.zeros_like(z)
    for (e, m), c in zip(basis, coef):
        out += c * z**e * lz**m
    return out


@dataclass
class DensityTable:
    """Graded-quadrature evaluation of g on (z_floor, 1] plus a small-z model."""

    alpha: float
    z_floor: float
    nodes: np.ndarray
    weights: np.ndarray
    g: np.ndarray
    da_g: np.ndarray
    model: SmallZModel
    diagnostics: dict


def _gauss_panel(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def build_density_table(alpha, pair: DensityPair, tol: float = 1e-9) -> DensityTable:
    """Octave-graded Gauss mesh toward 0 with pointwise series evaluations."""
    a = as_alpha(alpha)
    B = a * 2.0**a
    z_floor = max(1e-8, (K0_BUDGET * B) ** (-1.0 / a))
    xs = []
    ws = []
    x, w = _gauss_panel(0.5, 1.0, 24)
    xs.append(x)
    ws.append(w)
    hi = 0.5
    while hi > z_floor:
        lo = max(hi / 2.0, z_floor)
        x, w = _gauss_panel(lo, hi, 12)
        xs.append(x)
        ws.append(w)
        hi = lo
    nodes = np.concatenate(xs)
    weights = np.concatenate(ws)
    g, dag, tail_est, _terms = eval_g_batch(a, pair, nodes, tol)
    sel = (nodes < 1e-3) & (nodes >= z_floor)
    model = SmallZModel(a, nodes[sel], g[sel], dag[sel])
    diag = {
        "tail_estimate": float(np.max(tail_est)),
        "model_resid_g": model.g_resid,
        "model_resid_da_g": model.d_resid,
        "n_nodes": len(nodes),
    }
    return DensityTable(alpha=a, z_floor=z_floor, nodes=nodes, weights=weights,
                        g=g, da_g=dag, model=model, diagnostics=diag)


def kac_normalizer(alpha, pair: DensityPair, tol: float = 1e-9) -> KacNormalizer:
    """value = int_0^1 g dz (>= 1) and da_value = int_0^1 da_g dz."""
    a = as_alpha(alpha)
    table = build_density_table(a, pair, tol)
    value = float(table.weights @ table.g + table.model.integral_g(table.z_floor))
    da_value = float(table.weights @ table.da_g + table.model.integral_da_g(table.z_floor))
    if value < 1.0 - max(tol, 1e-9) * 10.0:
        raise PreconditionError(f"Kac normalizer {value} < 1; solver output suspect")
    return KacNormalizer(value=value, da_value=da_value,
                         diagnostics=table.diagnostics, table=table)


def eval_rho(alpha, pair: DensityPair, norm: KacNormalizer, z: float,
             tol: float = 1e-9) -> UnitDensityEval:
    """rho = g / normalizer and da_rho by the quotient rule at one point."""
    a = as_alpha(alpha)
    table = norm.table
    if table is not None and z < table.z_floor:
        g = float(table.model.g(np.array([z]))[0])
        dag = float(table.model.da_g(np.array([z]))[0])
        ev = UnitDensityEval(z=z, g=g, da_g=dag, model_based=True)
    else:
        ev = eval_g(a, pair, z, tol)
    V = norm.value
    dV = norm.da_value
    rho = ev.g / V
    da_rho = (ev.da_g * V - ev.g * dV) / V**2
    return UnitDensityEval(z=ev.z, g=ev.g, da_g=ev.da_g, rho=rho, da_rho=da_rho,
                           terms_used=ev.terms_used, tail_estimate=ev.tail_estimate,
                           model_based=ev.model_based)


def rho_profile(alpha, pair: DensityPair, norm: KacNormalizer, zs: np.ndarray,
                tol: float = 1e-9):
    """Vectorized (rho, da_rho) profile for CSV emission."""
    a = as_alpha(alpha)
    zs = np.asarray(zs, dtype=float)
    table = norm.table
    lowcut = table.z_floor if table is not None else 0.0
    direct = zs >= lowcut
    g = np.empty_like(zs)
    dag = np.empty_like(zs)
    if np.any(direct):
        g[direct], dag[direct], *_ = eval_g_batch(a, pair, zs[direct], tol)
    if np.any(~direct):
        g[~direct] = table.model.g(zs[~direct])
        dag[~direct] = table.model.da_g(zs[~direct])
    V, dV = norm.value, norm.da_value
    rho = g / V
    da_rho = (dag * V - g * dV) / V**2
    return rho, da_rho


def kac_branch_sum(alpha, pair: DensityPair, r_exact: int = 4096,
                   r_total: int | None = None):
    """Independent branch-sum route to int tau d mu and its alpha derivative.

    Abel-resummed form: int tau d mu = sum_{r>=0} 2 int_{1/2}^{y_r} h dy with
    y_r = (1 + x_r)/2, evaluated exactly through the Chebyshev antiderivative
    for r <= r_exact and by Taylor + universal branch-point tail sums beyond.

    Returns (value, da_value, diagnostics).
    """
    from .space import antiderivative_from_left

    a = as_alpha(alpha)
    if pair.dh is None:
        raise PreconditionError("kac_branch_sum requires dh for the derivative part")
    if r_total is None:
        b = 1.0 / a - 1.0
        r_total = int(min(2**22, max(2**14, (1e2 / max(b, 0.05)) ** (1.0 / max(b, 0.05)))))
    xs, axs, acc, samples, rsamp = kernels.x_orbit_sums(a, r_exact, r_total, 48)
    grid = pair.h.grid
    H = antiderivative_from_left(pair.h)
    Hd = antiderivative_from_left(pair.dh)
    ys = 0.5 * (1.0 + xs[1:])
    A_y = grid.bary_matrix(ys)
    h_at_y = A_y @ pair.h.values
    # exact part: r = 0 gives integrate_m(h) resp. integrate_m(dh)
    value = integrate_m(pair.h) + 2.0 * np.sum(H(ys) - H(0.5))
    da_value = integrate_m(pair.dh) + float(
        np.sum(h_at_y * axs[1:]) + 2.0 * np.sum(Hd(ys) - Hd(0.5))
    )
    # tails: Taylor of h about 1/2 against universal sums of x^p and ax x^p.
    # The branch-point orbit has a pure integer 1/r correction ladder with
    # log-polynomial numerators of known degree (x^p: 0,1; ax x^p: 2,3).
    tc, hp, dh = _taylor_coeffs(pair)
    shift = 0.5 ** (-a) / (a * 2.0**a)
    closures = np.empty(6)
    diags = np.empty(6)
    betas = [1.0 / a, 2.0 / a, 3.0 / a, 1.0 / a, 2.0 / a, 3.0 / a]
    logdeg = [(0, 1), (0, 1), (0, 1), (2, 3), (2, 3), (2, 3)]
    for s in range(6):
        c, d = tails.fit_tail(rsamp, samples[s], betas[s], r_total,
                              shift=shift, log_deg=logdeg[s])
        closures[s] = acc[s] + c
        diags[s] = d
    TX1, TX2, TX3, TA0, TA1, TA2 = closures
    hv, hpv, hppv = tc[0, 0], tc[0, 1], 2.0 * tc[0, 2]
    dhv, dhpv, dhppv = tc[2, 0], tc[2, 1], 2.0 * tc[2, 2]
    value += hv * TX1 + hpv * TX2 / 4.0 + hppv * TX3 / 24.0
    da_value += (hv * TA0 + 0.5 * hpv * TA1 + hppv * TA2 / 8.0
                 + dhv * TX1 + dhpv * TX2 / 4.0 + dhppv * TX3 / 24.0)
    diag = {"r_exact": r_exact, "r_total": r_total,
            "closure_consistency": float(np.max(diags))}
    return float(value), float(da_value), diag


def profile_csv(zs, rho, da_rho, header_lines=None) -> str:
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    buf.write("z,rho,da_rho\n")
    for z, r, dr in zip(zs, rho, da_rho):
        buf.write(f"{z:.17g},{r:.17g},{dr:.17g}\n")
    return buf.getvalue()
