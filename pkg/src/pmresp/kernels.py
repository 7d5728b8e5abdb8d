"""Numba kernels for inverse-orbit recursions, branch-series accumulation,
and Monte Carlo orbits.

All derivative recursions propagate ratio forms (z_r''/z_r', z_r'''/z_r',
d_alpha z_r'/z_r', d_alpha z_r''/z_r') so every carried quantity stays O(1)
while z_r' itself decays like r^(-(alpha+1)/alpha); raw values are recovered
by multiplying with z_r' at read-out.  z_r' is flushed to zero below 1e-300.

The backward step solves w (1 + 2^a w^a) = z.  Near the neutral fixed point
(t = 2^a w^a <= 0.045) it switches from safeguarded Newton to the exact
update of v = z^-a,

    v_{r+1} = v_r + 2^a psi(2^a / v_{r+1}),   psi(t) = (1 - (1+t)^-a) / t,

with psi evaluated by its 12-term power series; this costs one pow and one
log per step instead of five or six pows inside Newton.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

DZ_FLUSH = 1e-300
T_SWITCH = 0.045
PSI_TERMS = 13


@njit(cache=True, nogil=True)
def psi_coefficients(alpha: float) -> np.ndarray:
    """Series psi(t) = sum_k c_k t^k, c_k = (-1)^k a (a+1)...(a+k) / (k+1)!."""
    c = np.empty(PSI_TERMS)
    c[0] = alpha
    for k in range(1, PSI_TERMS):
        c[k] = -c[k - 1] * (alpha + k) / (k + 1.0)
    return c


@njit(cache=True, nogil=True, inline="always")
def _psi(t, c):
    acc = c[PSI_TERMS - 1]
    for k in range(PSI_TERMS - 2, -1, -1):
        acc = acc * t + c[k]
    return acc


@njit(cache=True, nogil=True, inline="always")
def left_inverse_newton(alpha, A, z):
    """Solve w (1 + A w^alpha) = z for w in [0, min(z, 1/2)]."""
    if z <= 0.0:
        return 0.0
    w = z / (1.0 + A * z**alpha)
    lo = 0.0
    hi = z if z < 0.5 else 0.5
    for _ in range(100):
        wa = w**alpha
        f = w * (1.0 + A * wa) - z
        if f > 0.0:
            hi = w
        else:
            lo = w
        fp = 1.0 + (alpha + 1.0) * A * wa
        wn = w - f / fp
        if wn <= lo or wn >= hi:
            wn = 0.5 * (lo + hi)
        if abs(wn - w) <= 1e-16 * wn + 1e-300:
            w = wn
            break
        w = wn
    return w


@njit(cache=True, nogil=True, inline="always")
def _inverse_step(alpha, A, c, z, za):
    """One left-branch inverse step; returns (w, wa) with wa = w**alpha."""
    if A * za > T_SWITCH:
        w = z / (1.0 + A * za)
        lo = 0.0
        hi = z if z < 0.5 else 0.5
        for _ in range(100):
            wa = w**alpha
            f = w * (1.0 + A * wa) - z
            if f > 0.0:
                hi = w
            else:
                lo = w
            fp = 1.0 + (alpha + 1.0) * A * wa
            wn = w - f / fp
            if wn <= lo or wn >= hi:
                wn = 0.5 * (lo + hi)
            if abs(wn - w) <= 1e-16 * wn + 1e-300:
                w = wn
                break
            w = wn
        return w, w**alpha
    # v-coordinate update: v1 = v + A psi(A / v1), explicit after refinement
    v = 1.0 / za
    v1 = v + A * alpha
    v1 = v + A * _psi(A / v1, c)
    v1 = v + A * _psi(A / v1, c)
    v1 = v + A * _psi(A / v1, c)
    wa = 1.0 / v1
    w = wa ** (1.0 / alpha)
    return w, wa


@njit(cache=True, nogil=True, inline="always")
def _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2):
    """One backward step of all recursions; returns the state at depth r+1."""
    w, wa = _inverse_step(alpha, A, c, z, za)
    t = A * wa
    D = 1.0 + (alpha + 1.0) * t
    L = np.log(2.0 * w)
    dz1 = dz / D
    if dz1 < DZ_FLUSH:
        dz1 = 0.0
    az1 = (az + t * w * (-L)) / D
    tw = t / w          # A w^(alpha-1)
    aa1 = alpha * (alpha + 1.0)
    r2_1 = r2 - aa1 * tw * dz1 / D
    r3_1 = (
        r3
        - (alpha - 1.0) * aa1 * (tw / w) * dz1 * dz1 / D
        - 3.0 * aa1 * tw * dz1 * r2_1 / D
    )
    ra1_1 = ra1 - (t * (1.0 + (alpha + 1.0) * L) + aa1 * tw * az1) / D
    t1 = (2.0 * alpha + 1.0 + aa1 * L) * tw * dz1
    t2 = (alpha - 1.0) * aa1 * (tw / w) * dz1 * az1
    t3 = 2.0 * aa1 * tw * ra1_1 * dz1
    t4 = (1.0 + (alpha + 1.0) * L) * t * r2_1
    t5 = aa1 * tw * r2_1 * az1
    ra2_1 = ra2 - (t1 + t2 + t3 + t4 + t5) / D
    return w, wa, dz1, r2_1, r3_1, az1, ra1_1, ra2_1


@njit(cache=True, nogil=True, parallel=True)
def orbit_table(alpha, z0s, R):
    """Full state table for depths r = 0..R and every start point in z0s.

    Returns (Z, DZ, R2, R3, AZ, RA1, RA2, UF) where ratio columns are as in
    the module docstring and UF[i] is the first depth where z' flushed to
    zero (-1 if it never did).
    """
    A = 2.0**alpha
    c = psi_coefficients(alpha)
    L = z0s.shape[0]
    Z = np.empty((R + 1, L))
    DZ = np.empty((R + 1, L))
    R2 = np.empty((R + 1, L))
    R3 = np.empty((R + 1, L))
    AZ = np.empty((R + 1, L))
    RA1 = np.empty((R + 1, L))
    RA2 = np.empty((R + 1, L))
    UF = np.full(L, -1, dtype=np.int64)
    for i in prange(L):
        z = z0s[i]
        za = z**alpha
        dz = 1.0
        r2 = 0.0
        r3 = 0.0
        az = 0.0
        ra1 = 0.0
        ra2 = 0.0
        Z[0, i] = z
        DZ[0, i] = dz
        R2[0, i] = r2
        R3[0, i] = r3
        AZ[0, i] = az
        RA1[0, i] = ra1
        RA2[0, i] = ra2
        for r in range(1, R + 1):
            z, za, dz, r2, r3, az, ra1, ra2 = _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2)
            if dz == 0.0 and UF[i] < 0:
                UF[i] = r
            Z[r, i] = z
            DZ[r, i] = dz
            R2[r, i] = r2
            R3[r, i] = r3
            AZ[r, i] = az
            RA1[r, i] = ra1
            RA2[r, i] = ra2
    return Z, DZ, R2, R3, AZ, RA1, RA2, UF


@njit(cache=True, nogil=True, parallel=True)
def tail_accumulate(alpha, z0, dz0, az0, ra10, r_from, r_to, fit_r):
    """Continue orbits from depth r_from to r_to, accumulating tail sums.

    Series per lane: tp0 = sum z', tp1 = sum z' z, tp2 = sum z' z^2,
    tqa0 = sum z' da_z, tqa1 = sum z' da_z z, tqb0 = sum da_z',
    tqb1 = sum da_z' z.  Terms at the depths in fit_r are recorded for the
    asymptotic tail fit.
    """
    A = 2.0**alpha
    c = psi_coefficients(alpha)
    L = z0.shape[0]
    nf = fit_r.shape[0]
    acc = np.zeros((7, L))
    samples = np.zeros((7, nf, L))
    state = np.zeros((4, L))
    for i in prange(L):
        z = z0[i]
        za = z**alpha
        dz = dz0[i]
        az = az0[i]
        ra1 = ra10[i]
        r2 = 0.0
        r3 = 0.0
        ra2 = 0.0
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        s4 = 0.0
        s5 = 0.0
        s6 = 0.0
        k = 0
        for r in range(r_from + 1, r_to + 1):
            z, za, dz, r2, r3, az, ra1, ra2 = _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2)
            t0 = dz
            t1 = dz * z
            t2 = t1 * z
            t3 = dz * az
            t4 = t3 * z
            t5 = dz * ra1
            t6 = t5 * z
            s0 += t0
            s1 += t1
            s2 += t2
            s3 += t3
            s4 += t4
            s5 += t5
            s6 += t6
            if k < nf and r == fit_r[k]:
                samples[0, k, i] = t0
                samples[1, k, i] = t1
                samples[2, k, i] = t2
                samples[3, k, i] = t3
                samples[4, k, i] = t4
                samples[5, k, i] = t5
                samples[6, k, i] = t6
                k += 1
        acc[0, i] = s0
        acc[1, i] = s1
        acc[2, i] = s2
        acc[3, i] = s3
        acc[4, i] = s4
        acc[5, i] = s5
        acc[6, i] = s6
        state[0, i] = z
        state[1, i] = dz
        state[2, i] = az
        state[3, i] = ra1
    return acc, samples, state


@njit(cache=True, nogil=True, inline="always")
def _bary_row_eval3(x, nodes, bw, v0, v1, v2):
    """Barycentric evaluation of three node-value vectors at a point x."""
    n = nodes.shape[0]
    num0 = 0.0
    num1 = 0.0
    num2 = 0.0
    den = 0.0
    for j in range(n):
        d = x - nodes[j]
        if abs(d) < 1e-15:
            return v0[j], v1[j], v2[j]
        t = bw[j] / d
        num0 += t * v0[j]
        num1 += t * v1[j]
        num2 += t * v2[j]
        den += t
    return num0 / den, num1 / den, num2 / den


@njit(cache=True, nogil=True, parallel=True)
def pq_matrices(Z, DZ, AZ, RA1, nodes, bw):
    """Collocation matrices of the truncated branch sums.

    P[i, j]  = sum_r (z_r'/2) * ell_j((z_r+1)/2)         at node i
    Q1[i, j] = sum_r (da_z/2) (z_r'/2) * ell_j(...)      (h' coefficient)
    Q2[i, j] = sum_r (da_dz/2) * ell_j(...)              (h coefficient)
    where ell_j are the Lagrange cardinal functions on `nodes`.
    """
    R1, N = Z.shape
    P = np.zeros((N, N))
    Q1 = np.zeros((N, N))
    Q2 = np.zeros((N, N))
    for i in prange(N):
        for r in range(R1):
            dz = DZ[r, i]
            if dz == 0.0:
                continue
            x = 0.5 * (Z[r, i] + 1.0)
            w = 0.5 * dz
            wq1 = 0.5 * AZ[r, i] * w
            wq2 = 0.5 * RA1[r, i] * dz
            hit = -1
            den = 0.0
            for j in range(N):
                d = x - nodes[j]
                if abs(d) < 1e-15:
                    hit = j
                    break
                den += bw[j] / d
            if hit >= 0:
                P[i, hit] += w
                Q1[i, hit] += wq1
                Q2[i, hit] += wq2
            else:
                for j in range(N):
                    cc = (bw[j] / (x - nodes[j])) / den
                    P[i, j] += w * cc
                    Q1[i, j] += wq1 * cc
                    Q2[i, j] += wq2 * cc
    return P, Q1, Q2


@njit(cache=True, nogil=True, parallel=True)
def response_series(
    alpha,
    Z, DZ, AZ, RA1,
    PHI, PHIP, PHI_INV, PHIP_INV,
    nodes, bw, h, hp, dh, wcc,
    tc,            # (3,3) Taylor coeffs at 1/2 of h, h', dh in powers of z/2
    pt, ptd,       # Taylor of phi~ and phi' at 0 (powers of z)
    ph, phd,       # Taylor of phi~ and phi' at 1/2 (powers of z/2)
    r_total, fit_r,
):
    """Branch series for the Kac-route numerator and its alpha-derivative.

    Stored depths (arrays Z..PHIP_INV, r < R1) use exact interpolation and
    exact observable values; beyond them the orbit is continued and h, dh,
    h' and the observable are replaced by Taylor expansions about 1/2
    (resp. 0), valid because z_r < 1e-3 there.

    Returns (per-lane numerator sums, derivative sums, and per-depth term
    samples at fit_r); reduce over lanes to get integrate_m of the series.
    """
    R1, N = Z.shape
    A = 2.0**alpha
    c = psi_coefficients(alpha)
    nf = fit_r.shape[0]
    num_i = np.zeros(N)
    dnum_i = np.zeros(N)
    csamp_i = np.zeros((N, nf))
    dcsamp_i = np.zeros((N, nf))
    for i in prange(N):
        S = 0.0
        Sd = 0.0
        numv = 0.0
        dnumv = 0.0
        for r in range(R1):
            if r >= 1:
                S += PHI[r, i]
                Sd += PHIP[r, i] * AZ[r, i]
            dz = DZ[r, i]
            z = Z[r, i]
            az = AZ[r, i]
            ra1 = RA1[r, i]
            x = 0.5 * (z + 1.0)
            hv, hpv, dhv = _bary_row_eval3(x, nodes, bw, h, hp, dh)
            big = PHI_INV[r, i] + S
            dbig = 0.5 * PHIP_INV[r, i] * az + Sd
            w = 0.5 * dz
            numv += wcc[i] * w * hv * big
            dnumv += wcc[i] * (
                (dhv + 0.5 * hpv * az) * w * big
                + hv * w * dbig
                + hv * (0.5 * ra1 * dz) * big
            )
        z = Z[R1 - 1, i]
        za = z**alpha
        dz = DZ[R1 - 1, i]
        az = AZ[R1 - 1, i]
        ra1 = RA1[R1 - 1, i]
        r2 = 0.0
        r3 = 0.0
        ra2 = 0.0
        k = 0
        for r in range(R1, r_total + 1):
            z, za, dz, r2, r3, az, ra1, ra2 = _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2)
            S += pt[0] + z * (pt[1] + z * pt[2])
            Sd += (ptd[0] + z * (ptd[1] + z * ptd[2])) * az
            u = 0.5 * z
            hv = tc[0, 0] + u * (tc[0, 1] + u * tc[0, 2])
            hpv = tc[1, 0] + u * (tc[1, 1] + u * tc[1, 2])
            dhv = tc[2, 0] + u * (tc[2, 1] + u * tc[2, 2])
            phv = ph[0] + u * (ph[1] + u * ph[2])
            phdv = phd[0] + u * (phd[1] + u * phd[2])
            big = phv + S
            dbig = 0.5 * phdv * az + Sd
            w = 0.5 * dz
            cterm = wcc[i] * w * hv * big
            dcterm = wcc[i] * (
                (dhv + 0.5 * hpv * az) * w * big
                + hv * w * dbig
                + hv * (0.5 * ra1 * dz) * big
            )
            numv += cterm
            dnumv += dcterm
            if k < nf and r == fit_r[k]:
                csamp_i[i, k] = cterm
                dcsamp_i[i, k] = dcterm
                k += 1
        num_i[i] = numv
        dnum_i[i] = dnumv
    return num_i, dnum_i, csamp_i, dcsamp_i


@njit(cache=True, nogil=True, parallel=True)
def g_series(
    alpha, zs, r_caps,
    nodes, bw, h, hp, dh,
    tc,          # (3,3) Taylor of h, h', dh at 1/2 in powers of z/2
    z_switch, n_fit,
):
    """Pull-back series g(z) = sum_k h((z_k+1)/2) z_k' and its alpha derivative.

    Per lane: exact barycentric evaluation of h, h', dh while z_k > z_switch,
    Taylor about 1/2 afterwards.  Terms at n_fit geometrically spaced depths
    in [r_cap/16, r_cap] are recorded for the tail fit.

    Returns (g, dag, gsamp, dgsamp, rsamp, state) where state rows are
    (z, dz, az, ra1) at the cut depth.
    """
    L = zs.shape[0]
    A = 2.0**alpha
    c = psi_coefficients(alpha)
    g = np.zeros(L)
    dag = np.zeros(L)
    gsamp = np.zeros((L, n_fit))
    dgsamp = np.zeros((L, n_fit))
    rsamp = np.zeros((L, n_fit), dtype=np.int64)
    state = np.zeros((L, 4))
    for i in prange(L):
        rc = r_caps[i]
        for q in range(n_fit):
            rr = int(round(rc * 16.0 ** (-1.0 + q / (n_fit - 1.0))))
            if rr < 1:
                rr = 1
            rsamp[i, q] = rr
        for q in range(1, n_fit):
            if rsamp[i, q] <= rsamp[i, q - 1]:
                rsamp[i, q] = rsamp[i, q - 1] + 1
        z = zs[i]
        za = z**alpha
        dz = 1.0
        r2 = 0.0
        r3 = 0.0
        az = 0.0
        ra1 = 0.0
        ra2 = 0.0
        k = 0
        gi = 0.0
        dgi = 0.0
        comp_g = 0.0   # Kahan compensation
        comp_dg = 0.0
        for r in range(0, rc + 1):
            if r > 0:
                z, za, dz, r2, r3, az, ra1, ra2 = _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2)
            x = 0.5 * (z + 1.0)
            if z > z_switch:
                hv, hpv, dhv = _bary_row_eval3(x, nodes, bw, h, hp, dh)
            else:
                u = 0.5 * z
                hv = tc[0, 0] + u * (tc[0, 1] + u * tc[0, 2])
                hpv = tc[1, 0] + u * (tc[1, 1] + u * tc[1, 2])
                dhv = tc[2, 0] + u * (tc[2, 1] + u * tc[2, 2])
            tg = hv * dz
            tdg = (dhv + 0.5 * hpv * az) * dz + hv * (ra1 * dz)
            y = tg - comp_g
            tsum = gi + y
            comp_g = (tsum - gi) - y
            gi = tsum
            y = tdg - comp_dg
            tsum = dgi + y
            comp_dg = (tsum - dgi) - y
            dgi = tsum
            if k < n_fit and r == rsamp[i, k]:
                gsamp[i, k] = tg
                dgsamp[i, k] = tdg
                k += 1
        g[i] = gi
        dag[i] = dgi
        state[i, 0] = z
        state[i, 1] = dz
        state[i, 2] = az
        state[i, 3] = ra1
    return g, dag, gsamp, dgsamp, rsamp, state


@njit(cache=True, nogil=True, parallel=True)
def sandwich_audit(alpha, z0s, r_max):
    """Lemma-style sandwich and sign audit along inverse orbits.

    Per lane returns (max lower-bound violation, max upper-bound violation,
    min dz, max dz, max r2, min az) over r = 1..r_max, where violations are
    of  1/(z0^-a + r a 2^a) <= z_r^a <= 1/(z0^-a + r a (1-a) 2^(a-1)).
    """
    A = 2.0**alpha
    c = psi_coefficients(alpha)
    L = z0s.shape[0]
    out = np.zeros((L, 6))
    for i in prange(L):
        z0 = z0s[i]
        base = z0 ** (-alpha)
        clo = alpha * A
        chi = alpha * (1.0 - alpha) * (A / 2.0)
        z = z0
        za = z**alpha
        dz = 1.0
        r2 = 0.0
        r3 = 0.0
        az = 0.0
        ra1 = 0.0
        ra2 = 0.0
        v_lo = 0.0
        v_hi = 0.0
        dz_min = 1.0
        dz_max = 0.0
        r2_max = -1.0e308
        az_min = 1.0e308
        for r in range(1, r_max + 1):
            z, za, dz, r2, r3, az, ra1, ra2 = _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2)
            lo = 1.0 / (base + r * clo)
            hi = 1.0 / (base + r * chi)
            if lo - za > v_lo:
                v_lo = lo - za
            if za - hi > v_hi:
                v_hi = za - hi
            if dz < dz_min:
                dz_min = dz
            if dz > dz_max:
                dz_max = dz
            if r2 > r2_max:
                r2_max = r2
            if az < az_min:
                az_min = az
        out[i, 0] = v_lo
        out[i, 1] = v_hi
        out[i, 2] = dz_min
        out[i, 3] = dz_max
        out[i, 4] = r2_max
        out[i, 5] = az_min
    return out


@njit(cache=True, nogil=True)
def x_orbit_sums(alpha, r_store, r_total, n_fit):
    """Branch-point orbit x_r (x_1 = 1/2, x_{k+1} = E^-1(x_k)) with tails.

    Returns (xs, axs, acc, samples, rsamp): stored x_r and d_alpha x_r for
    r = 1..r_store, accumulators over r in (r_store, r_total] of
    (x, x^2, x^3, ax, ax*x, ax*x^2), and term samples for the tail fit.
    """
    A = 2.0**alpha
    c = psi_coefficients(alpha)
    xs = np.zeros(r_store + 1)
    axs = np.zeros(r_store + 1)
    acc = np.zeros(6)
    samples = np.zeros((6, n_fit))
    rsamp = np.zeros(n_fit, dtype=np.int64)
    for q in range(n_fit):
        rr = int(round(r_total * 16.0 ** (-1.0 + q / (n_fit - 1.0))))
        rsamp[q] = rr if rr > r_store else r_store + 1 + q
    for q in range(1, n_fit):
        if rsamp[q] <= rsamp[q - 1]:
            rsamp[q] = rsamp[q - 1] + 1
    z = 0.5
    za = 0.5**alpha
    dz = 1.0
    r2 = 0.0
    r3 = 0.0
    az = 0.0
    ra1 = 0.0
    ra2 = 0.0
    xs[1] = 0.5
    axs[1] = 0.0
    k = 0
    for r in range(2, r_total + 1):
        z, za, dz, r2, r3, az, ra1, ra2 = _step(alpha, A, c, z, za, dz, r2, r3, az, ra1, ra2)
        if r <= r_store:
            xs[r] = z
            axs[r] = az
        else:
            x2 = z * z
            acc[0] += z
            acc[1] += x2
            acc[2] += x2 * z
            acc[3] += az
            acc[4] += az * z
            acc[5] += az * x2
            if k < n_fit and r == rsamp[k]:
                samples[0, k] = z
                samples[1, k] = x2
                samples[2, k] = x2 * z
                samples[3, k] = az
                samples[4, k] = az * z
                samples[5, k] = az * x2
                k += 1
    return xs, axs, acc, samples, rsamp


@njit(cache=True, nogil=True, inline="always")
def map_T_scalar(alpha, A, x):
    if x <= 0.5:
        return x * (1.0 + A * x**alpha)
    return 2.0 * x - 1.0


@njit(cache=True, nogil=True)
def mc_orbit_chunk(alpha, x0, n):
    """n forward iterates of T_alpha from x0 (x0 itself not included)."""
    A = 2.0**alpha
    out = np.empty(n)
    x = x0
    for k in range(n):
        x = map_T_scalar(alpha, A, x)
        if x > 1.0:
            x = 1.0
        elif x < 0.0:
            x = 0.0
        out[k] = x
    return out


@njit(cache=True, nogil=True)
def mc_induced_chunk(alpha, x0, n_returns):
    """Forward orbit recording the first n_returns returns to [1/2, 1].

    Returns (points, taus, x_final, steps): the return points, the return
    times since the previous visit, the final state and total steps used.
    """
    A = 2.0**alpha
    pts = np.empty(n_returns)
    taus = np.empty(n_returns, dtype=np.int64)
    x = x0
    steps = 0
    got = 0
    while got < n_returns:
        tau = 0
        while True:
            x = map_T_scalar(alpha, A, x)
            if x > 1.0:
                x = 1.0
            elif x < 0.0:
                x = 0.0
            tau += 1
            steps += 1
            if x >= 0.5:
                break
            if tau > 100000000:
                break
        pts[got] = x
        taus[got] = tau
        got += 1
    return pts, taus, x, steps


@njit(cache=True, nogil=True)
def return_time_scalar(alpha, x, cap):
    A = 2.0**alpha
    k = 0
    while k < cap:
        x = map_T_scalar(alpha, A, x)
        k += 1
        if 0.5 <= x <= 1.0:
            return k
    return -1
