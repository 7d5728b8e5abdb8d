"""Collocation representation of smooth functions on the interval I = [1/2, 1].

Functions are stored by their values at Chebyshev-Lobatto nodes and
manipulated spectrally: barycentric interpolation, differentiation
matrices built from the barycentric weights, and Clenshaw-Curtis
quadrature against the normalized Lebesgue measure m (dm = 2 dz on I).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy.fft import dct

from .errors import DomainError, PreconditionError

I_LEFT = 0.5
I_RIGHT = 1.0
I_LENGTH = I_RIGHT - I_LEFT   # |I| = 1/2

MIN_NODES = 8
MAX_NODES = 4096


@lru_cache(maxsize=32)
def chebyshev_grid(n: int) -> "ChebGrid":
    """Shared grid data for ``n`` Chebyshev-Lobatto nodes on I."""
    return ChebGrid(n)


class ChebGrid:
    """Chebyshev-Lobatto nodes on I with barycentric and quadrature data.

    Nodes are stored increasing, ``nodes[0] = 1/2`` and ``nodes[-1] = 1``.
    """

    def __init__(self, n: int):
        if not MIN_NODES <= n <= MAX_NODES:
            raise PreconditionError(f"node count must be in [{MIN_NODES}, {MAX_NODES}], got {n}")
        self.n = n
        j = np.arange(n)
        # u = -cos(j pi / (n-1)) is increasing in [-1, 1]; x = 1/2 + (u+1)/4
        self.u = -np.cos(j * np.pi / (n - 1))
        self.u[0] = -1.0
        self.u[-1] = 1.0
        self.nodes = I_LEFT + (self.u + 1.0) * (I_LENGTH / 2.0)
        self.nodes[0] = I_LEFT
        self.nodes[-1] = I_RIGHT
        # barycentric weights for Chebyshev-Lobatto points
        w = np.ones(n)
        w[1::2] = -1.0
        w[0] *= 0.5
        w[-1] *= 0.5
        self.bary_w = w
        self._diff1: np.ndarray | None = None
        self._diff2: np.ndarray | None = None
        self._quad_w: np.ndarray | None = None

    @property
    def diff1(self) -> np.ndarray:
        if self._diff1 is None:
            self._diff1 = _diff_matrix(self.nodes, self.bary_w)
        return self._diff1

    @property
    def diff2(self) -> np.ndarray:
        # Welfert's barycentric second-derivative formula (not D @ D):
        # D2[i,j] = 2 D1[i,j] (D1[i,i] - 1/(x_i - x_j)), negative-sum diagonal
        if self._diff2 is None:
            D1 = self.diff1
            dx = self.nodes[:, None] - self.nodes[None, :]
            np.fill_diagonal(dx, 1.0)
            D2 = 2.0 * D1 * (np.diag(D1)[:, None] - 1.0 / dx)
            np.fill_diagonal(D2, 0.0)
            np.fill_diagonal(D2, -D2.sum(axis=1))
            self._diff2 = D2
        return self._diff2

    @property
    def quad_weights_m(self) -> np.ndarray:
        """Weights w with w @ values = integrate_m(f) (Clenshaw-Curtis)."""
        if self._quad_w is None:
            n = self.n
            k = np.arange(n)
            # integral of T_k over [-1,1]: 2/(1-k^2) for even k, else 0
            tk = np.zeros(n)
            ev = k % 2 == 0
            tk[ev] = 2.0 / (1.0 - k[ev].astype(float) ** 2)
            # coefficient matrix columns: DCT-I of unit vectors (values are in
            # increasing-x order, which is reversed Chebyshev order)
            eye = np.eye(n)[::-1, :]
            coeffs = dct(eye, type=1, axis=0) / (n - 1)
            coeffs[0, :] *= 0.5
            coeffs[-1, :] *= 0.5
            # integral over u in [-1,1], then du -> dx (factor 1/4) and 1/|I| = 2
            self._quad_w = (tk @ coeffs) * 0.25 * 2.0
        return self._quad_w

    def bary_matrix(self, x: np.ndarray) -> np.ndarray:
        """Interpolation matrix A with A @ values = f(x) for points x in I."""
        x = np.asarray(x, dtype=float)
        d = x[:, None] - self.nodes[None, :]
        exact = np.isclose(d, 0.0, atol=1e-300)
        d = np.where(exact, 1.0, d)
        c = self.bary_w[None, :] / d
        A = c / c.sum(axis=1)[:, None]
        hit = exact.any(axis=1)
        if np.any(hit):
            A[hit] = 0.0
            rows, cols = np.nonzero(exact)
            A[rows, cols] = 1.0
        return A


def _diff_matrix(nodes: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = len(nodes)
    dx = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    # negative-sum trick for the diagonal
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A smooth function on I represented by values at collocation nodes."""

    nodes: np.ndarray
    values: np.ndarray
    grid: ChebGrid = field(repr=False, compare=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("SampledFunction values must be finite")
        if len(self.values) != self.grid.n:
            raise PreconditionError("values length does not match node count")

    @property
    def n(self) -> int:
        return self.grid.n

    def __call__(self, x):
        return interpolate(self, x)

    def with_values(self, values: np.ndarray) -> "SampledFunction":
        return SampledFunction(self.nodes, np.asarray(values, dtype=float), self.grid)


def sample(fn, n: int = 128) -> SampledFunction:
    """Sample a callable on the n-node grid."""
    grid = chebyshev_grid(n)
    vals = np.asarray([float(fn(x)) for x in grid.nodes], dtype=float)
    return SampledFunction(grid.nodes, vals, grid)


def from_values(values: np.ndarray, n: int | None = None) -> SampledFunction:
    values = np.asarray(values, dtype=float)
    grid = chebyshev_grid(len(values) if n is None else n)
    return SampledFunction(grid.nodes, values, grid)


def constant(c: float, n: int = 128) -> SampledFunction:
    grid = chebyshev_grid(n)
    return SampledFunction(grid.nodes, np.full(grid.n, float(c)), grid)


def interpolate(f: SampledFunction, x) -> float | np.ndarray:
    """Barycentric interpolation of f at x (scalar or array) in I.

    Exact at the nodes; spectrally accurate for smooth f.
    """
    scalar = np.isscalar(x)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa < I_LEFT - 1e-12) or np.any(xa > I_RIGHT + 1e-12):
        raise DomainError(f"evaluation point outside [{I_LEFT}, {I_RIGHT}]")
    xa = np.clip(xa, I_LEFT, I_RIGHT)
    out = f.grid.bary_matrix(xa) @ f.values
    return float(out[0]) if scalar else out


def derivative(f: SampledFunction, order: int = 1) -> SampledFunction:
    """Spectral derivative of order 1 or 2 as a new SampledFunction."""
    if order == 1:
        return f.with_values(f.grid.diff1 @ f.values)
    if order == 2:
        return f.with_values(f.grid.diff2 @ f.values)
    raise PreconditionError("derivative order must be 1 or 2")


def integrate_m(f: SampledFunction) -> float:
    """Integral against the normalized Lebesgue measure: 2 * int_{1/2}^1 f."""
    return float(f.grid.quad_weights_m @ f.values)


def cheb_coefficients(f: SampledFunction) -> np.ndarray:
    """Chebyshev coefficients in the variable u = 4x - 3 on [-1, 1]."""
    n = f.grid.n
    c = dct(f.values[::-1], type=1) / (n - 1)
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


def antiderivative_from_left(f: SampledFunction):
    """Return H with H(x) = int_{1/2}^x f, as a callable on I (vectorized)."""
    c = cheb_coefficients(f)
    ci = _cheb.chebint(c, lbnd=-1.0, scl=0.25)  # du -> dx factor 1/4

    def H(x):
        u = 4.0 * np.asarray(x, dtype=float) - 3.0
        return _cheb.chebval(u, ci)

    return H


@dataclass(frozen=True)
class NormReport:
    """Sup-norms of f and its first two derivatives, plus the paper-style
    logarithmic norms L = ||f'/f||_inf and P = ||f''/f||_inf (positive f only)."""

    c0: float
    c1: float
    c2: float
    L: float | None = None
    P: float | None = None

    @property
    def c1_norm(self) -> float:
        return max(self.c0, self.c1)

    @property
    def c2_norm(self) -> float:
        return max(self.c0, self.c1, self.c2)


def norms(f: SampledFunction, oversample: int = 10) -> NormReport:
    """Estimate sup-norms on an oversampled grid (10N points by default).

    L and P are included only when f is strictly positive on the fine grid;
    requesting them implicitly for a sign-changing f simply omits them.
    """
    n_fine = oversample * f.grid.n
    xs = np.linspace(I_LEFT, I_RIGHT, n_fine)
    A = f.grid.bary_matrix(xs)
    v0 = A @ f.values
    v1 = A @ (f.grid.diff1 @ f.values)
    v2 = A @ (f.grid.diff2 @ f.values)
    c0 = float(np.max(np.abs(v0)))
    c1 = float(np.max(np.abs(v1)))
    c2 = float(np.max(np.abs(v2)))
    L = P = None
    if np.min(v0) > 0.0:
        L = float(np.max(np.abs(v1 / v0)))
        P = float(np.max(np.abs(v2 / v0)))
    return NormReport(c0=c0, c1=c1, c2=c2, L=L, P=P)


def require_positive_norms(f: SampledFunction) -> NormReport:
    """norms(f) but raising if f is not strictly positive (L/P requested)."""
    rep = norms(f)
    if rep.L is None:
        raise PreconditionError("L/P norms require a strictly positive function")
    return rep


def to_csv(f: SampledFunction, header_lines: list[str] | None = None) -> str:
    """Serialize as node,value rows with 17 significant digits."""
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    buf.write("node,value\n")
    for x, v in zip(f.nodes, f.values):
        buf.write(f"{x:.17g},{v:.17g}\n")
    return buf.getvalue()


def from_csv(text: str) -> SampledFunction:
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if rows and rows[0].strip().lower().startswith("node"):
        rows = rows[1:]
    vals = np.array([float(r.split(",")[1]) for r in rows])
    return from_values(vals)
