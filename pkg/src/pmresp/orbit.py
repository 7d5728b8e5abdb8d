"""The interval map T_alpha, its left-branch inverse orbit, and branch data.

T_alpha(x) = x (1 + 2^alpha x^alpha) on [0, 1/2], 2x - 1 on (1/2, 1].
The inverse orbit z_r of a point z under the left branch carries, along
with z_r itself, the spatial derivatives z_r', z_r'', z_r''' and the
parameter derivatives d_alpha z_r, d_alpha z_r', d_alpha z_r''; everything
downstream (branch inverses, weights, transfer operators, densities) is a
linear read-out of these quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, DomainError, PreconditionError

RETURN_TIME_CAP = 10**6


@dataclass(frozen=True)
class ParamAlpha:
    """Map parameter, restricted to the open interval (0, 1)."""

    alpha: float

    def __post_init__(self):
        a = self.alpha
        if not (isinstance(a, (int, float)) and math.isfinite(a) and 0.0 < a < 1.0):
            raise DomainError(f"alpha must lie strictly inside (0, 1), got {a!r}")

    def __float__(self) -> float:
        return self.alpha


def as_alpha(alpha) -> float:
    """Validate and unwrap an alpha given as ParamAlpha or float."""
    if isinstance(alpha, ParamAlpha):
        return alpha.alpha
    return ParamAlpha(float(alpha)).alpha


@dataclass(frozen=True)
class InverseOrbitState:
    """All quantities attached to one inverse-branch depth r at (alpha, z).

    dz, d2z, d3z are derivatives with respect to the base point z0; da_*
    are partial derivatives with respect to alpha.  `underflowed` marks
    states past the flush-to-zero point of dz (below 1e-300).
    """

    r: int
    z0: float
    z: float
    dz: float
    d2z: float
    d3z: float
    da_z: float
    da_dz: float
    da_d2z: float
    underflowed: bool = False


@dataclass(frozen=True)
class BranchPartition:
    """Left-branch preimage chain x_k and induced-branch endpoints y_k."""

    xs: np.ndarray
    ys: np.ndarray


def map_T(alpha, x: float) -> float:
    """Apply T_alpha; left branch on [0, 1/2], right branch 2x-1 above."""
    a = as_alpha(alpha)
    if not (np.isscalar(x) and math.isfinite(x)) or x < 0.0 or x > 1.0:
        raise DomainError(f"x must be a finite number in [0, 1], got {x!r}")
    if x <= 0.5:
        return x * (1.0 + 2.0**a * x**a)
    return 2.0 * x - 1.0


def left_inverse(alpha, v: float) -> float:
    """The unique w in [0, 1/2] with w (1 + 2^alpha w^alpha) = v.

    Safeguarded Newton with a bisection bracket; absolute tolerance 1e-14.
    """
    a = as_alpha(alpha)
    if not math.isfinite(v) or v < 0.0 or v > 1.0:
        raise DomainError(f"v must be a finite number in [0, 1], got {v!r}")
    w = kernels.left_inverse_newton(a, 2.0**a, v)
    if abs(w * (1.0 + 2.0**a * w**a) - v) > 1e-12:
        raise ConvergenceError(f"left-branch inverse failed to converge at v={v}")
    return w


def inverse_orbit(alpha, z: float, r_max: int) -> list[InverseOrbitState]:
    """States of the inverse orbit of z at depths r = 0..r_max."""
    a = as_alpha(alpha)
    if not (0.0 < z <= 1.0):
        raise DomainError(f"z must lie in (0, 1], got {z!r}")
    if r_max < 0:
        raise PreconditionError("r_max must be nonnegative")
    Z, DZ, R2, R3, AZ, RA1, RA2, UF = kernels.orbit_table(a, np.array([z]), r_max)
    uf = int(UF[0])
    out = []
    for r in range(r_max + 1):
        dz = DZ[r, 0]
        out.append(
            InverseOrbitState(
                r=r,
                z0=z,
                z=Z[r, 0],
                dz=dz,
                d2z=R2[r, 0] * dz,
                d3z=R3[r, 0] * dz,
                da_z=AZ[r, 0],
                da_dz=RA1[r, 0] * dz,
                da_d2z=RA2[r, 0] * dz,
                underflowed=(uf >= 0 and r >= uf),
            )
        )
    return out


def orbit_arrays(alpha, z0s: np.ndarray, r_max: int):
    """Bulk form of inverse_orbit: the raw (r, lane) state table."""
    a = as_alpha(alpha)
    z0s = np.asarray(z0s, dtype=float)
    if np.any(z0s <= 0.0) or np.any(z0s > 1.0):
        raise DomainError("all base points must lie in (0, 1]")
    return kernels.orbit_table(a, z0s, r_max)


def branch_points(alpha, k_max: int) -> BranchPartition:
    """Partition data x_0 = 1, x_1 = 1/2, T_alpha(x_{k+1}) = x_k; y_k = (1+x_k)/2."""
    a = as_alpha(alpha)
    if k_max < 1:
        raise PreconditionError("k_max must be at least 1")
    xs = np.empty(k_max + 1)
    xs[0] = 1.0
    xs[1] = 0.5
    A = 2.0**a
    for k in range(1, k_max):
        xs[k + 1] = kernels.left_inverse_newton(a, A, xs[k])
    ys = 0.5 * (1.0 + xs)
    return BranchPartition(xs=xs, ys=ys)


def return_time(alpha, x: float) -> int:
    """Smallest k >= 1 with T_alpha^k(x) in [1/2, 1], for x in (1/2, 1]."""
    a = as_alpha(alpha)
    if not (0.5 < x <= 1.0):
        raise DomainError(f"x must lie in (1/2, 1], got {x!r}")
    k = kernels.return_time_scalar(a, x, RETURN_TIME_CAP)
    if k < 0:
        raise ConvergenceError(
            f"return time exceeded {RETURN_TIME_CAP} iterations; "
            f"x={x!r} is numerically indistinguishable from a branch endpoint"
        )
    return k


def logg(r: int) -> float:
    """1 for r <= e, log(r) otherwise (so always >= 1)."""
    if r <= 2:
        return 1.0
    return math.log(r)


def logg_array(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.where(r <= 2.0, 1.0, np.log(np.maximum(r, 3.0)))
