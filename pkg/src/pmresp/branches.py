"""Inverse branches of the induced map F_alpha = T_alpha^tau on [1/2, 1].

Branch r of F_alpha maps (y_{r+1}, y_r) onto (1/2, 1); its inverse at z and
the branch weight are read off the inverse orbit of z:

    F_{alpha,r}^{-1}(z) = (z_r + 1) / 2,      G_{alpha,r}(z) = z_r' / 2,

with all z- and alpha-derivatives inherited from the orbit recursions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .orbit import InverseOrbitState, as_alpha, inverse_orbit


@dataclass(frozen=True)
class BranchEval:
    """Inverse, weight and their derivatives for one branch at one point."""

    r: int
    inv: float        # F_{alpha,r}^{-1}(z)
    weight: float     # G_{alpha,r}(z)
    dweight: float    # G'
    d2weight: float   # G''
    da_inv: float     # d_alpha F^{-1}
    da_weight: float  # d_alpha G
    da_dweight: float  # d_alpha G'


class OrbitBranches:
    """Branch evaluations at a fixed (alpha, z) sharing one inverse orbit.

    The orbit is computed once up to r_max at construction; this is the
    memoization unit shared by transfer-operator style sweeps.
    """

    def __init__(self, alpha, z: float, r_max: int):
        self.alpha = as_alpha(alpha)
        self.z = float(z)
        self.r_max = int(r_max)
        self.states = inverse_orbit(self.alpha, self.z, self.r_max)

    def branch(self, r: int) -> BranchEval:
        if not 0 <= r <= self.r_max:
            raise PreconditionError(f"branch index {r} outside cached range 0..{self.r_max}")
        return _from_state(self.states[r])


def _from_state(s: InverseOrbitState) -> BranchEval:
    return BranchEval(
        r=s.r,
        inv=0.5 * (s.z + 1.0),
        weight=0.5 * s.dz,
        dweight=0.5 * s.d2z,
        d2weight=0.5 * s.d3z,
        da_inv=0.5 * s.da_z,
        da_weight=0.5 * s.da_dz,
        da_dweight=0.5 * s.da_d2z,
    )


def eval_branch(alpha, r: int, z: float) -> BranchEval:
    """Evaluate branch r of the induced map at z in [1/2, 1]."""
    if not (0.5 <= z <= 1.0):
        raise DomainError(f"z must lie in [1/2, 1], got {z!r}")
    if r < 0:
        raise PreconditionError("branch index must be nonnegative")
    return _from_state(inverse_orbit(alpha, z, r)[r])


def induced_observable(phi, alpha, r: int, z: float) -> float:
    """(Phi_alpha o F_{alpha,r}^{-1})(z) for the induced observable of phi.

    Phi_alpha sums phi along the excursion, so along the inverse orbit
    this is phi((z_r+1)/2) + sum_{j=1..r} phi(z_j); for phi == 1 it equals
    the return time r + 1 on branch r.
    """
    if not (0.5 <= z <= 1.0):
        raise DomainError(f"z must lie in [1/2, 1], got {z!r}")
    states = inverse_orbit(alpha, z, r)
    total = phi.eval(0.5 * (states[r].z + 1.0))
    for j in range(1, r + 1):
        total += phi.eval(states[j].z)
    return float(total)


def da_induced_observable(phi, alpha, r: int, z: float) -> float:
    """alpha-derivative of induced_observable for continuously differentiable phi.

    Equals phi'((z_r+1)/2) da_z_r / 2 + sum_{j=1..r} phi'(z_j) da_z_j.
    """
    if phi.deriv is None:
        raise PreconditionError("da_induced_observable requires an observable with a derivative")
    states = inverse_orbit(alpha, z, r)
    total = phi.deriv(0.5 * (states[r].z + 1.0)) * 0.5 * states[r].da_z
    for j in range(1, r + 1):
        total += phi.deriv(states[j].z) * states[j].da_z
    return float(total)


def branch_weight_sum(alpha, z: float, r_max: int) -> np.ndarray:
    """Partial sums over r <= R of the branch weights at z, R = 0..r_max."""
    ob = OrbitBranches(alpha, z, r_max)
    w = np.array([0.5 * s.dz for s in ob.states])
    return np.cumsum(w)
