"""Invariant densities and linear response for Pomeau-Manneville type maps.

The package computes the induced-map invariant density h_alpha on [1/2, 1],
its parameter derivative, the unit-interval density rho_alpha with
d_alpha rho_alpha, and the response derivative d/d_alpha of observable
averages, by two independent routes, together with a Monte Carlo and
inequality-audit harness.
"""

__version__ = "0.1.0"

from .orbit import ParamAlpha, InverseOrbitState, BranchPartition  # noqa: F401
from .orbit import map_T, left_inverse, inverse_orbit, branch_points, return_time, logg  # noqa: F401
from .space import SampledFunction, NormReport, sample, constant  # noqa: F401
from .space import interpolate, derivative, integrate_m, norms  # noqa: F401
from .branches import BranchEval, eval_branch, induced_observable, da_induced_observable  # noqa: F401
from .transfer import TruncationPlan, plan_truncation, OperatorBundle, build_operators  # noqa: F401
from .transfer import apply_P, apply_Q  # noqa: F401
from .solver import DensityPair, solve_h, solve_dh, contraction_probe  # noqa: F401
from .density import UnitDensityEval, KacNormalizer, eval_g, eval_rho, kac_normalizer  # noqa: F401
from .response import Observable, ResponseResult, expectation_kac, response_kac  # noqa: F401
from .response import response_density, sweep  # noqa: F401
