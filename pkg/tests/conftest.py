from __future__ import annotations

import pytest

from pmresp.density import kac_normalizer
from pmresp.solver import solve_pair

_pairs: dict = {}
_norms: dict = {}


def get_pair(alpha: float, n: int = 128):
    """Session-cached solve_pair; FD pipelines at nearby alphas reuse it."""
    key = (round(alpha, 12), n)
    if key not in _pairs:
        _pairs[key] = solve_pair(alpha, tol=1e-11, series_tol=1e-12, n=n)
    return _pairs[key]


def get_norm(alpha: float, n: int = 128):
    key = (round(alpha, 12), n)
    if key not in _norms:
        _norms[key] = kac_normalizer(alpha, get_pair(alpha, n))
    return _norms[key]


@pytest.fixture(scope="session")
def pair_bank():
    return get_pair


@pytest.fixture(scope="session")
def norm_bank():
    return get_norm
