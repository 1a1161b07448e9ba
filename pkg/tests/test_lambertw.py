import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from sptrade.lambertw import BRANCH_POINT, LambertDomainError, lambert_w0


def residual(x):
    w = lambert_w0(x)
    return abs(w * math.exp(w) - x)


@pytest.mark.parametrize("x, expected", [(0.0, 0.0), (math.e, 1.0), (-math.exp(-1.0), -1.0)])
def test_known_values(x, expected):
    assert lambert_w0(x) == pytest.approx(expected, abs=1e-12)


def test_rejects_below_branch_point():
    with pytest.raises(LambertDomainError):
        lambert_w0(-0.5)
    with pytest.raises(LambertDomainError):
        lambert_w0(float("nan"))


def test_grid_residual():
    xs = np.concatenate([np.linspace(BRANCH_POINT, 10.0, 500), np.geomspace(10.0, 1e6, 500)])
    assert max(residual(x) / max(1.0, abs(x)) for x in xs) <= 1e-12


def test_matches_scipy():
    for x in np.concatenate([np.linspace(-0.36, 5, 200), np.geomspace(5, 1e12, 200)]):
        assert lambert_w0(x) == pytest.approx(lambertw(x).real, rel=1e-13, abs=1e-13)


@given(st.floats(min_value=BRANCH_POINT, max_value=1e15))
def test_residual_identity(x):
    assert residual(x) <= 1e-12 * max(1.0, abs(x))


@settings(max_examples=300)
@given(st.floats(min_value=-1.0 + 1e-6, max_value=20.0))
def test_round_trip(w):
    # d/dw (w e^w) = (1 + w) e^w vanishes at the branch point, so the inverse
    # amplifies rounding in x by 1 / ((1 + w) e^w); scale the tolerance by it.
    x = w * math.exp(w)
    cond = max(1.0, abs(x)) / ((1.0 + w) * math.exp(w))
    assert abs(lambert_w0(x) - w) <= 1e-10 + 8e-16 * cond


@given(st.floats(min_value=BRANCH_POINT, max_value=1e8), st.floats(min_value=1e-9, max_value=1e3))
def test_increasing(x, dx):
    assert lambert_w0(x + dx) >= lambert_w0(x)
