import numpy as np
import pytest
from hypothesis import given, strategies as st

from hivpip.estimates import (
    EstimateConstants,
    functional_error_bound,
    minimizer_bound_lipschitz,
    minimizer_bound_residual,
)
from hivpip.mesh import TimeMesh, transfer_cell_field

M4 = TimeMesh.uniform(4.0, 4)


def test_functional_bound():
    assert functional_error_bound(np.ones(4), np.ones(4), M4, 1.0) == pytest.approx(4.0)
    assert functional_error_bound(np.zeros(4), np.ones(4), M4) == 0.0
    assert functional_error_bound(np.ones(4), np.zeros(4), M4) == 0.0


def test_lipschitz_bound():
    assert minimizer_bound_lipschitz(np.ones(4), M4, D=2.0, CI=1.0, gamma=0.5) == pytest.approx(8.0)
    assert minimizer_bound_lipschitz(np.zeros(4), M4) == 0.0
    with pytest.raises(ValueError):
        minimizer_bound_lipschitz(np.ones(4), M4, gamma=0.0)


def test_lipschitz_bound_halves_under_uniform_refinement():
    m = TimeMesh.uniform(300.0, 7)
    eta = np.linspace(0.1, 0.9, 7)
    fine = m.refine(range(7))
    a = minimizer_bound_lipschitz(eta, m)
    b = minimizer_bound_lipschitz(transfer_cell_field(m, eta, fine), fine)
    assert b == pytest.approx(a / 2)


def test_residual_bound():
    # ||R|| = 1 and ||tau eta|| = 4 on a single cell of width 1
    m = TimeMesh.uniform(1.0, 1)
    assert minimizer_bound_residual([1.0], [4.0], m, CI=1.0, gamma=0.25) == pytest.approx(4.0)
    assert minimizer_bound_residual([0.0], [4.0], m) == 0.0
    with pytest.raises(ValueError):
        minimizer_bound_residual([1.0], [4.0], m, gamma=0.0)


@given(st.floats(0.01, 100), st.integers(0, 2**31))
def test_residual_bound_square_root_scaling(c, seed):
    rng = np.random.default_rng(seed)
    m = TimeMesh.uniform(300.0, 6)
    R, eta = rng.standard_normal(6), rng.uniform(size=6)
    base = minimizer_bound_residual(R, eta, m, gamma=0.3)
    assert base >= 0
    assert minimizer_bound_residual(c * c * R, eta, m, gamma=0.3) == pytest.approx(c * base)


def test_constants():
    assert EstimateConstants().nominal
    assert not EstimateConstants(D=2.0).nominal
    with pytest.raises(ValueError):
        EstimateConstants(CI=0.0)
