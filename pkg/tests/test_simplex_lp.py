import numpy as np
import pytest
from scipy.optimize import linprog as highs

from tpmkl.errors import SolverStallError
from tpmkl.simplex_lp import linprog


@pytest.mark.parametrize("seed", range(40))
def test_against_highs(seed):
    rng = np.random.default_rng(seed)
    nv, mu, me = rng.integers(2, 8), rng.integers(1, 8), rng.integers(0, 3)
    c = rng.normal(size=nv)
    A, b = rng.normal(size=(mu, nv)), rng.normal(size=mu) + 1
    Ae = rng.normal(size=(me, nv))
    be = Ae @ rng.uniform(0, 1, nv)
    up = np.where(rng.random(nv) < 0.5, rng.uniform(0.5, 2, nv), np.inf)
    bounds = [(0, u if np.isfinite(u) else None) for u in up]
    ref = highs(c, A, b, Ae if me else None, be if me else None, bounds=bounds, method="highs")
    if ref.status != 0:
        with pytest.raises(SolverStallError):
            linprog(c, A, b, Ae if me else None, be if me else None, upper=up)
        return
    got = linprog(c, A, b, Ae if me else None, be if me else None, upper=up)
    assert abs(got.fun - ref.fun) <= 1e-8 * (1 + abs(ref.fun))
    assert np.all(A @ got.x <= b + 1e-8) and np.all(got.x >= -1e-12)
    assert np.all(got.x <= up + 1e-12)
    assert np.allclose(got.y_ub, ref.ineqlin.marginals, atol=1e-7)


def test_degenerate_problem_terminates():
    # a classic cycling example for the pure Dantzig rule (Beale)
    c = np.array([-0.75, 150, -0.02, 6])
    A = np.array([[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]])
    b = np.array([0, 0, 1.0])
    res = linprog(c, A, b)
    assert abs(res.fun + 0.05) <= 1e-12


def test_unbounded_and_infeasible():
    with pytest.raises(SolverStallError):
        linprog([-1.0, 0.0], [[1.0, -1.0]], [1.0])
    with pytest.raises(SolverStallError):
        linprog([1.0], A_eq=[[1.0]], b_eq=[2.0], upper=[1.0])
