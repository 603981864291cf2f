import numpy as np
import pytest

from ciprecoding.oracle import active_set_qp


def test_unconstrained_minimizer():
    r = active_set_qp([2.0, -4.0])
    assert np.allclose(r.x, [-2.0, 4.0])
    assert r.objective == pytest.approx(-10.0)


def test_box_projection():
    # nearest point to (3, -5) in the box [-1, 1]^2
    G = np.vstack([np.eye(2), -np.eye(2)])
    r = active_set_qp([-3.0, 5.0], G=G, h=np.ones(4))
    assert np.allclose(r.x, [1.0, -1.0])
    assert set(r.active) == {0, 3}


def test_equality_with_inequality():
    r = active_set_qp(np.zeros(2), E=[[1.0, 1.0]], e=[2.0], G=[[-1.0, 0.0]], h=[-1.5])
    assert np.allclose(r.x, [1.5, 0.5])


def test_infeasible_reported():
    r = active_set_qp(np.zeros(1), G=[[1.0], [-1.0]], h=[-1.0, -1.0])
    assert not r.feasible
    assert r.objective == np.inf


def test_weighted_quadratic():
    r = active_set_qp(np.zeros(2), G=[[-1.0, -1.0]], h=[-3.0], quad=[1.0, 2.0])
    # minimizer of x1^2/2 + x2^2 on x1 + x2 = 3 is (2, 1)
    assert np.allclose(r.x, [2.0, 1.0])


def test_refuses_large_enumerations():
    with pytest.raises(ValueError):
        active_set_qp(np.zeros(2), G=np.ones((20, 2)), h=np.ones(20))
