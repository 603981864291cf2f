import numpy as np
import pytest

from ciprecoding import conic
from ciprecoding.conic import SOC, ConicProblem, SolverOptions, Status, residuals, solve
from ciprecoding.oracle import active_set_qp


def _random_lp_qp(rng, n=4, m=6):
    return rng.standard_normal(n), rng.standard_normal((m, n)), rng.standard_normal(m)


def test_projection_onto_half_space():
    sol = solve(ConicProblem(q=np.zeros(2), G=[[-1.0, 0.0]], h=[-3.0]))
    assert sol.status is Status.OPTIMAL
    assert np.allclose(sol.x, [3.0, 0.0], atol=1e-8)
    assert sol.objective == pytest.approx(4.5, rel=1e-9)
    assert sol.z_lin[0] == pytest.approx(3.0, rel=1e-6)


def test_empty_cone_section_is_infeasible():
    # ||(x1, x2)|| <= x3 - 1 together with x3 <= 0
    cone = SOC(np.eye(2, 3), np.zeros(2), np.array([0.0, 0.0, 1.0]), -1.0)
    sol = solve(ConicProblem(q=np.zeros(3), G=[[0.0, 0.0, 1.0]], h=[0.0], socs=[cone]))
    assert sol.status is Status.PRIMAL_INFEASIBLE
    assert sol.certificate is not None
    assert sol.x is None


def test_unbounded_linear_objective():
    sol = solve(ConicProblem(q=[-1.0, 0.0], G=[[0.0, 1.0]], h=[1.0], quad=np.zeros(2)))
    assert sol.status is Status.DUAL_INFEASIBLE


@pytest.mark.parametrize("seed", range(20))
def test_matches_active_set_oracle(seed):
    rng = np.random.default_rng(seed)
    q, G, h = _random_lp_qp(rng)
    ref = active_set_qp(q, G=G, h=h)
    sol = solve(ConicProblem(q=q, G=G, h=h))
    assert sol.optimal == ref.feasible
    if ref.feasible:
        assert sol.objective == pytest.approx(ref.objective, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_equalities_match_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    q, G, h = _random_lp_qp(rng, n=5, m=5)
    E, e = rng.standard_normal((2, 5)), rng.standard_normal(2)
    quad = rng.uniform(0.5, 2.0, 5)
    ref = active_set_qp(q, E, e, G, h, quad=quad)
    sol = solve(ConicProblem(q=q, E=E, e=e, G=G, h=h, quad=quad))
    assert sol.optimal == ref.feasible
    if ref.feasible:
        assert sol.objective == pytest.approx(ref.objective, rel=1e-6, abs=1e-9)


def test_second_order_cone_projection():
    # nearest point to (3, 4, 0) in {||(x1, x2)|| <= x3}: (1.5, 2, 2.5)
    cone = SOC(np.eye(2, 3), np.zeros(2), np.array([0.0, 0.0, 1.0]))
    sol = solve(ConicProblem(q=-np.array([3.0, 4.0, 0.0]), socs=[cone]))
    assert sol.optimal
    assert np.allclose(sol.x, [1.5, 2.0, 2.5], atol=1e-7)


def test_residuals_report():
    p = ConicProblem(q=np.zeros(2), G=[[1.0, 0.0], [0.0, 1.0]], h=[1.0, 1.0])
    r = residuals(p, [0.0, 0.0])
    assert r.max_violation == 0.0
    r = residuals(p, [1.5, 0.0])
    assert r.inequality[0] == pytest.approx(0.5)
    assert r.inequality[1] == 0.0
    assert r.objective == pytest.approx(1.125)


def test_optimal_runs_are_feasible(rng):
    for _ in range(30):
        q, G, h = _random_lp_qp(rng, 6, 8)
        cones = [SOC(rng.standard_normal((3, 6)), rng.standard_normal(3), rng.standard_normal(6), 5.0)]
        p = ConicProblem(q=q, G=G, h=h, socs=cones)
        sol = solve(p)
        if sol.optimal:
            scale = 1.0 + p.data_norm()
            assert residuals(p, sol.x).max_violation <= 1e-8 * scale * max(1.0, np.abs(sol.x).max())


def test_status_invariant_under_row_scaling(rng):
    for _ in range(30):
        q, G, h = _random_lp_qp(rng, 3, 7)
        d = rng.uniform(0.01, 100.0, G.shape[0])
        a = solve(ConicProblem(q=q, G=G, h=h))
        b = solve(ConicProblem(q=q, G=d[:, None] * G, h=d * h))
        assert a.status is b.status
        if a.optimal:
            assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-9)


def test_adding_constraints_never_lowers_objective(rng):
    for _ in range(10):
        q, G, h = _random_lp_qp(rng, 4, 8)
        h = np.abs(h) + 0.1  # keeps the origin feasible for every prefix
        objs = [solve(ConicProblem(q=q, G=G[:k], h=h[:k])).objective for k in range(9)]
        assert all(b >= a - 1e-8 for a, b in zip(objs, objs[1:]))


def test_malformed_dimensions_rejected():
    with pytest.raises(ValueError):
        ConicProblem(q=np.zeros(3), G=np.ones((2, 2)), h=np.ones(2))
    with pytest.raises(ValueError):
        ConicProblem(q=np.zeros(3), E=np.ones((1, 3)), e=np.ones(2))
    with pytest.raises(ValueError):
        ConicProblem(q=np.zeros(2), socs=[SOC(np.eye(2), np.zeros(3), np.zeros(2))])
    with pytest.raises(ValueError):
        ConicProblem(q=np.zeros(2), quad=[-1.0, 1.0])


def test_iteration_cap_reports_best_iterate():
    sol = solve(ConicProblem(q=np.zeros(2), G=[[-1.0, -1.0]], h=[-2.0]),
                SolverOptions(max_iters=1, polish=False))
    assert sol.status is Status.MAX_ITERATIONS
    assert sol.iterations == 1
    assert isinstance(sol.residuals, conic.Residuals)


def test_polish_makes_active_rows_exact(rng):
    q, G, h = _random_lp_qp(rng)
    sol = solve(ConicProblem(q=q, G=G, h=h))
    assert sol.optimal
    if sol.polished:
        slack = h - G @ sol.x
        assert np.min(slack) > -1e-12
