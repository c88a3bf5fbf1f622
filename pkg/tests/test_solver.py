import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linksynth.constraints import ConstraintEvaluation
from linksynth.model import SolverSettings
from linksynth.solver import (
    CONVERGED, ConstraintTerm, KktSystem, ObjectiveModel, RankDeficientError, assemble_kkt, solve_kkt,
    sqp_minimize,
)


class Quadratic:
    """0.5 x'Ax + b'x subject to linear rows ``C x = d``."""

    def __init__(self, A, b, C=None, d=None):
        self.A, self.b = np.asarray(A, float), np.asarray(b, float)
        self.C = np.zeros((0, len(b))) if C is None else np.asarray(C, float)
        self.d = np.zeros(0) if d is None else np.asarray(d, float)

    def values(self, x):
        return float(0.5 * x @ self.A @ x + self.b @ x), self.C @ x - self.d

    def model(self, x):
        f, c = self.values(x)
        terms = []
        for row, cz in zip(self.C, c):
            # one term per row; slots address the first four variables
            slots = tuple(range(4))
            terms.append(ConstraintTerm(ConstraintEvaluation(cz, row[:4], np.zeros((4, 4))), slots))
        return ObjectiveModel(f, self.A @ x + self.b, self.A), terms


def _scalar_case():
    obj = ObjectiveModel(4.0, np.array([-4.0]), np.array([[2.0]]))
    term = ConstraintTerm(ConstraintEvaluation(-1.0, np.array([1.0, 0, 0, 0]), np.zeros((4, 4))), (0, -1, -1, -1))
    return obj, term


def test_assemble_scalar_example():
    obj, term = _scalar_case()
    sys = assemble_kkt(obj, [term])
    np.testing.assert_array_equal(sys.H, [[2.0]])
    np.testing.assert_array_equal(sys.E, [[1.0]])
    np.testing.assert_array_equal(sys.G, [-4.0])
    np.testing.assert_array_equal(sys.R, [-1.0])


def test_scalar_step_is_exact():
    # min (x-2)^2 s.t. x = 1: one step lands on x = 1; grad f = E^T lam gives lam = -2
    obj, term = _scalar_case()
    step = solve_kkt(assemble_kkt(obj, [term]))
    assert step.dx[0] == pytest.approx(1.0)
    assert step.dlam[0] == pytest.approx(-2.0)
    assert not step.regularized


def test_slot_out_of_range():
    obj, _ = _scalar_case()
    bad = ConstraintTerm(ConstraintEvaluation(0.0, np.ones(4), np.zeros((4, 4))), (0, 1, -1, -1))
    with pytest.raises(IndexError):
        assemble_kkt(obj, [bad])


def test_unconstrained_newton_system():
    H = np.array([[3.0, 1.0], [1.0, 2.0]])
    G = np.array([1.0, -1.0])
    step = solve_kkt(KktSystem(H, np.zeros((0, 2)), G, np.zeros(0)))
    np.testing.assert_allclose(step.dx, -np.linalg.solve(H, G))


def test_negative_curvature_is_shifted():
    sys = KktSystem(-np.eye(2), np.zeros((0, 2)), np.array([1.0, 0.0]), np.zeros(0))
    step = solve_kkt(sys, SolverSettings(curvature="shift"))
    assert step.regularized and step.tau > 0
    assert np.all(np.isfinite(step.dx))
    assert sys.G @ step.dx < 0


def test_indefinite_newton_mode_flags_without_shift():
    H = np.diag([2.0, -1.0])
    step = solve_kkt(KktSystem(H, np.zeros((0, 2)), np.array([1.0, 1.0]), np.zeros(0)))
    assert step.regularized and step.tau == 0.0
    np.testing.assert_allclose(step.dx, [-0.5, 1.0])


def test_duplicate_rows_are_rank_deficient():
    E = np.array([[1.0, -1.0, 0.0], [1.0, -1.0, 0.0]])
    with pytest.raises(RankDeficientError) as err:
        solve_kkt(KktSystem(np.eye(3), E, np.zeros(3), np.array([0.1, 0.1])))
    assert err.value.rows == [1] or err.value.rows == [0]


def test_non_finite_blocks_raise():
    with pytest.raises(ArithmeticError):
        solve_kkt(KktSystem(np.array([[np.nan]]), np.zeros((0, 1)), np.zeros(1), np.zeros(0)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_step_satisfies_linearised_constraints(seed, r):
    rng = np.random.default_rng(seed)
    n = 6
    M = rng.normal(size=(n, n))
    sys = KktSystem(0.5 * (M + M.T), rng.normal(size=(r, n)), rng.normal(size=n), rng.normal(size=r))
    step = solve_kkt(sys, SolverSettings(curvature="shift"))
    assert np.max(np.abs(sys.E @ step.dx + sys.R)) < 1e-10 * max(1.0, np.max(np.abs(sys.R)))


def test_convex_quadratic_converges_in_one_iteration():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    res = sqp_minimize(Quadratic(A, b), np.array([5.0, -7.0]))
    assert res.status == CONVERGED
    np.testing.assert_allclose(res.x, -np.linalg.solve(A, b), atol=1e-12)
    # one step, then the check that confirms it
    assert res.trace[1].step_norm > 0 and res.iterations <= 2


def test_constrained_quadratic_satisfies_kkt():
    A = np.diag([2.0, 4.0, 6.0, 8.0])
    b = np.array([1.0, -1.0, 0.5, 0.0])
    C = np.array([[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 0.0, 2.0]])
    d = np.array([1.0, 0.5])
    res = sqp_minimize(Quadratic(A, b, C, d), np.zeros(4))
    assert res.status == CONVERGED
    g = A @ res.x + b
    assert np.max(np.abs(g - C.T @ res.multipliers)) < 1e-8 * max(1, np.max(np.abs(g)))
    assert np.max(np.abs(C @ res.x - d)) < 1e-10


def test_fixed_point_start():
    res = sqp_minimize(Quadratic(np.eye(2), np.zeros(2)), np.zeros(2))
    assert res.status == CONVERGED and res.iterations <= 1


@pytest.mark.parametrize("control", ["halving", "damped"])
def test_rosenbrock_both_step_controls(control):
    class Rosen:
        def values(self, x):
            return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2), np.zeros(0)

        def model(self, x):
            f, _ = self.values(x)
            g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
            H = np.array([[2 - 400 * (x[1] - 3 * x[0] ** 2), -400 * x[0]], [-400 * x[0], 200.0]])
            return ObjectiveModel(f, g, H), []

    res = sqp_minimize(Rosen(), np.array([-1.2, 1.0]), settings=SolverSettings(curvature="shift"),
                       step_control=control)
    assert res.status == CONVERGED
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)
    assert all(np.isfinite(r.objective) for r in res.trace)


def test_non_finite_start_rejected():
    with pytest.raises(ValueError):
        sqp_minimize(Quadratic(np.eye(1), np.zeros(1)), np.array([np.inf]))


def test_unknown_step_control():
    with pytest.raises(ValueError):
        sqp_minimize(Quadratic(np.eye(1), np.zeros(1)), np.zeros(1), step_control="trust")
