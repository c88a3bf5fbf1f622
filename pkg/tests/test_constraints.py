import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linksynth.constraints import (
    SQUARED_HESSIAN, evaluate_pair, is_degenerate, pair_constraint_gradient, pair_constraint_hessian,
    pair_constraint_value,
)

coord = st.floats(-20, 20, allow_nan=False)


def _fd_grad(fun, x, h=1e-6):
    out = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize("form", ["euclidean", "squared"])
def test_derivatives_match_central_differences_over_many_configurations(form):
    rng = np.random.default_rng(11)
    worst_g = worst_h = 0.0
    for _ in range(1000):
        x = rng.uniform(-10, 10, 4)
        if np.hypot(x[2] - x[0], x[3] - x[1]) < 0.1:
            continue
        D = rng.uniform(0.5, 10)
        c = lambda y: pair_constraint_value(y[:2], y[2:], D, form)
        g = pair_constraint_gradient(x[:2], x[2:], D, form)
        H = pair_constraint_hessian(x[:2], x[2:], D, form)
        gfd = _fd_grad(c, x)
        Hfd = np.array([_fd_grad(lambda y: pair_constraint_gradient(y[:2], y[2:], D, form)[k], x)
                        for k in range(4)])
        worst_g = max(worst_g, np.max(np.abs(g - gfd)) / max(1, np.max(np.abs(gfd))))
        worst_h = max(worst_h, np.max(np.abs(H - Hfd)) / max(1, np.max(np.abs(Hfd))))
    assert worst_g < 1e-6
    assert worst_h < 1e-5


@settings(max_examples=300, deadline=None)
@given(coord, coord, coord, coord, st.floats(0.1, 30))
def test_formulations_share_roots_and_sign(ax, ay, bx, by, D):
    e = pair_constraint_value((ax, ay), (bx, by), D, "euclidean")
    s = pair_constraint_value((ax, ay), (bx, by), D, "squared")
    # d^2 - D^2 = (d - D)(d + D)
    assert s == pytest.approx(e * (e + 2 * D), rel=1e-9, abs=1e-9)
    assert np.sign(round(e, 12)) == np.sign(round(s, 12)) or abs(e) < 1e-9


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord, st.floats(0.1, 30), st.sampled_from(["euclidean", "squared"]))
def test_gradient_blocks_sum_to_zero(ax, ay, bx, by, D, form):
    g = pair_constraint_gradient((ax, ay), (bx, by), D, form)
    np.testing.assert_allclose(g[:2] + g[2:], 0.0, atol=1e-12)
    H = pair_constraint_hessian((ax, ay), (bx, by), D, form)
    np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_known_values():
    assert pair_constraint_value((0, 0), (3, 4), 5.0) == 0.0
    assert pair_constraint_value((0, 0), (3, 4), 4.0, "squared") == 9.0
    np.testing.assert_allclose(pair_constraint_gradient((0, 0), (3, 4), 1.0), [-0.6, -0.8, 0.6, 0.8])
    np.testing.assert_array_equal(pair_constraint_hessian((0, 0), (3, 4), 1.0, "squared"), SQUARED_HESSIAN)


@pytest.mark.parametrize("singular, expected", [("identity", np.eye(4)), ("squared", SQUARED_HESSIAN)])
def test_coincident_nodes_fall_back(singular, expected):
    assert is_degenerate(0.0, 2.0)
    ev = evaluate_pair((1.0, 1.0), (1.0, 1.0), 2.0, "euclidean", singular)
    assert ev.value == -2.0
    np.testing.assert_array_equal(ev.gradient_block, np.zeros(4))
    np.testing.assert_array_equal(ev.hessian_block, expected)


def test_unknown_formulation():
    with pytest.raises(ValueError):
        pair_constraint_value((0, 0), (1, 0), 1.0, "manhattan")
