import math

import numpy as np
import pytest

from linksynth.model import (
    InvalidMechanismError, Link, Mechanism, Node, PairConstraint, PrecisionPoint, SolverSettings,
    SynthesisTask, lengths_from_design, require_valid, validate_mechanism,
)


def test_valid_four_bar(four_bar):
    report = validate_mechanism(four_bar)
    assert report.ok and not report.warnings


@pytest.mark.parametrize("mutate, fragment", [
    (lambda n, l: (n + [Node("A", 1, 1)], l), "duplicate node id"),
    (lambda n, l: (n, l + [Link("C", "C")]), "self-loop"),
    (lambda n, l: (n, l + [Link("C", "Z")]), "unknown node 'Z'"),
    (lambda n, l: (n, l + [Link("A", "E", rest_length=-1.0)]), "rest length must be positive"),
    (lambda n, l: (n, l + [Link("A", "E", weight=0.0)]), "weight must be positive"),
    (lambda n, l: ([Node(x.id, x.x, x.y, "floating") for x in n], l), "no ground node"),
    (lambda n, l: (n + [Node("Q", 9, 9)], l), "not connected"),
    (lambda n, l: ([Node("A", math.nan, 0.0, "ground")] + n[1:], l), "non-finite"),
])
def test_each_violation_is_reported(four_bar, mutate, fragment):
    nodes, links = mutate(list(four_bar.nodes), list(four_bar.links))
    report = validate_mechanism(Mechanism(nodes, links))
    assert not report.ok
    assert any(fragment in v for v in report.violations), report.violations
    with pytest.raises(InvalidMechanismError):
        require_valid(Mechanism(nodes, links))


def test_parallel_link_is_only_a_warning(four_bar):
    m = Mechanism(four_bar.nodes, list(four_bar.links) + [Link("D", "C")])
    report = validate_mechanism(m)
    assert report.ok and report.warnings


def test_rest_lengths_default_to_geometry(four_bar):
    L = four_bar.rest_lengths()
    np.testing.assert_allclose(L[0], math.hypot(0.5, 1.5))
    m = Mechanism(four_bar.nodes, [Link("A", "C", rest_length=2.0)] + list(four_bar.links[1:]))
    assert m.rest_lengths()[0] == 2.0


def test_with_design_pins_lengths(four_bar):
    X = four_bar.design_vector() + 0.1 * np.arange(10)
    moved = four_bar.with_design(X)
    np.testing.assert_array_equal(moved.design_vector(), X)
    np.testing.assert_allclose(moved.rest_lengths(), lengths_from_design(four_bar, X))


def test_lengths_from_design_checks_size(four_bar):
    with pytest.raises(ValueError):
        lengths_from_design(four_bar, np.zeros(3))


def test_requirements_at_applies_overrides(four_bar):
    req = PairConstraint("C", "E", 2.0)
    task = SynthesisTask(four_bar, "E", [PrecisionPoint(0, 0), PrecisionPoint(1, 1, distance_targets={0: 3.0})],
                         distance_requirements=[req])
    assert task.requirements_at(0)[0].target == 2.0
    assert task.requirements_at(1)[0].target == 3.0


@pytest.mark.parametrize("kw", [{"constraint_tol": 0.0}, {"max_iterations": 0}, {"curvature": "bfgs"},
                                {"singular_hessian": "zero"}, {"fd_step": -1e-6}])
def test_settings_reject_bad_values(kw):
    with pytest.raises(ValueError):
        SolverSettings(**kw)


def test_inner_settings_tighten():
    inner = SolverSettings(energy_tol=1e-6).inner()
    assert inner.energy_tol == 1e-12 and inner.curvature == "shift"
    assert inner.max_iterations == SolverSettings().inner_max_iterations
