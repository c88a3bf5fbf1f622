from importlib.resources import files

import numpy as np
import pytest

from linksynth.taskfile import load_task

FIXTURES = files("linksynth") / "fixtures"

# reference poses, two decimals, node order as in the fixture files
EX1_FINAL = {"A": (0.00, 0.00), "B": (9.84, 0.00), "C": (9.60, 2.33),
             "D": (6.66, 13.67), "E": (4.91, 4.82), "F": (6.02, -0.56)}
EX2_FINAL = {"A": (0.00, 0.00), "B": (9.84, 0.00), "C": (9.60, 2.33),
             "D": (6.75, 13.69), "E": (4.92, 4.86), "F": (6.02, -0.53)}
EX3_FINAL = {"A": (0.00, 0.00), "B": (14.33, 15.00), "C": (18.33, 7.00), "D": (4.48, 2.22),
             "E": (10.58, 6.20), "F": (14.21, 8.39), "G": (11.78, 9.12), "H": (16.07, 1.35),
             "I": (15.66, 9.41), "J": (17.41, 12.36), "K": (15.67, 5.96), "L": (19.43, 2.66)}


def load_fixture(name: str):
    return load_task(FIXTURES / f"{name}.json")


def max_coordinate_gap(result, reference: dict) -> float:
    return max(float(np.max(np.abs(result.coords(k) - np.asarray(v)))) for k, v in reference.items())


@pytest.fixture
def ex1():
    return load_fixture("ex1")


@pytest.fixture
def four_bar():
    """Small crank-rocker with the coupler on an extension triangle."""
    from linksynth import Link, Mechanism, Node
    nodes = [Node("A", 0.0, 0.0, "ground"), Node("B", 4.0, 0.0, "ground"),
             Node("C", 0.5, 1.5), Node("D", 4.2, 2.0), Node("E", 2.0, 3.0)]
    links = [Link("A", "C"), Link("C", "D"), Link("B", "D"), Link("C", "E"), Link("D", "E")]
    return Mechanism(nodes, links)


# one line per acceptance criterion, collected by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
