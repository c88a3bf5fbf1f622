import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from conftest import load_fixture
from linksynth.analysis import solve_deformed_position
from linksynth.svg import SvgOptions, render_analysis_svg, render_svg, render_synthesis_svg
from linksynth.synthesis import synthesize

NS = "{http://www.w3.org/2000/svg}"


def _parse(text):
    return ET.fromstring(text.split("\n", 1)[1])


@pytest.fixture(scope="module")
def ex1_drawing():
    task = load_fixture("ex1")
    res = solve_deformed_position(task.analysis_problem(), None, task.settings)
    reqs = [r.constraint for r in task.distance_requirements]
    return task, res, render_svg(res, task.mechanism, reqs)


@pytest.fixture(scope="module")
def ex4_result():
    task = load_fixture("ex4").synthesis_task()
    res = synthesize(task, settings=replace(task.settings, max_iterations=1))
    return task, res


def test_analysis_glyph_counts(ex1_drawing):
    _, _, text = ex1_drawing
    root = _parse(text)
    assert len(root.findall(f".//{NS}line[@class='link']")) == 7
    dashed = root.findall(f".//{NS}line[@class='constraint']")
    assert len(dashed) == 1
    assert root.find(f".//{NS}g[@class='constraints']").get("stroke-dasharray")
    glyphs = root.findall(f".//{NS}circle[@class='node']") + root.findall(f".//{NS}polygon[@class='ground']")
    assert len(glyphs) == 6
    assert len(root.findall(f".//{NS}polygon[@class='ground']")) == 2


def test_dashed_segment_joins_constrained_nodes(ex1_drawing):
    task, res, text = ex1_drawing
    line = _parse(text).find(f".//{NS}line[@class='constraint']")
    e, f = res.coords("E"), res.coords("F")
    got = sorted([(float(line.get("x1")), -float(line.get("y1"))), (float(line.get("x2")), -float(line.get("y2")))])
    want = sorted([tuple(e), tuple(f)])
    np.testing.assert_allclose(got, want, atol=1e-4)


def test_viewbox_margin(ex1_drawing):
    _, res, text = ex1_drawing
    x0, y0, w, h = map(float, _parse(text).get("viewBox").split())
    span = res.position.max(axis=0) - res.position.min(axis=0)
    assert w == pytest.approx(1.1 * span[0], rel=1e-5)
    assert h == pytest.approx(1.1 * span[1], rel=1e-5)


def test_numbers_use_decimal_points(ex1_drawing):
    _, _, text = ex1_drawing
    root = _parse(text)
    for el in root.iter():
        for key, value in el.attrib.items():
            if key in ("x1", "y1", "x2", "y2", "cx", "cy", "r", "x", "y", "width", "height"):
                float(value)
                assert "," not in value


def test_synthesis_points_and_overlay(ex4_result):
    task, res = ex4_result
    targets = [p.target for p in task.points]
    root = _parse(render_synthesis_svg(task.mechanism, res, targets, task.length_constraints))
    points = root.findall(f".//{NS}g[@class='precision-points']/{NS}circle")
    assert len(points) == 11
    assert points[0].get("class") == "point first"
    assert points[0].get("fill") != points[1].get("fill")
    assert len({p.get("fill") for p in points[1:]}) == 1
    overlay = root.find(f".//{NS}g[@class='overlay']")
    assert len(overlay.findall(f".//{NS}g[@class='links']")) == 11


def test_overlay_can_be_switched_off(ex4_result):
    task, res = ex4_result
    targets = [p.target for p in task.points]
    root = _parse(render_synthesis_svg(task.mechanism, res, targets, options=SvgOptions(overlay=False)))
    assert root.find(f".//{NS}g[@class='overlay']") is None
    assert len(root.findall(f".//{NS}g[@class='links']")) == 1


def test_non_finite_rejected(ex1_drawing):
    task, res, _ = ex1_drawing
    bad = replace(res, position=res.position.copy())
    bad.position[2, 0] = math.nan
    with pytest.raises(ValueError):
        render_analysis_svg(task.mechanism, bad)
