"""SVG 1.1 drawings of analysed poses and synthesized linkages.

Ground nodes are triangles, floating nodes circles, links solid segments and
constrained node pairs dashed segments. Synthesis drawings add the precision
points (the first one highlighted) and, optionally, a faint copy of the
linkage at every point.
"""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analysis import AnalysisResult
from .model import Mechanism, PairConstraint
from .synthesis import SynthesisResult

SVG_NS = "http://www.w3.org/2000/svg"


@dataclass(frozen=True)
class SvgOptions:
    width: int = 800
    overlay: bool = True
    margin: float = 0.05
    title: str = ""


def _num(v: float) -> str:
    # str.format never consults the locale, so the decimal mark is always '.'
    if not math.isfinite(v):
        raise ValueError("cannot draw non-finite coordinates")
    return format(float(v), ".6g")


class _Canvas:
    def __init__(self, extent: np.ndarray, opts: SvgOptions):
        lo, hi = extent.min(axis=0), extent.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        pad = opts.margin * span
        self.x0, self.y0 = lo[0] - pad[0], -(hi[1] + pad[1])
        self.w, self.h = span[0] + 2 * pad[0], span[1] + 2 * pad[1]
        self.unit = 0.012 * max(self.w, self.h)
        height = max(1, round(opts.width * self.h / self.w))
        self.root = ET.Element("svg", {
            "xmlns": SVG_NS, "version": "1.1",
            "width": str(opts.width), "height": str(height),
            "viewBox": " ".join(_num(v) for v in (self.x0, self.y0, self.w, self.h)),
        })
        if opts.title:
            ET.SubElement(self.root, "title").text = opts.title
        ET.SubElement(self.root, "rect", {
            "x": _num(self.x0), "y": _num(self.y0), "width": _num(self.w), "height": _num(self.h),
            "fill": "white"})

    def group(self, cls: str, parent: ET.Element | None = None, **attrs) -> ET.Element:
        return ET.SubElement(self.root if parent is None else parent, "g", {"class": cls, **attrs})

    def line(self, parent, p, q, cls, **attrs):
        ET.SubElement(parent, "line", {
            "class": cls, "x1": _num(p[0]), "y1": _num(-p[1]), "x2": _num(q[0]), "y2": _num(-q[1]),
            **attrs})

    def circle(self, parent, p, r, cls, **attrs):
        ET.SubElement(parent, "circle", {
            "class": cls, "cx": _num(p[0]), "cy": _num(-p[1]), "r": _num(r), **attrs})

    def triangle(self, parent, p, cls, **attrs):
        s = 1.6 * self.unit
        pts = [(p[0], -p[1]), (p[0] - s, -p[1] + 1.6 * s), (p[0] + s, -p[1] + 1.6 * s)]
        ET.SubElement(parent, "polygon", {
            "class": cls, "points": " ".join(f"{_num(x)},{_num(y)}" for x, y in pts), **attrs})

    def label(self, parent, p, text):
        t = ET.SubElement(parent, "text", {
            "x": _num(p[0] + self.unit), "y": _num(-p[1] - self.unit),
            "font-size": _num(2.2 * self.unit), "font-family": "sans-serif"})
        t.text = text

    def tostring(self) -> str:
        ET.indent(self.root)
        return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(self.root, encoding="unicode") + "\n"


def _pose(canvas: _Canvas, parent, m: Mechanism, P: np.ndarray, constraints, labels: bool,
          stroke: str, width: float):
    index = m.index()
    links = canvas.group("links", parent, stroke=stroke, **{"stroke-width": _num(width)})
    for l in m.links:
        canvas.line(links, P[index[l.i]], P[index[l.j]], "link")
    dashed = canvas.group("constraints", parent, stroke="black", **{
        "stroke-width": _num(0.6 * width), "stroke-dasharray": f"{_num(canvas.unit)},{_num(canvas.unit)}"})
    for c in constraints:
        canvas.line(dashed, P[index[c.a]], P[index[c.b]], "constraint")
    nodes = canvas.group("nodes", parent, stroke=stroke, **{"stroke-width": _num(0.5 * width)})
    for k, n in enumerate(m.nodes):
        if n.is_ground:
            canvas.triangle(nodes, P[k], "ground", fill="lightgray")
        else:
            canvas.circle(nodes, P[k], 0.8 * canvas.unit, "node", fill="white")
        if labels:
            canvas.label(parent, P[k], n.id)


def render_analysis_svg(m: Mechanism, result: AnalysisResult,
                        constraints: Sequence[PairConstraint] = (),
                        options: SvgOptions | None = None) -> str:
    opts = options or SvgOptions()
    P = np.asarray(result.position, dtype=float)
    if not np.all(np.isfinite(P)):
        raise ValueError("cannot draw non-finite coordinates")
    canvas = _Canvas(P, opts)
    _pose(canvas, canvas.group("pose"), m, P, constraints, True, "navy", 0.35 * canvas.unit)
    return canvas.tostring()


def render_synthesis_svg(m: Mechanism, result: SynthesisResult, targets: Sequence[tuple[float, float]],
                         length_constraints: Sequence[PairConstraint] = (),
                         options: SvgOptions | None = None) -> str:
    opts = options or SvgOptions()
    design = result.design.reshape(-1, 2)
    T = np.asarray(targets, dtype=float).reshape(-1, 2)
    poses = [o.analysis.position for o in result.per_point] if opts.overlay else []
    extent = np.vstack([design, T, *poses]) if poses else np.vstack([design, T])
    if not np.all(np.isfinite(extent)):
        raise ValueError("cannot draw non-finite coordinates")
    canvas = _Canvas(extent, opts)
    if poses:
        faint = canvas.group("overlay", opacity="0.35")
        for P in poses:
            _pose(canvas, faint, m, P, (), False, "gray", 0.2 * canvas.unit)
    final = m.with_design(result.design)
    _pose(canvas, canvas.group("pose"), final, design, length_constraints, True, "navy",
          0.35 * canvas.unit)
    pts = canvas.group("precision-points", stroke="black", **{"stroke-width": _num(0.1 * canvas.unit)})
    for j, t in enumerate(T):
        if j == 0:
            canvas.circle(pts, t, 0.9 * canvas.unit, "point first", fill="green")
        else:
            canvas.circle(pts, t, 0.6 * canvas.unit, "point", fill="orange")
    return canvas.tostring()


def render_svg(result: AnalysisResult | SynthesisResult, mechanism: Mechanism,
               constraints: Sequence[PairConstraint] = (),
               targets: Sequence[tuple[float, float]] = (),
               options: SvgOptions | None = None) -> str:
    """Draw either kind of result; ``targets`` only matter for synthesis."""
    if isinstance(result, SynthesisResult):
        return render_synthesis_svg(mechanism, result, targets, constraints, options)
    return render_analysis_svg(mechanism, result, constraints, options)
