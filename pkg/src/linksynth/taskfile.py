"""JSON task files.

Layout (keys other than these are rejected)::

    {
      "description": "...",                        optional
      "nodes": [{"id": "A", "x": 0, "y": 0, "kind": "ground"}, ...],
      "links": [{"i": "A", "j": "C", "rest_length": 4.2, "weight": 1}, ...],
      "coupler": "E",                              synthesis, optional for analysis
      "precision_points": [{"x": 1, "y": 2, "weight": 1}, ...],
      "distance_requirements": [{"a": "E", "b": "F", "target": 5.5,
                                 "formulation": "euclidean"}, ...],
      "length_constraints": [{"a": "A", "b": "C", "target": 4}, ...],
      "fixed": {"E": [x, y]},                      analysis only
      "start": {"C": [x, y]},                      analysis only
      "settings": {"constraint_tol": 1e-10, ...}
    }

A distance requirement ``target`` may be a list with one value per precision
point. ``rest_length`` and ``weight`` are optional; rest lengths default to
the declared geometry.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import AnalysisProblem
from .model import (
    EUCLIDEAN, FLOATING, GROUND, SQUARED, Link, Mechanism, Node, PairConstraint, PrecisionPoint,
    SolverSettings, SynthesisTask,
)


class TaskFileError(ValueError):
    """Problem in a task file; ``where`` is a line/column or a field path."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class DistanceRequirement:
    constraint: PairConstraint
    # one target per precision point, or None for a single fixed target
    per_point: tuple[float, ...] | None = None


@dataclass
class TaskFile:
    mechanism: Mechanism
    coupler: str | None = None
    points: list[PrecisionPoint] = field(default_factory=list)
    distance_requirements: list[DistanceRequirement] = field(default_factory=list)
    length_constraints: list[PairConstraint] = field(default_factory=list)
    fixed: dict[str, tuple[float, float]] = field(default_factory=dict)
    start: dict[str, tuple[float, float]] = field(default_factory=dict)
    settings: SolverSettings = field(default_factory=SolverSettings)
    description: str = ""

    def synthesis_task(self) -> SynthesisTask:
        if self.coupler is None:
            raise TaskFileError("coupler", "required for synthesis")
        if not self.points:
            raise TaskFileError("precision_points", "at least one point is required for synthesis")
        points = []
        for j, p in enumerate(self.points):
            targets = {k: r.per_point[j] for k, r in enumerate(self.distance_requirements)
                       if r.per_point is not None}
            points.append(PrecisionPoint(p.x, p.y, p.weight, targets))
        return SynthesisTask(
            mechanism=self.mechanism, coupler=self.coupler, points=points,
            length_constraints=self.length_constraints,
            distance_requirements=[r.constraint for r in self.distance_requirements],
            settings=self.settings,
        )

    def analysis_problem(self) -> AnalysisProblem:
        start = self.mechanism.coordinates()
        index = self.mechanism.index()
        for node_id, p in self.start.items():
            start[index[node_id]] = p
        return AnalysisProblem(
            mechanism=self.mechanism,
            fixed_overrides=dict(self.fixed),
            distance_requirements=[r.constraint for r in self.distance_requirements],
            start=start,
        )


_TOP = {"description", "nodes", "links", "coupler", "precision_points", "distance_requirements",
        "length_constraints", "fixed", "start", "settings"}
_SETTINGS = {f.name: f.type for f in fields(SolverSettings)}


class _Reader:
    def __init__(self, path: str):
        self.path = path

    def fail(self, message: str):
        raise TaskFileError(self.path or "<root>", message)

    def at(self, key) -> "_Reader":
        if isinstance(key, int):
            return _Reader(f"{self.path}[{key}]")
        return _Reader(f"{self.path}.{key}" if self.path else key)

    def obj(self, value, required: set[str], optional: set[str] = frozenset()) -> dict:
        if not isinstance(value, dict):
            self.fail("expected an object")
        unknown = sorted(set(value) - required - set(optional))
        if unknown:
            self.fail(f"unknown key(s) {', '.join(unknown)}")
        missing = sorted(required - set(value))
        if missing:
            self.fail(f"missing key(s) {', '.join(missing)}")
        return value

    def array(self, value) -> list:
        if not isinstance(value, list):
            self.fail("expected an array")
        return value

    def number(self, value) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("expected a number")
        if not math.isfinite(value):
            self.fail("number must be finite")
        return float(value)

    def string(self, value) -> str:
        if not isinstance(value, str) or not value:
            self.fail("expected a non-empty string")
        return value

    def choice(self, value, options) -> str:
        if value not in options:
            self.fail(f"expected one of {', '.join(options)}")
        return value

    def point(self, value) -> tuple[float, float]:
        arr = self.array(value)
        if len(arr) != 2:
            self.fail("expected [x, y]")
        return (self.at(0).number(arr[0]), self.at(1).number(arr[1]))


def _pair(r: _Reader, raw, scope: str, n_points: int | None) -> tuple[PairConstraint, Any]:
    d = r.obj(raw, {"a", "b", "target"}, {"formulation"})
    a, b = r.at("a").string(d["a"]), r.at("b").string(d["b"])
    if a == b:
        r.fail("a constraint needs two distinct nodes")
    form = r.at("formulation").choice(d.get("formulation", EUCLIDEAN), (EUCLIDEAN, SQUARED))
    tr = r.at("target")
    per_point = None
    if isinstance(d["target"], list) and n_points is not None:
        per_point = tuple(tr.at(k).number(v) for k, v in enumerate(d["target"]))
        if len(per_point) != n_points:
            tr.fail(f"expected {n_points} per-point targets, got {len(per_point)}")
        target = per_point[0] if per_point else 0.0
    else:
        target = tr.number(d["target"])
    if target < 0 or (per_point and min(per_point) < 0):
        tr.fail("targets must be non-negative")
    return PairConstraint(a, b, target, form, scope), per_point


def task_from_dict(doc: Any) -> TaskFile:
    root = _Reader("")
    doc = root.obj(doc, {"nodes", "links"}, _TOP - {"nodes", "links"})

    nodes = []
    r = root.at("nodes")
    for k, raw in enumerate(r.array(doc["nodes"])):
        rk = r.at(k)
        d = rk.obj(raw, {"id", "x", "y"}, {"kind"})
        nodes.append(Node(rk.at("id").string(d["id"]), rk.at("x").number(d["x"]),
                          rk.at("y").number(d["y"]),
                          rk.at("kind").choice(d.get("kind", FLOATING), (GROUND, FLOATING))))
    ids = {n.id for n in nodes}

    def node_ref(rr: _Reader, value) -> str:
        if rr.string(value) not in ids:
            rr.fail(f"unknown node {value!r}")
        return value

    links = []
    r = root.at("links")
    for k, raw in enumerate(r.array(doc["links"])):
        rk = r.at(k)
        d = rk.obj(raw, {"i", "j"}, {"rest_length", "weight"})
        rest = d.get("rest_length")
        links.append(Link(node_ref(rk.at("i"), d["i"]), node_ref(rk.at("j"), d["j"]),
                          None if rest is None else rk.at("rest_length").number(rest),
                          rk.at("weight").number(d.get("weight", 1.0))))

    points = []
    r = root.at("precision_points")
    for k, raw in enumerate(r.array(doc.get("precision_points", []))):
        rk = r.at(k)
        d = rk.obj(raw, {"x", "y"}, {"weight"})
        w = rk.at("weight").number(d.get("weight", 1.0))
        if w <= 0:
            rk.at("weight").fail("weight must be positive")
        points.append(PrecisionPoint(rk.at("x").number(d["x"]), rk.at("y").number(d["y"]), w))

    reqs = []
    r = root.at("distance_requirements")
    for k, raw in enumerate(r.array(doc.get("distance_requirements", []))):
        c, per = _pair(r.at(k), raw, "analysis", len(points))
        node_ref(r.at(k).at("a"), c.a), node_ref(r.at(k).at("b"), c.b)
        reqs.append(DistanceRequirement(c, per))

    lengths = []
    r = root.at("length_constraints")
    for k, raw in enumerate(r.array(doc.get("length_constraints", []))):
        c, _ = _pair(r.at(k), raw, "synthesis", None)
        node_ref(r.at(k).at("a"), c.a), node_ref(r.at(k).at("b"), c.b)
        lengths.append(c)

    coupler = None
    if doc.get("coupler") is not None:
        coupler = node_ref(root.at("coupler"), doc["coupler"])

    def placements(key: str) -> dict[str, tuple[float, float]]:
        rr = root.at(key)
        raw = doc.get(key, {})
        if not isinstance(raw, dict):
            rr.fail("expected an object mapping node ids to [x, y]")
        return {node_ref(rr.at(k), k): rr.at(k).point(v) for k, v in raw.items()}

    r = root.at("settings")
    raw = r.obj(doc.get("settings", {}), set(), set(_SETTINGS))
    kwargs = {}
    for key, value in raw.items():
        rk = r.at(key)
        default = getattr(SolverSettings, key)
        if isinstance(default, str):
            kwargs[key] = rk.string(value)
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                rk.fail("expected an integer")
            kwargs[key] = value
        else:
            kwargs[key] = rk.number(value)
    try:
        settings = SolverSettings(**kwargs)
    except ValueError as err:
        r.fail(str(err))

    desc = doc.get("description", "")
    if not isinstance(desc, str):
        root.at("description").fail("expected a string")
    return TaskFile(Mechanism(nodes, links), coupler, points, reqs, lengths,
                    placements("fixed"), placements("start"), settings, desc)


def task_to_dict(task: TaskFile) -> dict:
    def pair(c: PairConstraint, target) -> dict:
        return {"a": c.a, "b": c.b, "target": target, "formulation": c.formulation}

    doc: dict[str, Any] = {}
    if task.description:
        doc["description"] = task.description
    doc["nodes"] = [{"id": n.id, "x": n.x, "y": n.y, "kind": n.kind} for n in task.mechanism.nodes]
    doc["links"] = []
    for l in task.mechanism.links:
        entry: dict[str, Any] = {"i": l.i, "j": l.j}
        if l.rest_length is not None:
            entry["rest_length"] = l.rest_length
        entry["weight"] = l.weight
        doc["links"].append(entry)
    if task.coupler is not None:
        doc["coupler"] = task.coupler
    if task.points:
        doc["precision_points"] = [{"x": p.x, "y": p.y, "weight": p.weight} for p in task.points]
    if task.distance_requirements:
        doc["distance_requirements"] = [
            pair(r.constraint, list(r.per_point) if r.per_point is not None else r.constraint.target)
            for r in task.distance_requirements]
    if task.length_constraints:
        doc["length_constraints"] = [pair(c, c.target) for c in task.length_constraints]
    if task.fixed:
        doc["fixed"] = {k: list(v) for k, v in task.fixed.items()}
    if task.start:
        doc["start"] = {k: list(v) for k, v in task.start.items()}
    defaults = asdict(SolverSettings())
    changed = {k: v for k, v in asdict(task.settings).items() if v != defaults[k]}
    if changed:
        doc["settings"] = changed
    return doc


def parse_task(text: str) -> TaskFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise TaskFileError(f"line {err.lineno}, column {err.colno}", err.msg) from None
    return task_from_dict(doc)


def serialize_task(task: TaskFile) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(task_to_dict(task), indent=2) + "\n"


def load_task(path: str | Path) -> TaskFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TaskFileError(str(path), "file not found") from None
    except (OSError, UnicodeDecodeError) as err:
        raise TaskFileError(str(path), f"cannot read file ({err})") from None
    return parse_task(text)


def finite_or_nan(value: float) -> float | str:
    """JSON-safe number: non-finite values become the literal string "nan"."""
    value = float(value)
    return value if math.isfinite(value) else "nan"


def as_points(arr: np.ndarray) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in np.asarray(arr).reshape(-1, 2)]
