"""Domain types for planar linkages: nodes, links, pair constraints, tasks.

Coordinates are dimensionless. Solvers address nodes by their dense index in
declaration order; position and design vectors are laid out as
``[x0, y0, x1, y1, ...]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

GROUND = "ground"
FLOATING = "floating"
EUCLIDEAN = "euclidean"
SQUARED = "squared"

NodeKind = Literal["ground", "floating"]
Formulation = Literal["euclidean", "squared"]


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    kind: NodeKind = FLOATING

    @property
    def coords(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def is_ground(self) -> bool:
        return self.kind == GROUND


@dataclass(frozen=True)
class Link:
    """Binary element between nodes ``i`` and ``j``.

    ``rest_length`` of ``None`` means "take it from the node coordinates",
    which is how all the bundled fixtures are written.
    """

    i: str
    j: str
    rest_length: float | None = None
    weight: float = 1.0


@dataclass(frozen=True)
class PairConstraint:
    """Equality constraint on the distance between nodes ``a`` and ``b``.

    ``scope`` is ``"analysis"`` for distance requirements on the current
    (deformed) coordinates and ``"synthesis"`` for fixed link lengths imposed
    on the design coordinates.
    """

    a: str
    b: str
    target: float
    formulation: Formulation = EUCLIDEAN
    scope: Literal["analysis", "synthesis"] = "analysis"

    def with_target(self, target: float) -> "PairConstraint":
        return replace(self, target=float(target))


@dataclass(frozen=True)
class Mechanism:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]

    def __init__(self, nodes: Sequence[Node], links: Sequence[Link]):
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "links", tuple(links))

    @property
    def ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def index(self) -> dict[str, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id!r}")

    def coordinates(self) -> np.ndarray:
        """(N, 2) array of the declared node coordinates."""
        return np.array([[n.x, n.y] for n in self.nodes], dtype=float).reshape(-1, 2)

    def design_vector(self) -> np.ndarray:
        return self.coordinates().ravel()

    def link_indices(self) -> np.ndarray:
        idx = self.index()
        return np.array([[idx[l.i], idx[l.j]] for l in self.links], dtype=int).reshape(-1, 2)

    def weights(self) -> np.ndarray:
        return np.array([l.weight for l in self.links], dtype=float)

    def rest_lengths(self) -> np.ndarray:
        """Rest lengths, falling back to the declared geometry where omitted."""
        geometric = lengths_from_design(self, self.design_vector())
        return np.array(
            [g if l.rest_length is None else l.rest_length for l, g in zip(self.links, geometric)],
            dtype=float,
        )

    def ground_mask(self) -> np.ndarray:
        return np.array([n.is_ground for n in self.nodes], dtype=bool)

    def with_design(self, X: np.ndarray) -> "Mechanism":
        """Move every node to ``X`` and pin rest lengths to the new geometry."""
        X = np.asarray(X, dtype=float)
        lengths = lengths_from_design(self, X)
        P = X.reshape(-1, 2)
        nodes = [replace(n, x=float(p[0]), y=float(p[1])) for n, p in zip(self.nodes, P)]
        links = [replace(l, rest_length=float(L)) for l, L in zip(self.links, lengths)]
        return Mechanism(nodes, links)


@dataclass(frozen=True)
class PrecisionPoint:
    """Target for the coupler at one synthesis step.

    ``distance_targets`` maps an index into the task's distance requirements to
    the value that requirement takes at this step.
    """

    x: float
    y: float
    weight: float = 1.0
    distance_targets: dict[int, float] = field(default_factory=dict)

    @property
    def target(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SolverSettings:
    energy_tol: float = 1e-14
    constraint_tol: float = 1e-10
    max_iterations: int = 200
    fd_step: float = 1e-6
    fd_hessian_step: float = 1e-4
    regularization_floor: float = 1e-10
    step_halving_limit: int = 20
    # full steps are accepted while merit grows by less than this factor
    merit_allowance: float = 1e3
    # "newton": exact step on indefinite reduced Hessians; "shift": tau * I until positive definite
    curvature: Literal["newton", "shift"] = "newton"
    stationarity_tol: float = 1e-8
    rank_tol: float = 1e-10
    singular_hessian: Literal["identity", "squared"] = "identity"
    # inner analysis tolerances used while differencing the synthesis objective
    inner_energy_tol: float = 1e-12
    inner_max_iterations: int = 100
    # damped steps keep mu >= damping_floor * ||H||_F
    damping_floor: float = 0.0

    def __post_init__(self):
        for name in ("energy_tol", "constraint_tol", "fd_step", "fd_hessian_step",
                     "regularization_floor", "stationarity_tol", "rank_tol", "inner_energy_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_iterations", "step_halving_limit", "inner_max_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.curvature not in ("newton", "shift"):
            raise ValueError("curvature must be 'newton' or 'shift'")
        if self.singular_hessian not in ("identity", "squared"):
            raise ValueError("singular_hessian must be 'identity' or 'squared'")

    def inner(self) -> "SolverSettings":
        """Settings for analyses nested inside the synthesis objective."""
        # nested solves must land on minima, so indefinite curvature is shifted
        return replace(self, energy_tol=min(self.energy_tol, self.inner_energy_tol),
                       max_iterations=self.inner_max_iterations, curvature="shift")


@dataclass(frozen=True)
class SynthesisTask:
    mechanism: Mechanism
    coupler: str
    points: tuple[PrecisionPoint, ...]
    length_constraints: tuple[PairConstraint, ...] = ()
    distance_requirements: tuple[PairConstraint, ...] = ()
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "length_constraints", tuple(self.length_constraints))
        object.__setattr__(self, "distance_requirements", tuple(self.distance_requirements))

    def requirements_at(self, j: int) -> list[PairConstraint]:
        overrides = self.points[j].distance_targets
        return [c.with_target(overrides[k]) if k in overrides else c
                for k, c in enumerate(self.distance_requirements)]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


class InvalidMechanismError(ValueError):
    pass


def validate_mechanism(m: Mechanism) -> ValidationReport:
    """Collect every violated structural invariant of ``m``."""
    report = ValidationReport()
    ids = [n.id for n in m.nodes]
    seen: set[str] = set()
    for node_id in ids:
        if node_id in seen:
            report.violations.append(f"duplicate node id {node_id!r}")
        seen.add(node_id)
    for n in m.nodes:
        if not (math.isfinite(n.x) and math.isfinite(n.y)):
            report.violations.append(f"non-finite coordinates at node {n.id!r}")
        if n.kind not in (GROUND, FLOATING):
            report.violations.append(f"unknown node kind {n.kind!r} at node {n.id!r}")
    if not any(n.kind == GROUND for n in m.nodes):
        report.violations.append("no ground node")
    if not any(n.kind == FLOATING for n in m.nodes):
        report.violations.append("no floating node")

    pairs: set[frozenset[str]] = set()
    for k, l in enumerate(m.links):
        tag = f"link {k} ({l.i}-{l.j})"
        if l.i == l.j:
            report.violations.append(f"self-loop link: {tag}")
        for end in (l.i, l.j):
            if end not in seen:
                report.violations.append(f"{tag} references unknown node {end!r}")
        if l.rest_length is not None and not (math.isfinite(l.rest_length) and l.rest_length > 0):
            report.violations.append(f"{tag} rest length must be positive")
        if not (math.isfinite(l.weight) and l.weight > 0):
            report.violations.append(f"{tag} weight must be positive")
        key = frozenset((l.i, l.j))
        if key in pairs and l.i != l.j:
            report.warnings.append(f"parallel links between {l.i} and {l.j}")
        pairs.add(key)

    if ids and not _connected(ids, m.links):
        report.violations.append("mechanism graph is not connected")
    return report


def _connected(ids: list[str], links: Sequence[Link]) -> bool:
    adjacency: dict[str, set[str]] = {i: set() for i in ids}
    for l in links:
        if l.i in adjacency and l.j in adjacency:
            adjacency[l.i].add(l.j)
            adjacency[l.j].add(l.i)
    stack, reached = [ids[0]], {ids[0]}
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in reached:
                reached.add(nxt)
                stack.append(nxt)
    return len(reached) == len(adjacency)


def require_valid(m: Mechanism) -> None:
    report = validate_mechanism(m)
    if not report.ok:
        raise InvalidMechanismError("; ".join(report.violations))


def lengths_from_design(m: Mechanism, X: np.ndarray) -> np.ndarray:
    """Euclidean length of every link with the nodes placed at design vector ``X``."""
    X = np.asarray(X, dtype=float).ravel()
    if X.size != 2 * len(m.nodes):
        raise ValueError(f"design vector has {X.size} entries, expected {2 * len(m.nodes)}")
    P = X.reshape(-1, 2)
    ij = m.link_indices()
    if not len(ij):
        return np.zeros(0)
    d = P[ij[:, 1]] - P[ij[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])
