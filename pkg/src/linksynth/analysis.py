"""Deformed-position analysis: minimum-energy pose under pinned nodes and
distance requirements."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .constraints import evaluate_pair, pair_constraint_value
from .energy import LinkArrays, deformation_energy, energy_derivatives
from .model import EUCLIDEAN, Mechanism, PairConstraint, SolverSettings, require_valid
from .solver import (
    ConstraintTerm, IterationRecord, ObjectiveModel, SqpResult, scatter_constraints, sqp_minimize,
)


@dataclass
class AnalysisProblem:
    mechanism: Mechanism
    fixed_overrides: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    distance_requirements: Sequence[PairConstraint] = ()
    # (N, 2) coordinates of every node; defaults to the declared geometry
    start: np.ndarray | None = None


@dataclass
class AnalysisResult:
    ids: list[str]
    position: np.ndarray
    energy: float
    constraint_errors: np.ndarray
    trace: list[IterationRecord]
    status: str
    multipliers: np.ndarray
    stationarity: float
    free: list[int]
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def coords(self, node_id: str) -> np.ndarray:
        return self.position[self.ids.index(node_id)]


class _PairSet:
    """Pair constraints bound to node indices and variable slots."""

    def __init__(self, constraints, index, slots, formulation, singular):
        self.pairs = [(index[c.a], index[c.b], float(c.target),
                       formulation or c.formulation) for c in constraints]
        self.slots = [tuple(slots[a]) + tuple(slots[b]) for a, b, _, _ in self.pairs]
        self.singular = singular

    def values(self, P: np.ndarray) -> np.ndarray:
        return np.array([pair_constraint_value(P[a], P[b], t, f) for a, b, t, f in self.pairs])

    def terms(self, P: np.ndarray) -> list[ConstraintTerm]:
        return [ConstraintTerm(evaluate_pair(P[a], P[b], t, f, self.singular), s)
                for (a, b, t, f), s in zip(self.pairs, self.slots)]


class _Layout:
    def __init__(self, m: Mechanism, overrides: Mapping[str, tuple[float, float]], start):
        index = m.index()
        unknown = [k for k in overrides if k not in index]
        if unknown:
            raise KeyError(f"fixed override for unknown node(s) {unknown}")
        base = m.coordinates() if start is None else np.array(start, dtype=float).reshape(-1, 2).copy()
        if base.shape != (len(m.nodes), 2):
            raise ValueError(f"start must hold {len(m.nodes)} planar positions")
        ground = m.ground_mask()
        base[ground] = m.coordinates()[ground]
        for node_id, p in overrides.items():
            base[index[node_id]] = p
        self.free = [k for k, n in enumerate(m.nodes) if not n.is_ground and n.id not in overrides]
        if not self.free:
            raise ValueError("no free coordinates left to analyse")
        self.base = base
        self.index = index
        self.slots = -np.ones((len(m.nodes), 2), dtype=int)
        for k, node in enumerate(self.free):
            self.slots[node] = (2 * k, 2 * k + 1)

    def x0(self) -> np.ndarray:
        return self.base[self.free].ravel().copy()

    def coords(self, x: np.ndarray) -> np.ndarray:
        P = self.base.copy()
        P[self.free] = np.asarray(x).reshape(-1, 2)
        return P


class _DeformedPosition:
    def __init__(self, p: AnalysisProblem, formulation, settings: SolverSettings,
                 links: LinkArrays | None = None):
        self.layout = _Layout(p.mechanism, p.fixed_overrides, p.start)
        self.links = links or LinkArrays.of(p.mechanism)
        self.pairs = _PairSet(p.distance_requirements, self.layout.index, self.layout.slots,
                              formulation, settings.singular_hessian)

    def values(self, x):
        P = self.layout.coords(x)
        return deformation_energy(P, self.links), self.pairs.values(P)

    def model(self, x):
        P = self.layout.coords(x)
        ev = energy_derivatives(P, self.links, self.layout.free)
        return ObjectiveModel(ev.value, ev.gradient, ev.hessian), self.pairs.terms(P)


def _result(problem, res: SqpResult, ids, energy: float) -> AnalysisResult:
    P = problem.layout.coords(res.x)
    return AnalysisResult(
        ids=list(ids), position=P, energy=energy,
        constraint_errors=np.abs(problem.pairs.values(P)),
        trace=res.trace, status=res.status, multipliers=res.multipliers,
        stationarity=res.stationarity, free=problem.layout.free, message=res.message,
    )


def solve_deformed_position(
    p: AnalysisProblem,
    formulation: str | None = None,
    settings: SolverSettings | None = None,
    *,
    links: LinkArrays | None = None,
    validate: bool = True,
) -> AnalysisResult:
    """Minimum deformation-energy pose of ``p.mechanism``.

    ``formulation`` overrides the formulation of every distance requirement
    when given. Infeasible requirements are reported through the result's
    status and ``constraint_errors`` rather than raised.
    """
    settings = settings or SolverSettings()
    if validate:
        require_valid(p.mechanism)
    problem = _DeformedPosition(p, formulation, settings, links)
    res = sqp_minimize(problem, problem.layout.x0(), None, settings)
    return _result(problem, res, p.mechanism.ids, float(res.objective))


class _NearestReach:
    """Rigid linkage pulled as close as possible to a target with its coupler."""

    def __init__(self, m: Mechanism, coupler: str, target, requirements, start, settings, formulation):
        self.layout = _Layout(m, {}, start)
        rigid = [PairConstraint(l.i, l.j, float(L), EUCLIDEAN)
                 for l, L in zip(m.links, m.rest_lengths())]
        if formulation is not None:
            requirements = [replace(c, formulation=formulation) for c in requirements]
        self.pairs = _PairSet(rigid + list(requirements), self.layout.index,
                              self.layout.slots, None, settings.singular_hessian)
        k = self.layout.index[coupler]
        if k not in self.layout.free:
            raise ValueError(f"coupler {coupler!r} must be a floating node")
        self.cslots = self.layout.slots[k]
        self.ck = k
        self.target = np.asarray(target, dtype=float)

    def values(self, x):
        P = self.layout.coords(x)
        d = P[self.ck] - self.target
        return float(d @ d), self.pairs.values(P)

    def model(self, x):
        P = self.layout.coords(x)
        n = len(x)
        g = np.zeros(n)
        H = np.zeros((n, n))
        d = P[self.ck] - self.target
        g[self.cslots] = 2 * d
        H[self.cslots, self.cslots] = 2.0
        return ObjectiveModel(float(d @ d), g, H), self.pairs.terms(P)


def solve_nearest_reach(
    m: Mechanism,
    coupler: str,
    target,
    requirements: Sequence[PairConstraint] = (),
    start: np.ndarray | None = None,
    settings: SolverSettings | None = None,
    formulation: str | None = None,
) -> AnalysisResult:
    """Pose of the rigid linkage whose coupler lies closest to ``target``.

    Every link is held at its rest length as an equality constraint, so the
    coupler can only travel along its own path; the returned energy is the
    squared coupler-to-target distance. Steps are damped because the start is
    usually a deformed pose, and undamped steps from there can leave the
    assembly branch.
    """
    settings = settings or SolverSettings()
    problem = _NearestReach(m, coupler, target, requirements, start, settings, formulation)
    res = sqp_minimize(problem, problem.layout.x0(), None, settings, step_control="damped")
    out = _result(problem, res, m.ids, float(res.objective))
    out.constraint_errors = out.constraint_errors[len(m.links):]
    return out


def kkt_residual(
    p: AnalysisProblem, result: AnalysisResult, formulation: str | None = None,
    settings: SolverSettings | None = None,
) -> tuple[float, float, float]:
    """(stationarity, gradient scale, max |c|) of ``result`` re-evaluated from scratch."""
    settings = settings or SolverSettings()
    problem = _DeformedPosition(p, formulation, settings)
    x = result.position[problem.layout.free].ravel()
    objective, terms = problem.model(x)
    E, R, _ = scatter_constraints(terms, len(x))
    res = objective.gradient - (E.T @ result.multipliers if len(terms) else 0.0)
    return (float(np.max(np.abs(res), initial=0.0)),
            max(1.0, float(np.max(np.abs(objective.gradient), initial=0.0))),
            float(np.max(np.abs(R), initial=0.0)))
