"""Dimensional synthesis: choose design coordinates so that the linkage,
forced through every precision point in turn, stores as little deformation
energy as possible, subject to fixed-length constraints."""
from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .analysis import AnalysisProblem, AnalysisResult, solve_deformed_position, solve_nearest_reach
from .constraints import evaluate_pair, pair_constraint_value
from .energy import LinkArrays
from .model import (
    Mechanism, PairConstraint, SolverSettings, SynthesisTask, lengths_from_design, require_valid,
)
from .solver import (
    NUMERICAL_FAILURE, ConstraintTerm, IterationRecord, ObjectiveModel, sqp_minimize,
)


class SynthesisError(RuntimeError):
    def __init__(self, point: int, message: str):
        self.point = point
        super().__init__(f"analysis at precision point {point} failed: {message}")


class StencilError(ArithmeticError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"non-finite objective in the stencil of design coordinate {index}")


@dataclass
class PointOutcome:
    analysis: AnalysisResult
    # distance from the pinned coupler's rigid counterpart to the target, when evaluated
    distance: float | None = None


@dataclass
class PathErrors:
    distances: np.ndarray
    mean: float
    std: float
    reaches: list[AnalysisResult] = field(default_factory=list)


@dataclass
class SynthesisResult:
    ids: list[str]
    design: np.ndarray
    rest_lengths: np.ndarray
    per_point: list[PointOutcome]
    objective: float
    objective_trace: list[IterationRecord]
    status: str
    multipliers: np.ndarray
    stationarity: float
    length_errors: np.ndarray
    message: str = ""
    path_errors: PathErrors | None = None

    @property
    def iterations(self) -> int:
        return len(self.objective_trace) - 1

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def mechanism_coords(self) -> np.ndarray:
        return self.design.reshape(-1, 2)


def _check_task(task: SynthesisTask) -> None:
    require_valid(task.mechanism)
    m = task.mechanism
    index = m.index()
    if task.coupler not in index or m.node(task.coupler).is_ground:
        raise ValueError(f"coupler {task.coupler!r} must be a floating node")
    if not task.points:
        raise ValueError("at least one precision point is required")
    for k, p in enumerate(task.points):
        if not (math.isfinite(p.x) and math.isfinite(p.y)) or not p.weight > 0:
            raise ValueError(f"precision point {k} needs a finite target and positive weight")
    linked = {frozenset((l.i, l.j)) for l in m.links}
    for c in task.length_constraints:
        if frozenset((c.a, c.b)) not in linked:
            raise ValueError(f"length constraint {c.a}-{c.b} does not match any link")


def _requirements(task: SynthesisTask, j: int, formulation: str | None) -> list[PairConstraint]:
    reqs = task.requirements_at(j)
    return [replace(c, formulation=formulation) for c in reqs] if formulation else reqs


def _analyse_points(task, mech, links, starts, formulation, settings) -> list[AnalysisResult]:
    """Pinned analyses for every precision point.

    ``starts[j]`` seeds point ``j`` when given; otherwise the previous point's
    solution does (the design pose for the first point).
    """
    out: list[AnalysisResult] = []
    prev = mech.coordinates()
    for j, pt in enumerate(task.points):
        start = prev if starts is None else starts[j]
        prob = AnalysisProblem(mech, {task.coupler: pt.target}, _requirements(task, j, formulation), start)
        res = solve_deformed_position(prob, None, settings, links=links, validate=False)
        if res.status == NUMERICAL_FAILURE:
            raise SynthesisError(j, res.message)
        out.append(res)
        prev = res.position
    return out


def _phi(task: SynthesisTask, results: Sequence[AnalysisResult]) -> float:
    return float(sum(p.weight * r.energy for p, r in zip(task.points, results)))


def synthesis_objective(
    task: SynthesisTask,
    X: np.ndarray,
    formulation: str | None = None,
    settings: SolverSettings | None = None,
    starts: Sequence[np.ndarray] | None = None,
) -> tuple[float, list[AnalysisResult]]:
    """Weighted sum of the minimum deformation energies over all precision points.

    Rest lengths and ground positions come from ``X``; the coupler is pinned
    at each target in turn and every analysis is seeded with the previous one.
    """
    settings = settings or task.settings
    X = np.asarray(X, dtype=float).ravel()
    if not np.all(np.isfinite(X)):
        raise ValueError("design vector must be finite")
    mech = task.mechanism.with_design(X)
    links = LinkArrays.of(mech)
    results = _analyse_points(task, mech, links, starts, formulation, settings)
    return _phi(task, results), results


def _steps(X: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(X))


def central_difference_derivatives(
    f: Callable[[np.ndarray], float],
    X: np.ndarray,
    settings: SolverSettings | None = None,
    *,
    f0: float | None = None,
    hessian: bool = True,
    executor: Executor | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Central-difference gradient and Hessian of ``f`` at ``X``.

    The gradient uses ``h_k = fd_step * max(1, |X_k|)``. The Hessian uses the
    larger ``fd_hessian_step`` (second differences amplify noise by 1/h^2):
    diagonal entries from the 3-point stencil, off-diagonal ones from the
    symmetric stencil that adds only f(X + h_k e_k + h_l e_l) and
    f(X - h_k e_k - h_l e_l) per pair.
    """
    settings = settings or SolverSettings()
    X = np.asarray(X, dtype=float).ravel()
    n = X.size
    mapper = executor.map if executor is not None else map

    def run(points: list[np.ndarray], owners: list[int]) -> np.ndarray:
        vals = np.fromiter(mapper(f, points), dtype=float, count=len(points))
        bad = ~np.isfinite(vals)
        if bad.any():
            raise StencilError(owners[int(np.argmax(bad))])
        return vals

    def shifted(delta: dict[int, float]) -> np.ndarray:
        Y = X.copy()
        for k, d in delta.items():
            Y[k] += d
        return Y

    base = float(f(X)) if f0 is None else float(f0)
    if not math.isfinite(base):
        raise StencilError(-1)

    h = _steps(X, settings.fd_step)
    pts = [shifted({k: s * h[k]}) for k in range(n) for s in (1.0, -1.0)]
    vals = run(pts, [k for k in range(n) for _ in range(2)]).reshape(n, 2)
    gradient = (vals[:, 0] - vals[:, 1]) / (2.0 * h)
    if not hessian:
        return gradient, None

    hh = _steps(X, settings.fd_hessian_step)
    if settings.fd_hessian_step == settings.fd_step:
        axis = vals
    else:
        pts = [shifted({k: s * hh[k]}) for k in range(n) for s in (1.0, -1.0)]
        axis = run(pts, [k for k in range(n) for _ in range(2)]).reshape(n, 2)
    H = np.diag((axis[:, 0] - 2.0 * base + axis[:, 1]) / (hh * hh))
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    if pairs:
        pts = [shifted({k: s * hh[k], l: s * hh[l]}) for k, l in pairs for s in (1.0, -1.0)]
        diag = run(pts, [k for k, _ in pairs for _ in range(2)]).reshape(-1, 2)
        for (k, l), (pp, mm) in zip(pairs, diag):
            num = pp - axis[k, 0] - axis[l, 0] + 2.0 * base - axis[k, 1] - axis[l, 1] + mm
            H[k, l] = H[l, k] = num / (2.0 * hh[k] * hh[l])
    return gradient, H


class _SeededObjective:
    """Picklable ``X -> Phi`` with every point seeded from fixed start poses."""

    def __init__(self, task, starts, formulation, settings):
        self.task, self.starts = task, starts
        self.formulation, self.settings = formulation, settings

    def __call__(self, X: np.ndarray) -> float:
        try:
            phi, _ = synthesis_objective(self.task, X, self.formulation, self.settings, self.starts)
        except (SynthesisError, ArithmeticError, np.linalg.LinAlgError):
            return math.nan
        return phi


class _DesignProblem:
    """Outer problem over the full design vector for ``sqp_minimize``."""

    def __init__(self, task, formulation, settings, executor):
        self.task = task
        self.formulation = formulation
        self.inner = settings.inner()
        self.settings = settings
        self.executor = executor
        index = task.mechanism.index()
        self.lengths = [(index[c.a], index[c.b], float(c.target), formulation or c.formulation)
                        for c in task.length_constraints]
        self._cache: dict[bytes, tuple[float, list[AnalysisResult]]] = {}
        self.current: list[AnalysisResult] | None = None
        # poses at the last accepted iterate; trial designs start from them
        self.anchor: list[np.ndarray] | None = None

    def _solve(self, X):
        # Pinned poses can have several local minima. Seeding every trial
        # from the design pose lets a point hop between them under tiny
        # design changes, which puts cliffs in Phi; following the accepted
        # iterate's branch keeps Phi continuous along the iteration.
        if self.anchor is not None:
            try:
                return synthesis_objective(self.task, X, self.formulation, self.inner, self.anchor)
            except SynthesisError:
                pass
        return synthesis_objective(self.task, X, self.formulation, self.inner)

    def evaluate(self, X):
        key = np.asarray(X, dtype=float).tobytes()
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = self._solve(X)
        return self._cache[key]

    def length_values(self, X) -> np.ndarray:
        P = np.asarray(X, dtype=float).reshape(-1, 2)
        return np.array([pair_constraint_value(P[a], P[b], t, f) for a, b, t, f in self.lengths])

    def values(self, X):
        phi, _ = self.evaluate(X)
        return phi, self.length_values(X)

    def model(self, X):
        phi, results = self.evaluate(X)
        self.current = results
        self.anchor = [r.position for r in results]
        self._cache = {np.asarray(X, dtype=float).tobytes(): (phi, results)}
        f = _SeededObjective(self.task, [r.position for r in results], self.formulation, self.inner)
        g, H = central_difference_derivatives(f, X, self.settings, f0=phi, executor=self.executor)
        H = 0.5 * (H + H.T)
        P = np.asarray(X, dtype=float).reshape(-1, 2)
        terms = [ConstraintTerm(evaluate_pair(P[a], P[b], t, fm, self.settings.singular_hessian),
                                (2 * a, 2 * a + 1, 2 * b, 2 * b + 1))
                 for a, b, t, fm in self.lengths]
        return ObjectiveModel(phi, g, H), terms


def synthesize(
    task: SynthesisTask,
    formulation: str | None = None,
    settings: SolverSettings | None = None,
    *,
    executor: Executor | None = None,
    path_errors: bool = False,
) -> SynthesisResult:
    """Optimise every design coordinate of ``task.mechanism``.

    ``formulation`` overrides the formulation of both the per-point distance
    requirements and the length constraints. ``executor`` may spread the
    finite-difference stencil over workers.
    """
    settings = settings or task.settings
    _check_task(task)
    problem = _DesignProblem(task, formulation, settings, executor)
    X0 = task.mechanism.design_vector()
    res = sqp_minimize(problem, X0, None, settings, step_control="damped")
    phi, results = problem.evaluate(res.x)
    out = SynthesisResult(
        ids=task.mechanism.ids,
        design=res.x.copy(),
        rest_lengths=lengths_from_design(task.mechanism, res.x),
        per_point=[PointOutcome(r) for r in results],
        objective=phi,
        objective_trace=res.trace,
        status=res.status,
        multipliers=res.multipliers,
        stationarity=res.stationarity,
        length_errors=np.abs(problem.length_values(res.x)),
        message=res.message,
    )
    if path_errors:
        out.path_errors = evaluate_path_errors(task, res.x, settings, formulation,
                                               seeds=[r.position for r in results])
        for outcome, d in zip(out.per_point, out.path_errors.distances):
            outcome.distance = float(d)
    return out


def evaluate_path_errors(
    task: SynthesisTask,
    design: np.ndarray,
    settings: SolverSettings | None = None,
    formulation: str | None = None,
    seeds: Sequence[np.ndarray] | None = None,
) -> PathErrors:
    """Distance from each target to the closest point the rigid linkage reaches.

    Every link keeps its design length. Each solve starts from the deformed
    pose of the pinned analysis at the same step (so it stays on the assembly
    branch the objective saw) and draws the coupler as close to the target as
    the rigid linkage allows. ``seeds`` replaces those pinned poses, e.g.
    with the ones a synthesis run ended on.
    """
    settings = settings or task.settings
    design = np.asarray(design, dtype=float).ravel()
    if not np.all(np.isfinite(design)):
        raise ValueError("design vector must be finite")
    mech: Mechanism = task.mechanism.with_design(design)
    if seeds is None:
        seeds = [r.position for r in synthesis_objective(task, design, formulation, settings.inner())[1]]
    reaches, dist = [], []
    for j, (pt, seed) in enumerate(zip(task.points, seeds)):
        res = solve_nearest_reach(mech, task.coupler, pt.target, _requirements(task, j, formulation),
                                  seed, settings.inner())
        if res.status == NUMERICAL_FAILURE:
            raise SynthesisError(j, res.message)
        reaches.append(res)
        dist.append(float(np.hypot(*(res.coords(task.coupler) - np.asarray(pt.target)))))
    d = np.array(dist)
    return PathErrors(d, float(d.mean()), float(d.std()), reaches)
