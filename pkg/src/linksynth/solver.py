"""Equality-constrained SQP with a null-space solve of the KKT system.

Lagrangian convention is ``L(x, lam) = f(x) - lam . c(x)``, so at a solution
``grad f = E^T lam`` with ``E`` the constraint Jacobian.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np
import scipy.linalg as sla

from .constraints import ConstraintEvaluation
from .model import SolverSettings

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


class RankDeficientError(np.linalg.LinAlgError):
    """Constraint Jacobian without full row rank; ``rows`` are the dependent ones."""

    def __init__(self, rows: Sequence[int]):
        self.rows = list(rows)
        super().__init__(f"constraint Jacobian is rank deficient; dependent rows {self.rows}")


class NonFiniteError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ObjectiveModel:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class ConstraintTerm:
    """A constraint evaluation plus where its 4 slots land (-1 = not a variable)."""

    evaluation: ConstraintEvaluation
    slots: tuple[int, int, int, int]


@dataclass(frozen=True)
class KktSystem:
    H: np.ndarray
    E: np.ndarray
    G: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def r(self) -> int:
        return self.E.shape[0]


@dataclass(frozen=True)
class KktStep:
    dx: np.ndarray
    dlam: np.ndarray
    regularized: bool
    tau: float = 0.0


@dataclass(frozen=True)
class IterationRecord:
    index: int
    objective: float
    constraint_error: float
    step_norm: float
    multipliers: np.ndarray
    alpha: float = 0.0
    regularized: bool = False


@dataclass
class SqpResult:
    x: np.ndarray
    multipliers: np.ndarray
    trace: list[IterationRecord]
    status: str
    objective: float
    constraints: np.ndarray
    stationarity: float = math.inf
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


class SqpProblem(Protocol):
    """Callbacks consumed by :func:`sqp_minimize`.

    ``values`` is the cheap path used by the step control; ``model`` returns
    the objective's second-order model and the constraint terms at ``x``.
    """

    def values(self, x: np.ndarray) -> tuple[float, np.ndarray]: ...

    def model(self, x: np.ndarray) -> tuple[ObjectiveModel, list[ConstraintTerm]]: ...


def scatter_constraints(terms: Sequence[ConstraintTerm], n: int):
    """Jacobian rows, residuals and scattered Hessian blocks of ``terms``."""
    E = np.zeros((len(terms), n))
    R = np.zeros(len(terms))
    hessians = []
    for z, term in enumerate(terms):
        slots = np.asarray(term.slots, dtype=int)
        if slots.max(initial=-1) >= n:
            raise IndexError(f"constraint {z} slot map {term.slots} out of range for n={n}")
        keep = slots >= 0
        E[z, slots[keep]] = term.evaluation.gradient_block[keep]
        R[z] = term.evaluation.value
        hz = np.zeros((n, n))
        hz[np.ix_(slots[keep], slots[keep])] = term.evaluation.hessian_block[np.ix_(keep, keep)]
        hessians.append(hz)
    return E, R, hessians


def assemble_kkt(
    objective: ObjectiveModel,
    constraints: Sequence[ConstraintTerm],
    multipliers: np.ndarray | None = None,
) -> KktSystem:
    n = len(objective.gradient)
    lam = np.zeros(len(constraints)) if multipliers is None else np.asarray(multipliers, float)
    E, R, hessians = scatter_constraints(constraints, n)
    H = np.array(objective.hessian, dtype=float, copy=True)
    for lz, hz in zip(lam, hessians):
        H -= lz * hz
    G = np.asarray(objective.gradient, dtype=float) - E.T @ lam
    return KktSystem(H=0.5 * (H + H.T), E=E, G=G, R=R)


def _null_space_split(E: np.ndarray, rank_tol: float):
    """Orthogonal split of R^n into range(E^T) (Y) and null(E) (Z)."""
    r, n = E.shape
    if r == 0:
        return np.zeros((n, 0)), np.eye(n), np.zeros((0, 0))
    if r > n:
        raise RankDeficientError(range(n, r))
    Q, Rf, piv = sla.qr(E.T, pivoting=True)
    diag = np.abs(np.diag(Rf))
    scale = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > rank_tol * scale)) if scale > 0 else 0
    if rank < r:
        raise RankDeficientError(sorted(piv[rank:].tolist()))
    # undo the column pivoting so R1 maps onto E's row order
    R1 = np.zeros((r, r))
    R1[:, piv] = Rf[:r, :r]
    return Q[:, :r], Q[:, r:], R1


def _shifted_cholesky(M: np.ndarray, floor: float):
    """Cholesky factor of ``M + tau*I`` with the smallest tau of a doubling sequence from ``floor``."""
    eye = np.eye(M.shape[0])
    try:
        return sla.cho_factor(M, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    tau = floor
    while tau < 1e300:
        try:
            return sla.cho_factor(M + tau * eye, lower=True), tau
        except np.linalg.LinAlgError:
            tau *= 2.0
    raise NonFiniteError("regularization failed to produce a positive definite matrix")


def _ldl_solve(M: np.ndarray, b: np.ndarray):
    """Bunch-Kaufman solve of symmetric ``M``; returns (x, indefinite) or None if singular."""
    lu, d, perm = sla.ldl(M, lower=True)
    eig = np.linalg.eigvalsh(d)
    scale = float(np.max(np.abs(eig), initial=0.0))
    if scale == 0.0 or np.min(np.abs(eig)) <= 1e-13 * scale:
        return None
    L = lu[perm]
    y = sla.solve_triangular(L, b[perm], lower=True, unit_diagonal=True)
    z = np.linalg.solve(d, y)
    x = np.empty_like(b)
    x[perm] = sla.solve_triangular(L.T, z, lower=False, unit_diagonal=True)
    return x, bool(np.any(eig < 0))


def _reduced_solve(M: np.ndarray, b: np.ndarray, settings: SolverSettings):
    """Solve the reduced system; returns (w, curvature_flag, tau)."""
    try:
        # positive definite: plain Cholesky, no flag
        return sla.cho_solve((np.linalg.cholesky(M), True), b), False, 0.0
    except np.linalg.LinAlgError:
        pass
    if settings.curvature == "newton":
        out = _ldl_solve(M, b)
        if out is not None:
            return out[0], out[1], 0.0
    factor, tau = _shifted_cholesky(M, settings.regularization_floor)
    return sla.cho_solve(factor, b), tau > 0.0, tau


def solve_kkt(sys: KktSystem, settings: SolverSettings | None = None) -> KktStep:
    """Null-space solution of ``[[H, -E^T], [E, 0]] (dx, dlam) = -(G, R)``.

    With ``settings.curvature == "shift"`` a reduced Hessian that is not
    positive definite gets ``tau * I`` added, ``tau`` doubling from
    ``settings.regularization_floor``. The default ``"newton"`` keeps the
    exact Newton step on indefinite reduced Hessians (flagging them) and only
    shifts singular ones.
    """
    settings = settings or SolverSettings()
    for name in ("H", "E", "G", "R"):
        if not np.all(np.isfinite(getattr(sys, name))):
            raise NonFiniteError(f"non-finite entries in KKT block {name}")
    H, E, G, R = sys.H, sys.E, sys.G, sys.R
    Y, Z, R1 = _null_space_split(E, settings.rank_tol)
    dx_p = Y @ np.linalg.solve(R1.T, -R) if R.size else np.zeros(sys.n)
    flagged, tau = False, 0.0
    if Z.shape[1]:
        reduced = Z.T @ H @ Z
        reduced = 0.5 * (reduced + reduced.T)
        w, flagged, tau = _reduced_solve(reduced, -(Z.T @ (G + H @ dx_p)), settings)
        dx = dx_p + Z @ w
    else:
        dx = dx_p
    if R.size:
        dlam = np.linalg.solve(R1, Y.T @ (G + H @ dx))
    else:
        dlam = np.zeros(0)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dlam))):
        raise NonFiniteError("non-finite KKT step")
    return KktStep(dx=dx, dlam=dlam, regularized=flagged, tau=tau)


def stationarity(objective: ObjectiveModel, E: np.ndarray, lam: np.ndarray) -> float:
    g = np.asarray(objective.gradient)
    res = g - E.T @ lam if E.size else g
    return float(np.max(np.abs(res), initial=0.0))


def _merit(f: float, c: np.ndarray, rho: float) -> float:
    return f + rho * float(np.max(np.abs(c), initial=0.0))


def _solve_dropping_dependent(sys: KktSystem, settings: SolverSettings) -> KktStep:
    try:
        return solve_kkt(sys, settings)
    except RankDeficientError as err:
        keep = [z for z in range(sys.r) if z not in set(err.rows)]
        logger.debug("dropping dependent constraint rows %s for this step", err.rows)
        sub = KktSystem(sys.H, sys.E[keep], sys.G, sys.R[keep])
        step = solve_kkt(sub, settings)
        dlam = np.zeros(sys.r)
        dlam[keep] = step.dlam
        return KktStep(step.dx, dlam, step.regularized, step.tau)


def _trial(problem, xt):
    try:
        ft, ct = problem.values(xt)
        ct = np.atleast_1d(np.asarray(ct, dtype=float))
    except (ArithmeticError, np.linalg.LinAlgError):
        return None
    if math.isfinite(ft) and bool(np.all(np.isfinite(ct))):
        return ft, ct
    return None


def _penalty(lam: np.ndarray, dlam: np.ndarray) -> float:
    return 10.0 * max(1.0, float(np.max(np.abs(lam), initial=0.0)),
                      float(np.max(np.abs(lam + dlam), initial=0.0)))


def _halving_search(problem, sys, x, f, c, lam, settings):
    """Backtrack along one KKT step; the full step may raise the merit by a factor."""
    step = _solve_dropping_dependent(sys, settings)
    rho = _penalty(lam, step.dlam)
    merit0 = _merit(f, c, rho)
    alpha, best = 1.0, None
    for attempt in range(settings.step_halving_limit + 1):
        xt = x + alpha * step.dx
        out = _trial(problem, xt)
        if out is not None:
            mt = _merit(out[0], out[1], rho)
            if best is None or mt < best[0]:
                best = (mt, alpha, xt, out)
            limit = merit0 * (1.0 + settings.merit_allowance) if attempt == 0 else merit0
            if mt <= limit:
                best = (mt, alpha, xt, out)
                break
        alpha *= 0.5
    if best is None:
        return None
    _, alpha, xt, (ft, ct) = best
    return alpha, step, xt, ft, ct


def _damped_search(problem, sys, x, f, c, lam, settings, state):
    """Full steps of ``(H + mu*I)``; mu grows until the merit decreases."""
    shift = replace(settings, curvature="shift")
    hnorm = float(np.linalg.norm(sys.H))
    # curvature in these problems spans many decades, so damping starts small
    scale = max(settings.regularization_floor, 1e-6 * hnorm)
    floor = settings.damping_floor * hnorm
    mu = max(state.get("mu", 0.0), floor)
    eye = np.eye(sys.n)
    best = None
    for _ in range(settings.step_halving_limit + 1):
        damped = KktSystem(sys.H + mu * eye, sys.E, sys.G, sys.R)
        step = _solve_dropping_dependent(damped, shift)
        rho = _penalty(lam, step.dlam)
        merit0 = _merit(f, c, rho)
        xt = x + step.dx
        out = _trial(problem, xt)
        if out is not None and sys.r and _merit(out[0], out[1], rho) > merit0:
            # second-order correction: pull the trial back onto the linearised constraints
            xs = xt - np.linalg.lstsq(sys.E, out[1], rcond=None)[0]
            soc = _trial(problem, xs)
            if soc is not None and _merit(soc[0], soc[1], rho) < _merit(out[0], out[1], rho):
                xt, out = xs, soc
        if out is not None:
            mt = _merit(out[0], out[1], rho)
            logger.debug("damped trial mu=%.3g merit %.6g -> %.6g", mu, merit0, mt)
            if mt <= merit0:
                state["mu"] = 0.0 if mu <= max(scale * 1e-3, floor) else mu / 4.0
                return 1.0, step, xt, out[0], out[1]
            if best is None or mt < best[0]:
                best = (mt, step, xt, out)
        mu = max(4.0 * mu, scale)
    state["mu"] = mu
    if best is None:
        return None
    _, step, xt, (ft, ct) = best
    return 1.0, step, xt, ft, ct


def sqp_minimize(
    problem: SqpProblem,
    x0: np.ndarray,
    lam0: np.ndarray | None = None,
    settings: SolverSettings | None = None,
    *,
    step_control: str = "halving",
) -> SqpResult:
    """Sequential quadratic programming from ``x0``.

    ``step_control`` is ``"halving"`` (backtrack along the KKT step) or
    ``"damped"`` (add ``mu*I`` to the Hessian until a full step lowers the
    merit function; suited to noisy, badly scaled objectives).
    """
    settings = settings or SolverSettings()
    if step_control not in ("halving", "damped"):
        raise ValueError("step_control must be 'halving' or 'damped'")
    x = np.array(x0, dtype=float, copy=True).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("start vector must be finite")
    f, c = problem.values(x)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    lam = np.zeros(c.size) if lam0 is None else np.array(lam0, dtype=float, copy=True)
    if not (math.isfinite(f) and np.all(np.isfinite(c))):
        return SqpResult(x, lam, [], NUMERICAL_FAILURE, f, c, message="non-finite start")

    trace = [IterationRecord(0, f, float(np.max(np.abs(c), initial=0.0)), 0.0, lam.copy())]
    f_prev = None
    status, message, stat = MAX_ITERATIONS, "", math.inf
    state: dict = {}
    while True:
        try:
            objective, terms = problem.model(x)
            sys = assemble_kkt(objective, terms, lam)
        except (ArithmeticError, np.linalg.LinAlgError) as err:
            status, message = NUMERICAL_FAILURE, str(err)
            break
        stat = stationarity(objective, sys.E, lam)
        gscale = max(1.0, float(np.max(np.abs(objective.gradient), initial=0.0)))
        feasible = float(np.max(np.abs(c), initial=0.0)) < settings.constraint_tol
        stationary = stat <= settings.stationarity_tol * gscale
        flat = f_prev is not None and abs(f - f_prev) < settings.energy_tol * max(1.0, abs(f))
        if feasible and stationary and (flat or stat <= 1e-13 * gscale):
            status = CONVERGED
            break
        if len(trace) > settings.max_iterations:
            status = MAX_ITERATIONS
            break

        try:
            if step_control == "damped":
                found = _damped_search(problem, sys, x, f, c, lam, settings, state)
            else:
                found = _halving_search(problem, sys, x, f, c, lam, settings)
        except (ArithmeticError, np.linalg.LinAlgError) as err:
            status, message = NUMERICAL_FAILURE, str(err)
            break
        if found is None:
            status, message = NUMERICAL_FAILURE, "no finite trial point along the step"
            break
        alpha, step, x, f_new, c = found
        lam = lam + alpha * step.dlam
        f_prev, f = f, f_new
        trace.append(IterationRecord(
            len(trace), f, float(np.max(np.abs(c), initial=0.0)),
            float(alpha * np.linalg.norm(step.dx)), lam.copy(), alpha, step.regularized,
        ))
    return SqpResult(x, lam, trace, status, f, c, stat, message)
