"""Command-line drivers: ``linksynth analyze`` and ``linksynth synthesize``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import AnalysisResult, solve_deformed_position
from .model import EUCLIDEAN, SQUARED, InvalidMechanismError, lengths_from_design
from .solver import CONVERGED, MAX_ITERATIONS, IterationRecord
from .svg import SvgOptions, render_analysis_svg, render_synthesis_svg
from .synthesis import SynthesisError, SynthesisResult, synthesize
from .taskfile import TaskFile, TaskFileError, finite_or_nan, load_task, serialize_task

TRACE_HEADER = ["iter", "objective", "log10_objective", "constraint_error", "log10_error", "step_norm"]
EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2

log = logging.getLogger("linksynth")


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.15g}"


def _log10(v: float) -> str:
    if v == 0.0:
        return ""
    return "nan" if not (math.isfinite(v) and v > 0) else f"{math.log10(v):.15g}"


def trace_rows(trace: Sequence[IterationRecord]) -> list[list[str]]:
    return [[str(r.index), _fmt(r.objective), _log10(r.objective), _fmt(r.constraint_error),
             _log10(r.constraint_error), _fmt(r.step_norm)] for r in trace]


def trace_csv(trace: Sequence[IterationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    w.writerows(trace_rows(trace))
    return buf.getvalue()


def _trace_table(trace: Sequence[IterationRecord]) -> str:
    def lg(v):
        return f"{math.log10(v):8.2f}" if v > 0 and math.isfinite(v) else " " * 8
    lines = [f"{'iter':>4}  {'objective':>10}  {'log':>8}  {'error':>10}  {'log':>8}"]
    for r in trace:
        lines.append(f"{r.index:4d}  {r.objective:10.3g}  {lg(r.objective)}  "
                     f"{r.constraint_error:10.3g}  {lg(r.constraint_error)}")
    return "\n".join(lines)


def _all_finite(obj) -> bool:
    if isinstance(obj, float):
        return math.isfinite(obj)
    if isinstance(obj, dict):
        return all(_all_finite(v) for v in obj.values())
    if isinstance(obj, list):
        return all(_all_finite(v) for v in obj)
    return True


def _sanitize(obj):
    if isinstance(obj, float):
        return finite_or_nan(obj)
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_sanitize(v) for v in obj]
    return obj


def analysis_report(task: TaskFile, res: AnalysisResult) -> dict:
    m = task.mechanism
    lengths = lengths_from_design(m, res.position.ravel())
    reqs = [r.constraint for r in task.distance_requirements]
    return {
        "kind": "analysis",
        "status": res.status,
        "iterations": res.iterations,
        "energy": float(res.energy),
        "stationarity": float(res.stationarity),
        "nodes": [{"id": n.id, "kind": n.kind, "x": float(p[0]), "y": float(p[1])}
                  for n, p in zip(m.nodes, res.position)],
        "links": [{"i": l.i, "j": l.j, "rest_length": float(L), "length": float(d)}
                  for l, L, d in zip(m.links, m.rest_lengths(), lengths)],
        "distance_requirements": [
            {"a": c.a, "b": c.b, "target": c.target, "formulation": c.formulation, "error": float(e)}
            for c, e in zip(reqs, res.constraint_errors)],
        "multipliers": [float(v) for v in res.multipliers],
    }


def synthesis_report(task: TaskFile, res: SynthesisResult) -> dict:
    m = task.mechanism
    P = res.design.reshape(-1, 2)
    index = m.index()
    out = {
        "kind": "synthesis",
        "status": res.status,
        "iterations": res.iterations,
        "objective": float(res.objective),
        "stationarity": float(res.stationarity),
        "nodes": [{"id": n.id, "kind": n.kind, "x": float(p[0]), "y": float(p[1])}
                  for n, p in zip(m.nodes, P)],
        "links": [{"i": l.i, "j": l.j, "rest_length": float(L)}
                  for l, L in zip(m.links, res.rest_lengths)],
        "length_constraints": [
            {"a": c.a, "b": c.b, "target": c.target, "formulation": c.formulation,
             "length": float(np.hypot(*(P[index[c.b]] - P[index[c.a]]))), "error": float(e)}
            for c, e in zip(task.length_constraints, res.length_errors)],
        "multipliers": [float(v) for v in res.multipliers],
    }
    points = []
    for j, (pt, o) in enumerate(zip(task.points, res.per_point)):
        entry = {"index": j, "x": pt.x, "y": pt.y, "energy": float(o.analysis.energy)}
        if o.distance is not None:
            entry["distance"] = o.distance
        points.append(entry)
    out["points"] = points
    if res.path_errors is not None:
        out["path_errors"] = {"mean": res.path_errors.mean, "std": res.path_errors.std}
    return out


def _settings(task: TaskFile, args) -> TaskFile:
    changes = {}
    if args.tol is not None:
        changes["constraint_tol"] = args.tol
    if args.max_iters is not None:
        changes["max_iterations"] = args.max_iters
    if changes:
        task.settings = replace(task.settings, **changes)
    return task


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _finish(status: str, trace, report: dict, args, svg) -> int:
    if args.trace:
        _write(args.trace, trace_csv(trace))
    finite = _all_finite(report) and all(
        math.isfinite(r.objective) and math.isfinite(r.constraint_error) for r in trace)
    if args.out:
        _write(args.out, json.dumps(_sanitize(report), indent=2) + "\n")
    if args.svg and finite:
        _write(args.svg, svg())
    if not finite:
        print("error: non-finite values in the result (written as nan)", file=sys.stderr)
        return EXIT_ERROR
    if status == CONVERGED:
        return EXIT_OK
    return EXIT_MAX_ITER if status == MAX_ITERATIONS else EXIT_ERROR


def cmd_analyze(task: TaskFile, args) -> int:
    problem = task.analysis_problem()
    res = solve_deformed_position(problem, args.formulation, task.settings)
    print(f"status      {res.status}")
    print(f"iterations  {res.iterations}")
    print(f"energy      {_fmt(res.energy)}")
    for r, e in zip(task.distance_requirements, res.constraint_errors):
        c = r.constraint
        print(f"|c| {c.a}-{c.b}    {_fmt(float(e))}")
    print(_trace_table(res.trace))
    if res.message:
        print(f"note: {res.message}", file=sys.stderr)
    reqs = [r.constraint for r in task.distance_requirements]
    return _finish(res.status, res.trace, analysis_report(task, res), args,
                   lambda: render_analysis_svg(task.mechanism, res, reqs))


def cmd_synthesize(task: TaskFile, args) -> int:
    st = task.synthesis_task()
    res = synthesize(st, args.formulation, st.settings, path_errors=True)
    print(f"status      {res.status}")
    print(f"iterations  {res.iterations}")
    print(f"objective   {_fmt(res.objective)}")
    for c, e in zip(st.length_constraints, res.length_errors):
        print(f"|c| {c.a}-{c.b}    {_fmt(float(e))}")
    if res.path_errors is not None:
        pe = res.path_errors
        print("point  distance")
        for j, d in enumerate(pe.distances):
            print(f"{j:5d}  {_fmt(float(d))}")
        print(f"mean {_fmt(pe.mean)}  std {_fmt(pe.std)}")
    print(_trace_table(res.objective_trace))
    if res.message:
        print(f"note: {res.message}", file=sys.stderr)
    targets = [p.target for p in st.points]
    return _finish(res.status, res.objective_trace, synthesis_report(task, res), args,
                   lambda: render_synthesis_svg(st.mechanism, res, targets, st.length_constraints,
                                                SvgOptions(overlay=not args.no_overlay)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linksynth", description="Deformed-position analysis and dimensional synthesis of planar linkages.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("analyze", "minimum-energy pose under distance requirements"),
                           ("synthesize", "optimise design coordinates over precision points")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("task", help="JSON task file")
        p.add_argument("--formulation", choices=(EUCLIDEAN, SQUARED), default=None,
                       help="override every constraint's formulation (default: as declared, euclidean)")
        p.add_argument("--tol", type=float, help="constraint tolerance")
        p.add_argument("--max-iters", type=int, help="iteration limit")
        p.add_argument("--trace", metavar="CSV", help="write the iteration trace")
        p.add_argument("--svg", metavar="SVG", help="draw the result")
        p.add_argument("--out", metavar="JSON", help="write the result report")
        p.add_argument("--seed-report", action="store_true", help="echo the parsed task first")
        if name == "synthesize":
            p.add_argument("--no-overlay", action="store_true",
                           help="draw only the final design, not the pose at each point")
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        task = _settings(load_task(args.task), args)
        if args.seed_report:
            sys.stdout.write(serialize_task(task))
        if args.command == "analyze":
            return cmd_analyze(task, args)
        return cmd_synthesize(task, args)
    except TaskFileError as err:
        print(f"error: {err}", file=sys.stderr)
    except (InvalidMechanismError, SynthesisError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numerical error: {err}", file=sys.stderr)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())
