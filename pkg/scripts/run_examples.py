"""Run the bundled example tasks and collect traces, reports and drawings.

    python3 scripts/run_examples.py --out runs/            # all five
    python3 scripts/run_examples.py ex1 ex3 --formulation squared

Examples 1-3 are analyses and finish in well under a second. Example 4 takes
about half a minute and example 5 around twenty minutes on one core.
"""
from __future__ import annotations

import argparse
import json
import time
from importlib.resources import as_file, files
from pathlib import Path

from linksynth.cli import run_cli

ANALYSES = ("ex1", "ex2", "ex3")
SYNTHESES = ("ex4", "ex5")


def run(name: str, out: Path, formulation: str | None) -> dict:
    command = "analyze" if name in ANALYSES else "synthesize"
    stem = out / (name if formulation is None else f"{name}_{formulation}")
    with as_file(files("linksynth") / "fixtures" / f"{name}.json") as task:
        argv = [command, str(task), "--trace", f"{stem}.csv", "--svg", f"{stem}.svg",
                "--out", f"{stem}.json"]
        if formulation:
            argv += ["--formulation", formulation]
        print(f"== {name} ({command})")
        t0 = time.perf_counter()
        code = run_cli(argv)
        wall = time.perf_counter() - t0
    report = json.loads(Path(f"{stem}.json").read_text()) if Path(f"{stem}.json").exists() else {}
    return {"example": name, "exit": code, "wall_s": round(wall, 3), "status": report.get("status"),
            "iterations": report.get("iterations")}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("examples", nargs="*", default=[*ANALYSES, *SYNTHESES])
    parser.add_argument("--out", type=Path, default=Path("runs"))
    parser.add_argument("--formulation", choices=("euclidean", "squared"))
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    summary = [run(name, args.out, args.formulation) for name in args.examples]
    print()
    for row in summary:
        print(f"{row['example']:4s} exit {row['exit']}  {row['status']!s:15s} "
              f"{row['iterations']!s:>4s} its  {row['wall_s']:8.2f} s")
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
