"""Energy-based analysis and dimensional synthesis of planar linkages."""
from .analysis import AnalysisProblem, AnalysisResult, solve_deformed_position
from .model import (
    Link, Mechanism, Node, PairConstraint, PrecisionPoint, SolverSettings, SynthesisTask,
    lengths_from_design, validate_mechanism,
)
from .synthesis import SynthesisResult, evaluate_path_errors, synthesis_objective, synthesize

__all__ = [
    "AnalysisProblem", "AnalysisResult", "Link", "Mechanism", "Node", "PairConstraint",
    "PrecisionPoint", "SolverSettings", "SynthesisResult", "SynthesisTask", "evaluate_path_errors",
    "lengths_from_design", "solve_deformed_position", "synthesis_objective", "synthesize",
    "validate_mechanism",
]
__version__ = "0.1.0"
