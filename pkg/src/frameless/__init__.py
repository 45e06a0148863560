"""Exact finite-length analysis of frameless ALOHA with successive interference cancellation."""
from .bounds import BoundResult, per_lower_bound, two_stage_lower_bound
from .degree_model import (
    DegreeDistribution,
    ProtocolConfig,
    SingleStage,
    TwoStage,
    binomial_omega,
    poisson_omega,
    two_stage_omega,
)
from .exact_analysis import (
    AnalysisResult,
    DegenerateDistributionError,
    StateDistribution,
    analyze,
    initial_state,
    q_u,
    transition,
)
from .monte_carlo import ContentionGraph, SimulationResult, peel, sample_graph, simulate
from .optimizer import PeakResult, TwoStageResult, optimize_floor, optimize_peak, sweep
from .small_oracle import OracleResult, enumerate_exact

__version__ = "0.1.0"
