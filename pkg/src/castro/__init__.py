"""
castro: constrained sequential Latin hypercube sampling for mixture designs.

Recommends a small batch of new mixture experiments that spread over the
feasible region (unit sum, per-component bounds, optional synthesis rules)
while staying away from experiments already run.
"""

from castro.conditioned import SamplerConfig, conditioned_sample, greedy_pairing
from castro.errors import CastroError, CastroWarning, ConfigError, DataError, InfeasibleError
from castro.lhs import Engine, RngStream, lhs_unit, lhsmdu_unit
from castro.metrics import (
    MetricsReport,
    centered_l2_discrepancy,
    design_variance,
    metrics_table,
    pca_project_2d,
    wraparound_l2_discrepancy,
)
from castro.permutations import enumerate_bound_permutations, run_all_permutations
from castro.pipeline import PipelineOptions, PipelineResult, run_pipeline
from castro.problem import (
    ComponentBounds,
    ExperimentDataset,
    ProblemSpec,
    load_experiment_csv,
    load_problem_config,
    parse_problem_config,
)
from castro.selection import farthest_from_data, round_and_renormalize
from castro.synthesis import apply_onehot_synthesis, apply_pair_synthesis

__version__ = "0.1.0"

__all__ = [
    "CastroError", "CastroWarning", "ComponentBounds", "ConfigError", "DataError", "Engine",
    "ExperimentDataset", "InfeasibleError", "MetricsReport", "PipelineOptions",
    "PipelineResult", "ProblemSpec", "RngStream", "SamplerConfig", "apply_onehot_synthesis",
    "apply_pair_synthesis", "centered_l2_discrepancy", "conditioned_sample", "design_variance",
    "enumerate_bound_permutations", "farthest_from_data", "greedy_pairing", "lhs_unit",
    "lhsmdu_unit", "load_experiment_csv", "load_problem_config", "metrics_table",
    "parse_problem_config", "pca_project_2d", "round_and_renormalize", "run_all_permutations",
    "run_pipeline", "wraparound_l2_discrepancy", "__version__",
]
