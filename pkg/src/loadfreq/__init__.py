"""Load-side frequency control under stochastic line-weight noise.

Build a closed-loop swing/flow model from a network document, reduce it onto
its stable subspace, compute the mean-square stability margin via an H2
interaction matrix, cross-validate with moment ODEs, and Monte Carlo the
full stochastic loop.
"""

__version__ = "0.1.0"

from .netmodel import (Bus, InvariantError, Line, PowerNetwork, SchemaError,
                       Scenario, apply_power_step, incidence_matrices,
                       line_weight, line_weights, network_hash, parse_network,
                       parse_network_file, serialize_network)
from .olc import OlcSolution, control_law, cost, dual_objective, solve_olc
from .sysbuild import (StateSpaceModel, assemble, compute_equilibrium, drift,
                       load_frequencies, with_power_step)
from .reduction import ReducedModel, ReductionError, rank1_factors, reduce_model
from .msstab import (StabilityReport, analyze, critical_variance, h2_matrix,
                     is_mss, spectral_radius)
from .moments import (DichotomyReport, MomentTrajectory, VectorizedGenerator,
                      critical_variance_bisect, dichotomy_check, hurwitz_oracle,
                      propagate_moments, steady_state_covariance,
                      vectorized_generator)
from .sde import (EnsembleStats, SimConfig, StepDisturbance, em_step,
                  path_noise_increments, realized_voltage_product,
                  simulate_ensemble, simulate_paths)
from .experiments import (SweepPoint, SweepResult, parse_report_csv, report,
                          sweep_cost, sweep_penetration)

__all__ = [
    "__version__",
    "Bus", "Line", "Scenario", "PowerNetwork", "SchemaError", "InvariantError",
    "parse_network", "parse_network_file", "serialize_network", "network_hash",
    "line_weight", "line_weights", "incidence_matrices", "apply_power_step",
    "OlcSolution", "cost", "control_law", "dual_objective", "solve_olc",
    "StateSpaceModel", "assemble", "compute_equilibrium", "drift",
    "load_frequencies", "with_power_step",
    "ReducedModel", "ReductionError", "reduce_model", "rank1_factors",
    "StabilityReport", "h2_matrix", "spectral_radius", "critical_variance",
    "is_mss", "analyze",
    "MomentTrajectory", "VectorizedGenerator", "DichotomyReport",
    "propagate_moments", "vectorized_generator", "hurwitz_oracle",
    "steady_state_covariance", "critical_variance_bisect", "dichotomy_check",
    "SimConfig", "StepDisturbance", "EnsembleStats", "em_step",
    "simulate_ensemble", "simulate_paths", "path_noise_increments",
    "realized_voltage_product",
    "SweepPoint", "SweepResult", "sweep_cost", "sweep_penetration", "report",
    "parse_report_csv",
]
