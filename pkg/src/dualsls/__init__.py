"""Dual-control LQR synthesis with data-driven ellipsoidal uncertainty.

Synthesizes linear-quadratic controllers that optimize nominal performance
while robustly stabilizing every plant in an identified uncertainty
ellipsoid, solves the two-phase explore/exploit planning problem by convex
relaxation, and ships a paired Monte Carlo harness comparing the nominal,
dual, and greedy strategies.
"""

__version__ = "0.1.0"

from .experiments import (EpisodeResult, ExperimentConfig, MonteCarloResult,
                          generate_initial_data, monte_carlo, run_episode,
                          tune_greedy_sigma)
from .identify import (Dataset, Model, build_model, chi_square_quantile,
                       in_credibility_region, least_squares, merge)
from .lin_sys import (CostWeights, LTISystem, SLSController, Trajectory,
                      closed_loop_matrix, evaluate_cost, realize_controller,
                      simulate, spectral_radius,
                      stationary_cost_with_excitation)
from .sls_core import (FIRPair, HinfCertificate, PhiStack, UncertaintyExpr,
                       hinf_norm_bound, linearized_uncertainty,
                       propagated_uncertainty)
from .synthesis import (DualPlan, SynthesisResult, dual_synthesis,
                        nominal_synthesis, robust_synthesis)

__all__ = [
    "__version__",
    "LTISystem", "CostWeights", "Trajectory", "SLSController", "FIRPair",
    "PhiStack", "HinfCertificate", "UncertaintyExpr", "Dataset", "Model",
    "SynthesisResult", "DualPlan", "ExperimentConfig", "EpisodeResult",
    "MonteCarloResult",
    "simulate", "evaluate_cost", "realize_controller", "closed_loop_matrix",
    "spectral_radius", "stationary_cost_with_excitation",
    "least_squares", "chi_square_quantile", "build_model",
    "in_credibility_region", "merge",
    "hinf_norm_bound", "propagated_uncertainty", "linearized_uncertainty",
    "nominal_synthesis", "robust_synthesis", "dual_synthesis",
    "generate_initial_data", "run_episode", "tune_greedy_sigma", "monte_carlo",
]
