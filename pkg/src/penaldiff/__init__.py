"""Penalized diffusion for distributed constrained stochastic optimization."""

from .diffusion import (
    NetworkState,
    Strategy,
    StepParams,
    Trajectory,
    agent_rngs,
    baseline_round,
    diffusion_round,
    project_affine,
    run,
)
from .estimator import PenalizedDiffusionRegressor
from .metrics import MetricsSeries, msd, scaling_fit, steady_state_msd
from .oracle import (
    GlobalProblem,
    contraction_factor,
    noiseless_fixed_point,
    solve_constrained,
    solve_penalized,
    step_size_bound,
    step_size_terms,
)
from .penalty import PenaltySpec, curvature_bound, penalty_eval
from .problem import (
    AffineConstraint,
    AgentProblem,
    ConvexConstraint,
    QuadraticCost,
    StreamingMSECost,
    ZeroCost,
    hessian_bounds,
)
from .topology import (
    CombinationMatrix,
    Graph,
    metropolis_weights,
    validate_combination,
    validate_composite,
)

__version__ = "0.1.0"
