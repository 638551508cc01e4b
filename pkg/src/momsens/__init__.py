"""Moment-closure simulation and sensitivity analysis for stochastic reaction networks."""

__version__ = "0.1.0"

from .closure import MomentState, MomentSystem, build_moment_system, rhs_eval, simulate, simulate_many
from .cme import (
    build_generator,
    enumerate_states,
    evolve,
    moments_from_distribution,
    oracle_moments,
)
from .integrate import IntegrationError, Trajectory, default_grid, integrate, integrate_batch
from .local import fd_sensitivity, local_sensitivity, normalize, perturbation_sweep
from .model import (
    ModelError,
    ParameterPoint,
    ReactionNetwork,
    load_model,
    parse_model,
    propensity_eval,
    propensity_polynomials,
    render_model,
    shipped_model_path,
)
from .sobol import (
    ParameterBox,
    evaluate_design,
    jansen_indices,
    martinez_indices,
    sample_design,
    sobol_analysis,
)
