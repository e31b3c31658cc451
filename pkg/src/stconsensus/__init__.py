"""Structure-based self-triggered consensus: simulation, reduction to delayed
discrete-time consensus, and the matrix tools behind the convergence checks."""

from .config import ScenarioConfig, builtin_config, config_from_dict, load_config
from .delayed import DelayedSystem, build_B, run_to_consensus, step_delayed
from .graph import delta_matrix, has_delta_spanning_tree, is_laplacian, laplacian_from_weights
from .harness import RunSummary, analyze_matrix_file, estimate_mean_topology, run_scenario
from .reduction import compute_bounds, extract_reduced, verify_reduction, window_B_domination_check
from .sim import (
    DtRule,
    EventLog,
    SchedulerParams,
    Trajectory,
    run_centralized,
    run_centralized_switching,
    run_distributed,
    run_distributed_iid,
    run_distributed_scaled,
)
from .stochastic import (
    delta_coefficient,
    is_scrambling,
    is_sia_power_oracle,
    is_sia_sufficient,
    lambda_coefficient,
    left_product,
)

__version__ = "0.1.0"
