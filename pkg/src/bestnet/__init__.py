"""Flow-level models of best-effort networks under min and max-min sharing."""

from .allocation import Allocation, Policy, alloc_maxmin, alloc_min, verify_feasibility, verify_maxmin_conditions
from .heavy_traffic import OdeSolution, blasius_residual, estimate_A, solve_cv_system
from .meanfield import (
    AsymStarProblem,
    AsymStarSolution,
    ConvergenceError,
    MeanFieldProblem,
    MeanFieldSolution,
    compute_u,
    fixed_point_solve,
    mean_transfer_time,
    peak_index,
    solve_asym_star,
)
from .network import (
    LinkSpec,
    LoadReport,
    NetworkSpec,
    RouteSpec,
    Stability,
    ValidationError,
    classify_stability,
    compute_link_loads,
    gen_asym_star,
    gen_hypercube,
    gen_linear,
    gen_star,
)
from .simulator import SimConfig, SimStats, occupancy_cdf, run, run_coupled, sup_cdf_distance

__version__ = "0.1.0"
