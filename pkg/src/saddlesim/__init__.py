"""Simulator for distributed saddle-point methods under function similarity.

The package builds (strongly-)convex-(strongly-)concave min-max problems
shared across a network of agents, runs similarity-exploiting sliding
methods against extragradient baselines with theory-prescribed tunings,
and records communication-vs-accuracy traces.
"""

from .core import (
    ConstraintSet,
    LocalProblem,
    NetworkProblem,
    ProblemConstants,
    SplitPoint,
    apply_local_operator,
    apply_mean_operator,
    project,
)
from .metrics import (
    ReferenceSolution,
    consensus_error,
    distance_sq,
    reference_solution,
    saddle_gap,
    support_size,
)
from .network import (
    GossipMatrix,
    Topology,
    acc_gossip,
    acceleration_eta,
    build_gossip_matrix,
    build_topology,
    diameter,
)
from .problems import (
    HardInstance,
    QuadraticSaddleProblem,
    RobustRegressionProblem,
    approx_solution_ybar,
    build_hard_instance,
    build_quadratic_network,
    build_robust_regression,
    estimate_regression_constants,
    estimate_similarity,
    hard_instance_min_dimension,
    measure_quadratic_constants,
    node_vs_mean_similarity,
)
from .solvers import (
    DivergenceError,
    TuningParameters,
    averaged_iterate,
    extragradient,
    regularize_convex_concave,
    run_baseline,
    run_gossip_sliding,
    run_master_sliding,
    solve_local_subproblem,
    tune,
)
from .trace import RunTrace, TraceRow, load_trace, write_trace

__version__ = "0.1.0"
