"""Distributionally robust conditional risk minimization with side information.

Worst-case risk is taken over a union of transport balls centered at
reweightings of the conditioned sample; this package builds the admissible
weight/radius polyhedra, compiles the worst-case risk programs to LP/SOCP
form, runs the scenario-pool algorithm for distortion risks, and ships the
benchmark generator plus a command-line front end.
"""

from .geometry import (
    Dataset,
    Neighborhood,
    CostSpec,
    Partition,
    partition,
    boundary_distances,
    override_distances,
    norm_value,
    dual_norm_name,
    project_l1_ball,
)
from .ambiguity import (
    MassInterval,
    Polyhedron,
    AdmissibleSet,
    InfeasibleRadiusError,
    min_radius_full,
    min_radius_partial,
    build_full,
    build_partial,
    build_pinned,
    build_envelope,
    support,
    support_primal,
    feasible_point,
)
from .conic import (
    Aff,
    ConicProgram,
    Solution,
    SolveStatus,
    solve,
    quad_over_linear,
    dual_norm_power,
    structural_counts,
    DEFAULT_TOL,
)
from .distortion import (
    DistortionFunction,
    RiskEnvelope,
    cvar_mix_distortion,
    distortion_value,
    distortion_weights,
    envelope_membership,
    proper_subsets,
    subset_sums,
)
from .reformulations import (
    LossSpec,
    InnerLossSpec,
    DecisionSet,
    CompiledProblem,
    CompiledSolution,
    compile_expectation_q1,
    compile_expectation_special_q,
    compile_expectation_general_q2,
    compile_min_expectation,
    compile_qnorm,
    compile_shortfall,
    compile_distortion_q1_exponential,
    mean_variance_socp,
    mean_cvar_socp,
)
from .cutting_plane import (
    Scenario,
    IterationRecord,
    RdeuResult,
    solve_rdeu,
    price_worst_scenario,
)
from .experiments import (
    GenerativeModel,
    RunConfig,
    ReplicationFailure,
    MODEL_KINDS,
    sample_joint,
    run_model,
    oracle_conditional_risk,
    oracle_grid_minimum,
    replicate,
    summarize,
)

__version__ = "1.0.0"
