"""Stochastic subgradient optimization with expectation constraints.

A smoothed exact-penalty solver with variance-reduced constraint estimates,
a switching-subgradient baseline, benchmark problem builders, stationarity
metrics, dataset parsers, and a command-line experiment harness.
"""

from .core import (
    BatchSpec,
    CQParams,
    FeasibleSet,
    ProblemInstance,
    eval_constraints,
    project,
    sample_subgrad_f,
    sample_subgrad_g,
)
from .data_ingest import (
    Dataset,
    ParseError,
    augment_first_coordinate,
    parse_csv,
    parse_idx,
    parse_libsvm,
    split_and_partition,
)
from .metrics import (
    MetricRecord,
    RunTrace,
    constraint_violation,
    emit_trace,
    moreau_gradient_norm,
    read_trace,
    stationarity_violation,
)
from .penalty import (
    DerivedModuli,
    PenaltyConfig,
    TheoremSchedule,
    cq_from_slater,
    derived_moduli,
    estimate_noise_constants,
    huber_value,
    huber_weight,
    logistic_cq_bound,
    penalized_value,
    slater_theta,
    theorem_schedule,
)
from .problems import (
    DpScadSpec,
    NeymanPearsonSpec,
    RocFairnessSpec,
    build_dp_scad,
    build_example_1d,
    build_neyman_pearson,
    build_roc_fairness,
    build_synthetic_quadratic,
)
from .solver import SolverConfig, econ_step, run_3s_econ, step_size
from .spider import SpiderState, estimator_error, spider_reset, spider_step
from .ssg import SsgConfig, run_ssg, solve_prox_subproblem

__version__ = "0.1.0"
