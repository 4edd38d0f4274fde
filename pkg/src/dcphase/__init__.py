"""Phase retrieval by difference-of-convex iterations."""

from .baselines import gauss_newton_step, run_gauss_newton
from .dc import DcConfig, dc_step, run_dc
from .geometry import HessianCertificate, certify_minimizer_hessian, rank_one_degree_bound
from .harness import ExperimentConfig, SolverKind, SuccessTable, TrialReport, preset, run_table, run_trial
from .initializer import InitMethod, initialize, spectral_init, weighted_spectral_init
from .inner import (
    InnerConfig,
    InnerMethod,
    InnerProblem,
    bb_step_size,
    nesterov_momentum_coeff,
    solve_inner,
    solve_inner_bb_nesterov,
    solve_inner_gd,
    solve_inner_nesterov,
)
from .model import (
    SQUARE_MODULUS,
    FieldTag,
    LinkFunction,
    MeasurementEnsemble,
    NoiseModel,
    NoiseSpec,
    Signal,
    dist_up_to_phase,
    make_link,
    measure,
    power_link,
    sample_gaussian_ensemble,
)
from .objective import SplitObjective
from .sparse import (
    L1Mode,
    SparseConfig,
    ap_momentum,
    hard_threshold_project,
    prox_l1_step,
    run_l1_dc,
    run_l1_dc_hard,
    soft_threshold,
)
from .trace import IterRecord, Trace

__version__ = "0.1.0"
