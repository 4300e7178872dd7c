"""Sum-constrained stacking of cross-validated predictors.

Closed-form stacking weights under a configurable weight-total
constraint, leave-one-out machinery for building the held-out prediction
columns, bootstrap generation of orthonormal basis predictors, and an
empirical harness checking that cross-validated risk tracks posterior
risk for conjugate Gaussian mixtures.
"""

from .core import (
    ConstraintSpec,
    Dataset,
    LooMatrix,
    RngPlan,
    UNCONSTRAINED,
    WeightSolution,
    empirical_inner_product,
    stacking_error,
)
from .solver import (
    SingularSystemError,
    SolverMatrices,
    kkt_oracle,
    solve_in_hilbert,
    solve_sum_to_m,
    solve_sum_to_one,
    solve_unconstrained,
)
from .loocv import (
    LinearModelFit,
    assemble_loo_matrix,
    fit_linear,
    fold_schedule,
    loo_linear,
    loo_refit,
)
from .kernels import (
    KernelSpec,
    RegressionFn,
    default_bandwidth_grid,
    gp_fit,
    nw_fit,
    select_bandwidth_cv,
)
from .basis import (
    BasisRejection,
    BasisSearchResult,
    BasisSet,
    LinearCombination,
    PermutationPlan,
    bootstrap_candidates,
    generate_orthonormal_basis,
    gram_schmidt_empirical,
    order_basis,
    search_basis,
    select_j_opt,
    sequential_score,
    surface_area,
)
from .bayesharness import (
    GapReport,
    GaussianLinearModel,
    LossSpec,
    ModelMixture,
    bayes_point_predictor,
    convergence_experiment,
    cv_risk,
    plugin_point_predictor,
    polynomial_features,
    posterior_predictive,
    posterior_risk,
)
from .synthetic import (
    ADDITIVE_COLUMNS,
    additive_terms,
    default_mixture,
    make_additive_dataset,
    wavy_linear_truth,
    write_additive_csv,
)
from .cli import PipelineConfig, SweepResult, run_pipeline

__version__ = "0.1.0"
