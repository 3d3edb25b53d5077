"""cmekit: nonparametric conditional expectation operators over an RKHS.

Estimates the operator f -> E[f(Y) | X = .] from paired samples via
spectral-filter regularized conditional mean embeddings, analyzes Markov
transition operators through kernel EDMD, computes MMD statistics, and ships
an exact finite-state oracle that checks the governing operator-norm bounds
and identities to machine precision.
"""

from .embeddings import (
    WeightedEmbedding,
    embed_diff,
    embed_inner,
    embed_norm_sq,
    mean_embed,
    mmd_sq_biased,
    mmd_sq_unbiased,
)
from .estimators import (
    CmeEstimator,
    Cutoff,
    Landweber,
    PairedSample,
    SpectralFilter,
    Tikhonov,
    empirical_risk,
    filter_value,
    fit_cme,
    fit_tikhonov_closed_form,
    hs_norm_sq,
    predict_conditional_expectation,
    predict_embedding,
    regularized_empirical_risk,
)
from .kernels import (
    GaussianKernel,
    GramMatrix,
    Kernel,
    LaplacianKernel,
    Point,
    TableKernel,
    cross_gram,
    gram,
    kernel_eval,
    pt,
    table_kernel,
)
from .models import (
    FiniteMarkovModel,
    RegressionFunctionRep,
    ValuesMap,
    chain_states,
    cme_function,
    constant_direction_alt,
    constant_shift_estimator,
    double_well_pairs,
    exact_excess_risk,
    exact_mmd_integral,
    exact_operator_values,
    exact_risk,
    estimator_values,
    finite_model,
    generalized_cov_ons_check,
    op_norm_diff,
    ou_sample_pairs,
    random_model,
    sample_pairs,
    stationary_distribution,
    well_specified_estimator,
    with_alt,
)
from .spectral import (
    EdmdResult,
    edmd_eigen,
    edmd_matrix,
    eigen_residuals,
    eval_eigenfunction,
    sign_cluster,
)

__version__ = "0.1.0"

__all__ = [
    "CmeEstimator",
    "Cutoff",
    "EdmdResult",
    "FiniteMarkovModel",
    "GaussianKernel",
    "GramMatrix",
    "Kernel",
    "Landweber",
    "LaplacianKernel",
    "PairedSample",
    "Point",
    "RegressionFunctionRep",
    "SpectralFilter",
    "TableKernel",
    "Tikhonov",
    "ValuesMap",
    "WeightedEmbedding",
    "chain_states",
    "cme_function",
    "constant_direction_alt",
    "constant_shift_estimator",
    "cross_gram",
    "double_well_pairs",
    "edmd_eigen",
    "edmd_matrix",
    "eigen_residuals",
    "embed_diff",
    "embed_inner",
    "embed_norm_sq",
    "empirical_risk",
    "estimator_values",
    "eval_eigenfunction",
    "exact_excess_risk",
    "exact_mmd_integral",
    "exact_operator_values",
    "exact_risk",
    "filter_value",
    "finite_model",
    "fit_cme",
    "fit_tikhonov_closed_form",
    "generalized_cov_ons_check",
    "gram",
    "hs_norm_sq",
    "kernel_eval",
    "mean_embed",
    "mmd_sq_biased",
    "mmd_sq_unbiased",
    "op_norm_diff",
    "ou_sample_pairs",
    "predict_conditional_expectation",
    "predict_embedding",
    "pt",
    "random_model",
    "regularized_empirical_risk",
    "sample_pairs",
    "sign_cluster",
    "stationary_distribution",
    "table_kernel",
    "well_specified_estimator",
    "with_alt",
]
