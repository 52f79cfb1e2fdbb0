"""Neighborhood regression on networks with community-structured coefficients."""

__version__ = "0.1.0"

from .community import (
    Membership,
    ScreeResult,
    SpectralEmbedding,
    align_permutation,
    detect_communities,
    estimate_k,
    kmeans,
    misclustering_count,
    perturb_membership,
    spectral_embed,
)
from .graph import (
    SbmParams,
    load_edge_list,
    network_sparsity,
    sample_sbm,
    save_adjacency_csv,
    save_edge_list,
    validate_adjacency,
)
from .regression import (
    CenteredData,
    FitResult,
    MultiFitResult,
    build_design,
    center_data,
    fit_full,
    fit_full_multi,
    fit_ols,
    fit_row,
    fit_singleton,
    loss,
    loss_community,
    predict,
)
from .inference import (
    CovarianceEstimate,
    TestTable,
    community_covariance,
    hc_covariance,
    hessian,
    homoskedastic_covariance,
    wald_table,
)
from .baseline import (
    NetcohFit,
    ablation_network,
    cv_select_lambda,
    fit_netcoh,
    laplacian,
    netcoh_objective,
    predict_netcoh,
)
from .metrics import EvalReport, estimation_error, network_adjusted_r2, prediction_error
from .simharness import (
    ExperimentConfig,
    Instance,
    gen_instance,
    run_experiment,
    run_theory_checks,
)

__all__ = [
    "Membership",
    "ScreeResult",
    "SpectralEmbedding",
    "align_permutation",
    "detect_communities",
    "estimate_k",
    "kmeans",
    "misclustering_count",
    "perturb_membership",
    "spectral_embed",
    "SbmParams",
    "load_edge_list",
    "network_sparsity",
    "sample_sbm",
    "save_adjacency_csv",
    "save_edge_list",
    "validate_adjacency",
    "CenteredData",
    "FitResult",
    "MultiFitResult",
    "build_design",
    "center_data",
    "fit_full",
    "fit_full_multi",
    "fit_ols",
    "fit_row",
    "fit_singleton",
    "loss",
    "loss_community",
    "predict",
    "CovarianceEstimate",
    "TestTable",
    "community_covariance",
    "hc_covariance",
    "hessian",
    "homoskedastic_covariance",
    "wald_table",
    "NetcohFit",
    "ablation_network",
    "cv_select_lambda",
    "fit_netcoh",
    "laplacian",
    "netcoh_objective",
    "predict_netcoh",
    "EvalReport",
    "estimation_error",
    "network_adjusted_r2",
    "prediction_error",
    "ExperimentConfig",
    "Instance",
    "gen_instance",
    "run_experiment",
    "run_theory_checks",
]
