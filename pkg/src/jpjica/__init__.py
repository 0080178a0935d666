"""Joint / partially joint / individual multi-subject source separation."""

from .baseline import run_ji_thica
from .classify import (
    build_features,
    classify_by_feature,
    classify_by_spatial,
    cluster_subjects,
    detect_joint_slots,
    jpji_feature,
    kurtosis_feature_fit,
    label_decomposition,
    select_sigma_opt,
)
from .engine import (
    CostMatrix,
    build_cost_matrix,
    cost,
    deflate,
    inner_extract,
    run_jpji_ica,
)
from .metrics import (
    EvaluationReport,
    acc_c,
    acc_counts_run,
    acc_k,
    acc_peer_sets_run,
    evaluate_run,
    jsir,
    jsir_db,
    match_sources,
)
from .numerics import (
    CumulantVector,
    bh_fdr,
    covariance,
    cross_cumulant,
    cumulant_vector,
    dominant_eigenvector,
    inverse_sqrt_psd,
    kmeans,
    two_sample_t_test,
)
from .preprocess import (
    PreprocessedSubject,
    estimate_order_bic,
    pca_reduce,
    preprocess_subject,
    whiten,
)
from .simulate import (
    ScenarioSpec,
    add_noise,
    generate_dataset,
    generate_spatial_source,
    random_scenario,
)
from .types import (
    AlgoConfig,
    Decomposition,
    FeatureTable,
    GroundTruth,
    SourceKind,
    SourceLabel,
    SubjectDataset,
    validate_analysis_input,
)

__version__ = "0.1.0"

__all__ = [
    "AlgoConfig",
    "CostMatrix",
    "CumulantVector",
    "Decomposition",
    "EvaluationReport",
    "FeatureTable",
    "GroundTruth",
    "PreprocessedSubject",
    "ScenarioSpec",
    "SourceKind",
    "SourceLabel",
    "SubjectDataset",
    "acc_c",
    "acc_counts_run",
    "acc_k",
    "acc_peer_sets_run",
    "add_noise",
    "bh_fdr",
    "build_cost_matrix",
    "build_features",
    "classify_by_feature",
    "classify_by_spatial",
    "cluster_subjects",
    "cost",
    "covariance",
    "cross_cumulant",
    "cumulant_vector",
    "deflate",
    "detect_joint_slots",
    "dominant_eigenvector",
    "estimate_order_bic",
    "evaluate_run",
    "generate_dataset",
    "generate_spatial_source",
    "inner_extract",
    "inverse_sqrt_psd",
    "jpji_feature",
    "jsir",
    "jsir_db",
    "kmeans",
    "kurtosis_feature_fit",
    "label_decomposition",
    "match_sources",
    "pca_reduce",
    "preprocess_subject",
    "random_scenario",
    "run_ji_thica",
    "run_jpji_ica",
    "select_sigma_opt",
    "two_sample_t_test",
    "validate_analysis_input",
    "whiten",
]
