"""Function-regularized diffusion metrics for cohort-level functionals."""

from .config import ConfigError, RunConfig, load_config
from .data import DataMatrix
from .diffusion import (
    AffinityMatrix,
    DiffusionEmbedding,
    MarkovOperator,
    correlation_kernel,
    diffusion_distance,
    gaussian_kernel,
    markov_normalize,
    median_bandwidth,
    spectral_embed,
)
from .extension import (
    OutOfSupportError,
    ReferenceEmbedding,
    asymmetric_kernel,
    build_reference,
    build_reference_from_metric,
    estimate_for_new_point,
    extend,
    extend_batch,
)
from .harness import (
    FittedModel,
    Predictions,
    ValidationReport,
    fit_pipeline,
    predict,
    recommend_pipeline,
    validate_pipeline,
)
from .metric import (
    CohortFunctional,
    MetricConfig,
    NeighborhoodRule,
    RegularizedMetric,
    WeightField,
    aggregate_point_weights,
    bin_feature,
    folder_weight,
    fit_weighted_metric,
    multiscale_estimate,
    pointwise_estimate,
    weighted_kernel,
)
from .simulate import (
    GroundTruth,
    TrialDataset,
    TrialSpec,
    gen_propensity_trial,
    gen_random_model,
    gen_sphere_trial,
    generate,
    score_against_truth,
)
from .survival import (
    CohortError,
    CohortTooSmallError,
    CoxFit,
    HazardModel,
    LinearRisk,
    LocalAlphaFunctional,
    LocalEffectEstimate,
    SurvivalCurve,
    SurvivalRecords,
    UndefinedCohortValue,
    apply_treatment_and_censor,
    cox_fit,
    kaplan_meier,
    logrank_test,
    mom_bias_oracle,
    moments_alpha,
    partial_likelihood_alpha,
    recommend_groups,
    simulate_cohort,
    weibull_sample,
)
from .tree import PartitionTree, build_bottomup, build_topdown, folder_of

__version__ = "0.1.0"
