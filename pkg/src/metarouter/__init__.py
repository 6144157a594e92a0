"""Train cost-aware LLM routers by combining scarce gold-standard evaluations
with abundant, biased preference-based ones.

The preference bias is treated as a conditional average treatment effect of
the evaluation mechanism and estimated with residualized or doubly robust
learners; the corrected preference outcomes then enrich the gold-standard
pool for the final quality-gain fit.
"""

__version__ = "0.1.0"

from .data import (
    CombinedSample,
    DatasetError,
    GsSample,
    PbSample,
    Query,
    SplitSpec,
    load_dataset,
    make_combined_dataset,
    reconstruct_sources,
    split_dataset,
)
from .regress import (
    Projection,
    RegressorSpec,
    TREE_BACKEND,
    fit_projection,
    fit_regressor,
    predict,
    project,
)
from .nuisance import (
    NuisanceEstimates,
    assign_folds,
    crossfit_conditional,
    crossfit_marginal,
    crossfit_propensity,
    estimate_nuisances,
    nuisances_from_truth,
)
from .cate import CateModel, fit_dr_learner, fit_r_learner, oracle_cate_model, predict_cate
from .router import (
    BINARY_COST,
    CostModel,
    M_A,
    M_P,
    NormalizationMethod,
    QualityGainModel,
    RoutingDecision,
    TokenPricing,
    bias_correct,
    compute_normalization,
    decide,
    decision_value,
    fit_baseline_router,
    fit_meta_router,
    route,
    scale_gs_outcomes,
)
from .synthetic import (
    FunctionSpec,
    GaussianSpec,
    NoiseSpec,
    SynthConfig,
    SynthSample,
    arms_from_synth,
    combined_from_synth,
    equivalence_diagnostics,
    generate_causal,
    generate_joint,
    generate_routing_round,
    true_propensity,
)
from .harness import (
    CurvePoint,
    ResultsTable,
    default_w_grid,
    efficiency_gain,
    pmur,
    random_router_curve,
    run_experiment,
    sweep_router,
    total_efficiency,
)
from .config import ExperimentConfig, config_hash, parse_config
