"""Path-wise Shapley effects of a binary treatment, plus the Shapley machinery around them."""

__version__ = "0.1.0"

from pwshap.causal_graph import CausalPath, DagSpec, d_separated, enumerate_paths, validate_dag
from pwshap.blackbox_models import (
    ConstantPropensity,
    FunctionModel,
    LinearInteractionModel,
    LogisticModel,
    clip_propensity,
    fit_linear,
    fit_logistic,
)
from pwshap.conditional_sampler import (
    EmpiricalKnnSampler,
    GenerativeScenario,
    LinearChainImputer,
    fit_imputer,
    fit_knn,
)
from pwshap.shapley_engine import (
    Coalition,
    ValueEstimate,
    causal_shapley_split,
    coalition_shapley_value,
    full_shapley,
    value_function,
)
from pwshap.pwshap_engine import (
    PwshapSettings,
    coalition_effect,
    effect_from_shapley,
    explain_instance,
    integration_check,
    path_effect,
    propensity_weight,
)
from pwshap.scenarios import build_scenario, generate_dataset
from pwshap.analytic_oracles import oracle_table, oracle_value, run_oracle_check
from pwshap.experiments import ExperimentConfig, run_experiment

__all__ = [
    "__version__",
    "CausalPath",
    "DagSpec",
    "d_separated",
    "enumerate_paths",
    "validate_dag",
    "ConstantPropensity",
    "FunctionModel",
    "LinearInteractionModel",
    "LogisticModel",
    "clip_propensity",
    "fit_linear",
    "fit_logistic",
    "EmpiricalKnnSampler",
    "GenerativeScenario",
    "LinearChainImputer",
    "fit_imputer",
    "fit_knn",
    "Coalition",
    "ValueEstimate",
    "causal_shapley_split",
    "coalition_shapley_value",
    "full_shapley",
    "value_function",
    "PwshapSettings",
    "coalition_effect",
    "effect_from_shapley",
    "explain_instance",
    "integration_check",
    "path_effect",
    "propensity_weight",
    "build_scenario",
    "generate_dataset",
    "oracle_table",
    "oracle_value",
    "run_oracle_check",
    "ExperimentConfig",
    "run_experiment",
]
