"""Conductance-based bursting neuron with online conductance estimators.

Simulates a five-current neuron model and estimates its maximal
conductances from voltage and input current alone, using a centralized
recursive-least-squares observer, a distributed per-conductance variant,
and a redundant variant that averages consensus-coupled copies.  Ships a
CLI for seeded multi-trial robustness experiments under randomized
internal-dynamics mismatch.

Entry points: ``load_model`` / ``default_model_dict`` for the neuron,
``build_experiment`` / ``load_experiment_dict`` for configured runs,
``integrate_trial`` / ``run_experiment`` to execute, and the ``spikeobs``
console script for everything file-based.
"""

from .analysis import Phenotype, spike_times, window_phenotype
from .backend import HAVE_COMPILED, default_backend
from .config import (
    BuiltExperiment,
    apply_overrides,
    build_experiment,
    default_experiment_dict,
    default_model_dict,
    load_experiment_dict,
    load_model,
    model_from_dict,
    parse_override,
    sweep_experiments,
    validate_experiment_dict,
)
from .errors import ConfigurationError, ContractViolation, TrialDiverged
from .mismatch import MismatchConfig, MismatchSample, sample_mismatch
from .model import (
    GATE_NAMES,
    N_THETA,
    THETA_LABELS,
    NeuronModel,
    initial_state,
    neuron_rhs,
    regressor_decompose,
)
from .observers import (
    CentralizedGains,
    DistributedGains,
    RedundancyGains,
    build_layout,
    empirical_mean,
)
from .runner import (
    LOG_COLUMNS,
    ExperimentConfig,
    ExperimentSummary,
    ObserverInit,
    OUInput,
    Ramp,
    Scenario,
    TrialConfig,
    TrialResult,
    default_scenario,
    generate_input,
    integrate_trial,
    ramp_eval,
    run_experiment,
    trial_config_for,
)

__version__ = "0.1.0"

__all__ = [
    "BuiltExperiment",
    "CentralizedGains",
    "ConfigurationError",
    "ContractViolation",
    "DistributedGains",
    "ExperimentConfig",
    "ExperimentSummary",
    "GATE_NAMES",
    "HAVE_COMPILED",
    "LOG_COLUMNS",
    "MismatchConfig",
    "MismatchSample",
    "N_THETA",
    "NeuronModel",
    "OUInput",
    "ObserverInit",
    "Phenotype",
    "Ramp",
    "RedundancyGains",
    "Scenario",
    "THETA_LABELS",
    "TrialConfig",
    "TrialDiverged",
    "TrialResult",
    "apply_overrides",
    "build_experiment",
    "build_layout",
    "default_backend",
    "default_experiment_dict",
    "default_model_dict",
    "default_scenario",
    "empirical_mean",
    "generate_input",
    "initial_state",
    "integrate_trial",
    "load_experiment_dict",
    "load_model",
    "model_from_dict",
    "neuron_rhs",
    "parse_override",
    "ramp_eval",
    "regressor_decompose",
    "run_experiment",
    "sample_mismatch",
    "sweep_experiments",
    "trial_config_for",
    "validate_experiment_dict",
    "__version__",
]
