"""Certainty scores for categorical LLM classifications.

Pose every paraphrase of a question to the classifier, take the majority
answer, and use the winning vote share as a certainty score. Certainty
distributions for correct and incorrect predictions, calibrated on labelled
questions, then tell how plausible a new prediction is.
"""

from .assessment import (
    Assessment,
    CalibrationError,
    CalibrationModel,
    Triage,
    Verdict,
    assess,
    assess_result,
    calibrate,
    triage,
    update,
    verdict,
)
from .backends import (
    BackendError,
    OpenAICompatBackend,
    ParseError,
    PromptSpec,
    ScriptedBackend,
    classify,
    ensemble_classify,
    filter_candidates,
    parse_endpoint_response,
    parse_parameter_response,
)
from .domain import (
    Abstain,
    AbstainReason,
    ClassifierOutput,
    EnsembleResult,
    Multi,
    ParameterSet,
    Single,
    TaskKind,
    VariantSet,
    validate_variant_set,
)
from .simulator import IntentModel, SimConfig, SimulatedBackend, hypothesis_sweep, make_calibration_corpus, sim_classify
from .stats import (
    EmpiricalDistribution,
    KsMethod,
    KsReport,
    ecdf_build,
    ecdf_cdf,
    ecdf_sf,
    ks_2samp,
    ks_pvalue_asymptotic,
    ks_pvalue_exact,
    ks_statistic,
)
from .voting import VoteTally, ensemble_result, marginal_parameter_tally, predict, tally, true_label_accuracy

__version__ = "0.1.0"
