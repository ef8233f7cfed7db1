"""chorus: Bayesian aggregation of sparse multi-annotator species annotations.

Turns conflicting crowd reports of which species are present in each recording
into calibrated posterior presence probabilities, via four hierarchical model
variants (independent vs. Dirichlet-process-mixture occurrence, flat vs.
species-varying annotator expertise) fitted by Gibbs sampling.
"""

from .data import (
    AnnotationTensor,
    DatasetSummary,
    ExpertiseSets,
    GoldStandard,
    IdMap,
    load_annotations,
    load_expertise,
    load_gold,
    make_tensor,
    summarize,
    write_annotations,
)
from .diagnostics import DiagnosticsReport, ess, gelman_rubin
from .errors import ChorusError, ConfigError, DataError, InvariantError
from .evaluate import (
    EvaluationReport,
    WaicAccumulator,
    brier,
    expertise_coverage_mse,
    majority_vote,
    roc_auc,
    waic,
)
from .models import MODEL_KINDS
from .pipeline import evaluate_fit, run_replicate, run_sweep
from .polya_gamma import pg_mean, polya_gamma, sample_polya_gamma
from .priors import (
    BaseHypers,
    DpHypers,
    HierHypers,
    HyperParams,
    application_defaults,
    beta_from_mean_count,
    simulation_defaults,
)
from .rng import (
    RngStream,
    log_beta_fn,
    logistic,
    logit,
    sample_bernoulli,
    sample_beta,
    sample_categorical_log,
    sample_dirichlet,
    sample_gamma,
    sample_normal,
)
from .runner import DrawStore, McmcConfig, default_budget, run
from .simulate import ScenarioConfig, SimTruth, generate_scenario, write_scenario

__version__ = "0.1.0"
