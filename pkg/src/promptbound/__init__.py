"""Generalization bounds over discrete prompt spaces, and search against them.

The package computes PAC-Bayes risk bounds for optimized prompts using
perplexity-based (optionally data-dependent) priors, runs bound-regularized
prompt search, and validates bound coverage by Monte-Carlo on synthetic tasks
whose population risk is exactly enumerable.
"""

from .bounds import (
    BoundFamily,
    BoundInputs,
    BoundValue,
    KlNats,
    compute_bound,
    data_dependent_bound,
    data_dependent_expected_gap,
    kl_uniform_posterior,
    mcallester_bound,
    n_adjusted_bound,
    tolstikhin_seldin_bound,
)
from .dataset import (
    EvalPolicy,
    Label,
    LabeledDataset,
    LabeledExample,
    SplitPlan,
    load_dataset,
    make_split,
)
from .evaluator import (
    CandidateStats,
    EvalRecord,
    EvalSettings,
    Parsed,
    allocate_and_evaluate,
    classify,
    empirical_risk,
)
from .optimizer import (
    DEFAULT_MUTATION_TABLE,
    MutationTable,
    Objective,
    RunLog,
    load_runlog,
    optimize,
    optimize_prior,
    propose_edits,
    score_objective,
    verify_replay,
)
from .perplexity import (
    BackendError,
    EndpointConfig,
    FunctionBackend,
    LanguageModelBackend,
    LogLik,
    NgramBackend,
    NgramModel,
    PriorSpec,
    RemoteBackend,
    StubBackend,
    TransportError,
    UnsupportedCapabilityError,
    conditional_log_likelihood,
    load_ngram,
    save_ngram,
    train_ngram,
)
from .prompts import Prompt
from .validator import (
    CoverageReport,
    SyntheticTask,
    coverage_trial_suite,
    expected_gap_check,
    make_synthetic_task,
    true_risk,
)

__version__ = "0.1.0"
