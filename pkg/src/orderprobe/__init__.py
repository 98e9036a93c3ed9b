"""Few-shot prompt-order selection via entropy statistics over a
model-generated probing set."""

from .backend import (
    Backend,
    BackendInfo,
    CachedBackend,
    GenParams,
    HTTPBackend,
    LabelQueryResult,
    MockBackend,
    MockModelConfig,
)
from .core import (
    Dataset,
    LabeledExample,
    RunConfig,
    TrainSet,
    load_dataset,
    sample_train_set,
    subsample_eval,
)
from .errors import (
    BackendError,
    ConfigError,
    ContextOverflowError,
    DatasetError,
    EmptyProbingSetError,
    FixtureIncompleteError,
    OrderProbeError,
    TemplateError,
)
from .evaluation import (
    RunReport,
    accuracy,
    correlation_matrix,
    majority_baseline,
    oracle_select,
    run_statistics,
    spearman,
    split_train_select,
    topk_sweep,
)
from .permute import PromptCandidate, enumerate_orderings, label_patterns, render_candidates
from .probing import Probe, ProbingSet, build_probing_set
from .scoring import (
    CandidateScore,
    entropy,
    global_entropy,
    local_entropy,
    predict_label,
    rank_candidates,
    score_candidate,
    score_candidates,
)
from .templating import (
    PRESETS,
    ExtractedSample,
    PromptTemplate,
    concat,
    extract,
    get_preset,
    linearize,
    load_template,
    render_input,
)

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BackendError",
    "BackendInfo",
    "CachedBackend",
    "CandidateScore",
    "ConfigError",
    "ContextOverflowError",
    "Dataset",
    "DatasetError",
    "EmptyProbingSetError",
    "ExtractedSample",
    "FixtureIncompleteError",
    "GenParams",
    "HTTPBackend",
    "LabelQueryResult",
    "LabeledExample",
    "MockBackend",
    "MockModelConfig",
    "OrderProbeError",
    "PRESETS",
    "Probe",
    "ProbingSet",
    "PromptCandidate",
    "PromptTemplate",
    "RunConfig",
    "RunReport",
    "TemplateError",
    "TrainSet",
    "accuracy",
    "build_probing_set",
    "concat",
    "correlation_matrix",
    "entropy",
    "enumerate_orderings",
    "extract",
    "get_preset",
    "global_entropy",
    "label_patterns",
    "linearize",
    "load_dataset",
    "load_template",
    "local_entropy",
    "majority_baseline",
    "oracle_select",
    "predict_label",
    "rank_candidates",
    "render_candidates",
    "render_input",
    "run_statistics",
    "sample_train_set",
    "score_candidate",
    "score_candidates",
    "spearman",
    "split_train_select",
    "subsample_eval",
    "topk_sweep",
]
