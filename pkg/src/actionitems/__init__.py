"""Sentence-level action item detection for meeting transcripts.

The package covers the full loop: transcript ingestion and corpus statistics,
candidate filtering, local/global context assembly, consistency-regularized
training of a small text classifier, positive-class F1 evaluation, and
parameter-level model merging.
"""

from .context import (
    ContextConfig,
    ContextPlan,
    ContextView,
    build_plan,
    full_view,
    ngram_cosine,
    render_input,
    sample_view,
    select_global_context,
    select_local_context,
    sentence_view,
)
from .corpus import (
    CandidateLexicons,
    CorpusSplit,
    KappaReport,
    Meeting,
    SentenceRecord,
    cohen_kappa,
    corpus_stats,
    ingest_transcripts,
    pairwise_kappa,
    select_candidates,
    split_corpus,
    split_from_manifest,
)
from .errors import (
    ActionItemsError,
    ConfigError,
    LayerCompatibilityError,
    SchemaValidationError,
    TrainingDivergedError,
    TranscriptParseError,
)
from .evaluation import (
    AggregateReport,
    MetricReport,
    PredictionRecord,
    aggregate,
    positive_f1,
    render_report,
)
from .model import (
    ParameterSet,
    TinyTextClassifier,
    WindowSpec,
    ensemble_init,
    make_windows,
)
from .training import (
    LossBreakdown,
    LossConfig,
    TrainingPair,
    TrainResult,
    TrainRunConfig,
    bidirectional_kl,
    build_pair,
    ce_loss,
    pair_loss,
    predict,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ActionItemsError",
    "AggregateReport",
    "CandidateLexicons",
    "ConfigError",
    "ContextConfig",
    "ContextPlan",
    "ContextView",
    "CorpusSplit",
    "KappaReport",
    "LayerCompatibilityError",
    "LossBreakdown",
    "LossConfig",
    "Meeting",
    "MetricReport",
    "ParameterSet",
    "PredictionRecord",
    "SchemaValidationError",
    "SentenceRecord",
    "TinyTextClassifier",
    "TrainResult",
    "TrainRunConfig",
    "TrainingDivergedError",
    "TrainingPair",
    "TranscriptParseError",
    "WindowSpec",
    "aggregate",
    "bidirectional_kl",
    "build_pair",
    "build_plan",
    "ce_loss",
    "cohen_kappa",
    "corpus_stats",
    "ensemble_init",
    "full_view",
    "ingest_transcripts",
    "make_windows",
    "ngram_cosine",
    "pair_loss",
    "pairwise_kappa",
    "positive_f1",
    "predict",
    "render_input",
    "render_report",
    "sample_view",
    "select_candidates",
    "select_global_context",
    "select_local_context",
    "sentence_view",
    "split_corpus",
    "split_from_manifest",
    "train",
]
