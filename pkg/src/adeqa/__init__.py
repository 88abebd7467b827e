"""Question-answering pipelines for adverse-drug-event extraction.

Parses the pipe-delimited drug/ADE relation corpus, prepares QA training
pairs, runs two generative extraction approaches over a pluggable
backend, and scores the results with strict and partial matching.
"""
from .backend import (
    BackendError,
    BackendProtocolError,
    BackendTimeout,
    BackendUnavailable,
    GenerationBackend,
    GenerationRequest,
    GenerationResponse,
    HttpBackend,
    MockBackend,
    NoiseConfig,
    http_backend,
    mock_backend,
)
from .codec import (
    DEFAULT_GRAMMAR,
    DEFAULT_TEMPLATES,
    NO_SUSPECT_SENTINEL,
    AnswerGrammar,
    BinaryAnswer,
    DecodeDiagnostics,
    PairFormat,
    Task,
    TemplateSet,
    build_question,
    decode_bool,
    decode_entity_list,
    decode_pair_list,
    encode_bool,
    encode_entity_list,
    encode_pair_list,
    normalize_entity,
)
from .corpus import (
    CorpusStats,
    Example,
    OffsetStatus,
    RawRecord,
    SplitSpec,
    group_examples,
    parse_corpus,
    split,
    stats,
    validate_offsets,
)
from .evaluation import (
    PARTIAL,
    STRICT,
    Counts,
    EvalReport,
    MatchMode,
    Matching,
    RePairJudgment,
    assign_matches,
    emit_report,
    entity_match,
    evaluate,
    levenshtein,
    micro_scores,
    per_count_breakdown,
    re_confusion,
)
from .pipeline import (
    ApproachOneExtractor,
    ApproachTwoExtractor,
    PipelineConfig,
    Prediction,
    QAInstance,
    collect_relation_judgments,
    prepare_training_pairs,
    run_approach1,
    run_approach2,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
