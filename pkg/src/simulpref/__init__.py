"""Preference learning for simultaneous translation, at desk scale.

The package splits into data plumbing (corpus, prefixes), the loss family
with analytic gradients (losses), the confidence-gated read/write policy
(policy), latency and preference metrics (latency, metrics), a tiny
trainable agent plus its synthetic task (toymodel, toytask, training), and
the CLI/reporting/annotation harness (cli, report, prompts, config).
"""

from .corpus import (
    AlignmentMap,
    DependencyTree,
    ParallelExample,
    PreferenceExample,
    Sentence,
    parse_conllu_trees,
    parse_jsonl_corpus,
    parse_pharaoh_alignment,
    parse_pharaoh_file,
    write_jsonl_corpus,
)
from .errors import (
    AnnotationError,
    ConfigError,
    ParseError,
    ProtocolError,
    SessionError,
    TrainingError,
    TransportError,
    ValidationError,
)
from .latency import (
    DelayVector,
    Read,
    ReadWriteTrace,
    Write,
    average_lagging,
    average_proportion,
    delays_from_trace,
    differentiable_average_lagging,
    length_adaptive_average_lagging,
    read_trace_jsonl,
    worst_case_al_bound,
    write_trace_jsonl,
)
from .losses import (
    LossConfig,
    LossValueWithGrad,
    SequenceGrads,
    TerminalMode,
    TokenScores,
    estimate_kto_shift,
    gradient_check_suite,
    msft_loss,
    optimal_policy_oracle,
    simulcpo_loss,
    simuldpo_loss,
    simulkto_loss,
)
from .metrics import (
    InversionRate,
    aligned_source_positions,
    dependency_depth,
    inversion_count,
    normalized_inversion_rate,
    sentence_length_ratio,
    token_f1,
)
from .policy import (
    Agent,
    AgentStep,
    CopyAgent,
    PolicyConfig,
    ScriptedAgent,
    SessionResult,
    run_session,
    run_wait_k,
)
from .prefixes import (
    PrefixPair,
    build_prefix_preference_dataset,
    effective_alignment_positions,
    extract_prefix_pairs,
    prefix_table,
)
from .prompts import (
    AnnotationClient,
    AnnotationRequest,
    AnnotationResponse,
    PromptTemplate,
    annotate_via_endpoint,
    load_bundled_template,
    render_preference_prompt,
)
from .report import emit_tradeoff_report, latency_report, preference_report
from .toymodel import ToyAgent, ToyVocab, load_agent, load_checkpoint, save_checkpoint
from .toytask import (
    SyntheticCorpus,
    SyntheticTaskSpec,
    generate_synthetic_corpus,
    hypothesis_source_positions,
)
from .training import (
    MSFTTranslator,
    SimulPreferenceTuner,
    TradeoffRow,
    confidence_calibration,
    evaluate_tradeoff,
    mean_session_confidence,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentMap",
    "DependencyTree",
    "ParallelExample",
    "PreferenceExample",
    "Sentence",
    "parse_conllu_trees",
    "parse_jsonl_corpus",
    "parse_pharaoh_alignment",
    "parse_pharaoh_file",
    "write_jsonl_corpus",
    "AnnotationError",
    "ConfigError",
    "ParseError",
    "ProtocolError",
    "SessionError",
    "TrainingError",
    "TransportError",
    "ValidationError",
    "DelayVector",
    "Read",
    "ReadWriteTrace",
    "Write",
    "average_lagging",
    "average_proportion",
    "delays_from_trace",
    "differentiable_average_lagging",
    "length_adaptive_average_lagging",
    "read_trace_jsonl",
    "worst_case_al_bound",
    "write_trace_jsonl",
    "LossConfig",
    "LossValueWithGrad",
    "SequenceGrads",
    "TerminalMode",
    "TokenScores",
    "estimate_kto_shift",
    "gradient_check_suite",
    "msft_loss",
    "optimal_policy_oracle",
    "simulcpo_loss",
    "simuldpo_loss",
    "simulkto_loss",
    "InversionRate",
    "aligned_source_positions",
    "dependency_depth",
    "inversion_count",
    "normalized_inversion_rate",
    "sentence_length_ratio",
    "token_f1",
    "Agent",
    "AgentStep",
    "CopyAgent",
    "PolicyConfig",
    "ScriptedAgent",
    "SessionResult",
    "run_session",
    "run_wait_k",
    "PrefixPair",
    "build_prefix_preference_dataset",
    "effective_alignment_positions",
    "extract_prefix_pairs",
    "prefix_table",
    "AnnotationClient",
    "AnnotationRequest",
    "AnnotationResponse",
    "PromptTemplate",
    "annotate_via_endpoint",
    "load_bundled_template",
    "render_preference_prompt",
    "emit_tradeoff_report",
    "latency_report",
    "preference_report",
    "ToyAgent",
    "ToyVocab",
    "load_agent",
    "load_checkpoint",
    "save_checkpoint",
    "SyntheticCorpus",
    "SyntheticTaskSpec",
    "generate_synthetic_corpus",
    "hypothesis_source_positions",
    "MSFTTranslator",
    "SimulPreferenceTuner",
    "TradeoffRow",
    "confidence_calibration",
    "evaluate_tradeoff",
    "mean_session_confidence",
    "__version__",
]
