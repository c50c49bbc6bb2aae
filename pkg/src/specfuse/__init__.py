"""specfuse: deterministic-first mapping of 2D drawing callouts to 3D CAD features."""

from .assign import CandidateSet, build_candidate_sets, expand_pattern_groups, resolve
from .corpus import CorpusProfile, PartInputs, generate_synthetic_corpus, load_corpus, save_corpus
from .emit import (
    FixedClock,
    ReviewDecision,
    SystemClock,
    apply_review_decisions,
    emit_proposed_spec,
)
from .enrich import (
    ExternalVlmEnricher,
    ParsedCallout,
    ReplayEnricher,
    RuleBasedEnricher,
    enrich,
    make_enricher,
    parse_callout_grammar,
)
from .escalate import (
    AlwaysRejectClient,
    CandidateSummary,
    EscalationRequest,
    EscalationResponse,
    FirstCandidateClient,
    HttpEscalationClient,
    OracleClient,
    ScriptedClient,
    escalate,
    mock_client,
    validate_response,
)
from .evaluate import (
    ABLATION_VARIANTS,
    GroundTruth,
    PartMetrics,
    compute_metrics,
    macro_average,
    run_ablation,
    variant_config,
)
from .fixtures import fixture_inputs, fixture_truth
from .model import (
    DrawingEntity,
    EnrichedDescriptor,
    EntityContext,
    Feature3D,
    FlaggedItem,
    InputError,
    InternalInvariantError,
    MappingRecord,
    PipelineConfig,
    ProvenanceEvent,
    ScoredCandidate,
    UnifiedSpec,
    validate_part_inputs,
)
from .pipeline import MappingRunResult, evaluate_corpus, run_mapping, run_part_against_truth
from .scoring import (
    CompatibilityTable,
    apply_heuristics,
    replay_score,
    route_dimension,
    score_context,
    score_dim,
    score_pair,
    score_type,
)

__version__ = "0.1.0"
