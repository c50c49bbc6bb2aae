"""End-to-end orchestration: validate, enrich, score, assign, escalate, emit.

Per-part work is independent; evaluate_corpus fans parts out over a thread
pool and aggregates deterministically by part id.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

from .assign import CandidateSet, build_candidate_sets, expand_pattern_groups, resolve
from .corpus import PartInputs
from .emit import Clock, FixedClock, emit_proposed_spec
from .enrich import RuleBasedEnricher
from .escalate import OracleClient
from .evaluate import GroundTruth, PartMetrics, compute_metrics, predicted_links
from .model import (
    EnrichedDescriptor,
    FlaggedItem,
    InputError,
    PipelineConfig,
    UnifiedSpec,
    validate_part_inputs,
)
from .scoring import CompatibilityTable, score_pair


@dataclass(frozen=True)
class MappingRunResult:
    spec: UnifiedSpec
    descriptors: Mapping[str, EnrichedDescriptor]
    candidate_sets: tuple[CandidateSet, ...]
    validation_warnings: tuple[str, ...]


def run_mapping(
    inputs: PartInputs,
    config: Optional[PipelineConfig] = None,
    *,
    enricher: Any = None,
    escalation_client: Any = None,
    table: Optional[CompatibilityTable] = None,
    clock: Optional[Clock] = None,
) -> MappingRunResult:
    """Map one part's entities onto its features and emit the proposed spec.

    Raises InputError when validation reports fatal problems. The escalation
    client may be None, in which case ambiguous items are flagged for review.
    """
    config = config or PipelineConfig()
    enricher = enricher or RuleBasedEnricher()
    table = table or CompatibilityTable.default()
    clock = clock or FixedClock()

    report = validate_part_inputs(inputs.features, inputs.entities)
    if not report.ok:
        raise InputError(
            f"part {inputs.part_id} failed validation: " + "; ".join(report.errors)
        )
    features, entities = report.features, report.entities

    descriptors: dict[str, EnrichedDescriptor] = {}
    for entity in entities:
        descriptor, _meta = enricher.enrich(entity)
        descriptors[entity.id] = descriptor

    scored = [
        score_pair(feature, descriptors[entity.id], config, table)
        for feature in features
        for entity in entities
    ]

    sets, _unconstrained = build_candidate_sets(scored, config, (f.id for f in features))
    multiplicity_flags: list[tuple[str, str]] = []
    if config.heuristics_enabled:
        sets, multiplicity_flags = expand_pattern_groups(sets, features, descriptors, config)

    timestamp = clock.now()
    mappings, flagged = resolve(
        sets,
        features,
        entities,
        descriptors,
        config,
        escalation_client,
        timestamp=timestamp,
    )

    # Unsatisfied multiplicity is a reviewer-facing discrepancy even when the
    # entity still mapped onto the available group members.
    flagged_ids = {f.entity_id for f in flagged}
    mapped_ids = {m.entity_id for m in mappings if m.is_active}
    for eid, why in multiplicity_flags:
        if eid not in flagged_ids:
            candidates = tuple(
                sorted(
                    (c for s in sets for c in s.ranked if c.entity_id == eid),
                    key=lambda c: (-c.s_final, c.feature_id),
                )
            )
            flagged.append(
                FlaggedItem(
                    entity_id=eid,
                    reason="multiplicity_unsatisfied",
                    candidates=candidates,
                    rationale=why,
                )
            )
            flagged_ids.add(eid)
    flagged.sort(key=lambda f: f.entity_id)

    candidate_entities = {c.entity_id for s in sets for c in s.ranked}
    unmapped_reasons = {
        e.id: (
            "not selected by any feature's near-tie resolution"
            if e.id in candidate_entities
            else "type-gated or below candidate threshold"
        )
        for e in entities
        if e.id not in mapped_ids and e.id not in flagged_ids
    }

    spec = emit_proposed_spec(
        inputs.part_id,
        mappings,
        flagged,
        entities,
        features,
        config,
        unmapped_reasons=unmapped_reasons,
    )
    return MappingRunResult(
        spec=spec,
        descriptors=descriptors,
        candidate_sets=tuple(sets),
        validation_warnings=report.warnings,
    )


def run_part_against_truth(
    part: PartInputs,
    truth: GroundTruth,
    config: PipelineConfig,
    *,
    clock: Optional[Clock] = None,
) -> tuple[UnifiedSpec, PartMetrics]:
    """Map one part with the ground-truth oracle escalator and score it."""
    client = OracleClient(truth.links)
    result = run_mapping(
        part, config, escalation_client=client, clock=clock or FixedClock()
    )
    metrics = compute_metrics(predicted_links(result.spec), truth)
    return result.spec, metrics


def evaluate_corpus(
    corpus: Sequence[tuple[PartInputs, GroundTruth]] | Sequence[PartInputs],
    truths: Optional[Mapping[str, GroundTruth]],
    config: PipelineConfig,
    *,
    jobs: int = 1,
    clock: Optional[Clock] = None,
) -> list[tuple[str, PartMetrics]]:
    """Per-part metrics for a corpus, in part-id order regardless of jobs."""
    pairs: list[tuple[PartInputs, GroundTruth]] = []
    for item in corpus:
        if isinstance(item, tuple):
            pairs.append(item)
        else:
            if truths is None or item.part_id not in truths:
                raise InputError(f"no ground truth for part {item.part_id}")
            pairs.append((item, truths[item.part_id]))

    def work(pair: tuple[PartInputs, GroundTruth]) -> tuple[str, PartMetrics]:
        part, truth = pair
        _, metrics = run_part_against_truth(part, truth, config, clock=clock)
        return part.part_id, metrics

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    return sorted(results, key=lambda r: r[0])
