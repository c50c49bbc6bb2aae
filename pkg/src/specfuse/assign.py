"""Candidate filtering, greedy near-tie selection, and mapping resolution.

Selection is per 3D feature: candidates surviving the score threshold are
ranked, and every candidate within the ratio rho of the feature's best score
forms the near-tie set. Singleton near-ties above the escalation threshold
are accepted deterministically; everything else is grouped per entity and
escalated (or flagged when escalation is unavailable). One-to-many
correspondences are permitted in both directions; the resolver never
enforces injectivity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from .escalate import (
    CandidateSummary,
    EscalationClient,
    EscalationRequest,
    STAGE_MULTIMODAL,
    escalate,
)
from .model import (
    DrawingEntity,
    EnrichedDescriptor,
    Feature3D,
    FlaggedItem,
    MappingRecord,
    PipelineConfig,
    ProvenanceEvent,
    ScoredCandidate,
)
from .scoring import ROUTABLE_PARAMS


@dataclass(frozen=True)
class CandidateSet:
    """Per-feature ranked candidates plus the near-tie subset."""

    feature_id: str
    ranked: tuple[ScoredCandidate, ...]
    near_tie: tuple[ScoredCandidate, ...]

    @property
    def best(self) -> ScoredCandidate:
        return self.ranked[0]


def _rank(candidates: Iterable[ScoredCandidate]) -> tuple[ScoredCandidate, ...]:
    # Ties broken by entity id so ranking is a reproducible total order.
    return tuple(sorted(candidates, key=lambda c: (-c.s_final, c.entity_id)))


def _near_tie(ranked: Sequence[ScoredCandidate], rho: float) -> tuple[ScoredCandidate, ...]:
    cutoff = rho * ranked[0].s_final
    return tuple(c for c in ranked if c.s_final >= cutoff)


def build_candidate_sets(
    scored: Iterable[ScoredCandidate],
    config: PipelineConfig,
    feature_ids: Iterable[str],
) -> tuple[list[CandidateSet], list[str]]:
    """Filter by theta_cand and build per-feature near-tie sets.

    Returns the candidate sets (one per feature with at least one survivor)
    plus the ids of features left unconstrained. An entity may appear in
    several sets; the same dimension can constrain multiple instances.
    """
    by_feature: dict[str, list[ScoredCandidate]] = {}
    for cand in scored:
        if cand.s_final >= config.theta_cand:
            by_feature.setdefault(cand.feature_id, []).append(cand)

    sets: list[CandidateSet] = []
    unconstrained: list[str] = []
    for fid in sorted(feature_ids):
        if fid not in by_feature:
            unconstrained.append(fid)
            continue
        ranked = _rank(by_feature[fid])
        sets.append(
            CandidateSet(feature_id=fid, ranked=ranked, near_tie=_near_tie(ranked, config.rho))
        )
    return sets, unconstrained


def _geometrically_similar(a: Feature3D, b: Feature3D, epsilon: float) -> bool:
    """Same pattern id, or same type with all shared routable params within epsilon."""
    if a.pattern_id is not None and a.pattern_id == b.pattern_id:
        return True
    if a.feature_type != b.feature_type:
        return False
    shared = [k for k in ROUTABLE_PARAMS if k in a.params and k in b.params]
    if not shared:
        return False
    return all(abs(a.params[k] - b.params[k]) <= epsilon for k in shared)


def expand_pattern_groups(
    sets: list[CandidateSet],
    features: Sequence[Feature3D],
    descriptors: Mapping[str, EnrichedDescriptor],
    config: PipelineConfig,
) -> tuple[list[CandidateSet], list[tuple[str, str]]]:
    """Propagate nX callouts across groups of geometrically similar features.

    A multiplicity-n descriptor whose best match belongs to a group of at
    least n similar features becomes a candidate of every group member at
    the same score. Groups smaller than n leave the entity flagged as
    multiplicity-unsatisfied.
    """
    features_by_id = {f.id: f for f in features}
    sets_by_feature: dict[str, CandidateSet] = {s.feature_id: s for s in sets}
    unsatisfied: list[tuple[str, str]] = []

    for eid in sorted(descriptors):
        desc = descriptors[eid]
        n = desc.multiplicity
        if n <= 1:
            continue
        owned = [
            c
            for s in sets_by_feature.values()
            for c in s.ranked
            if c.entity_id == eid
        ]
        if not owned:
            continue
        best = min(owned, key=lambda c: (-c.s_final, c.feature_id))
        anchor = features_by_id[best.feature_id]
        group = [
            f for f in features if _geometrically_similar(anchor, f, config.epsilon_mm)
        ]
        if len(group) < n:
            unsatisfied.append(
                (eid, f"multiplicity {n} unsatisfied: only {len(group)} similar features")
            )
            continue
        for member in group:
            existing = sets_by_feature.get(member.id)
            if existing and any(
                c.entity_id == eid and c.s_final >= best.s_final for c in existing.ranked
            ):
                continue
            expanded = replace(
                best,
                feature_id=member.id,
                trace=best.trace + (f"pattern group expansion from {best.feature_id}",),
            )
            kept = [c for c in (existing.ranked if existing else ()) if c.entity_id != eid]
            ranked = _rank(kept + [expanded])
            sets_by_feature[member.id] = CandidateSet(
                feature_id=member.id,
                ranked=ranked,
                near_tie=_near_tie(ranked, config.rho),
            )

    return [sets_by_feature[fid] for fid in sorted(sets_by_feature)], unsatisfied


def _clamp01(x: float) -> float:
    return max(0.0, min(1.0, x))


def _summaries(
    pending: Sequence[tuple[str, ScoredCandidate]], features_by_id: Mapping[str, Feature3D]
) -> tuple[CandidateSummary, ...]:
    ordered = sorted(pending, key=lambda fc: (-fc[1].s_final, fc[0]))
    return tuple(
        CandidateSummary(
            feature_id=fid,
            feature_type=features_by_id[fid].feature_type,
            params=features_by_id[fid].params,
            s_final=cand.s_final,
        )
        for fid, cand in ordered
    )


def resolve(
    sets: Sequence[CandidateSet],
    features: Sequence[Feature3D],
    entities: Sequence[DrawingEntity],
    descriptors: Mapping[str, EnrichedDescriptor],
    config: PipelineConfig,
    client: Optional[EscalationClient],
    *,
    timestamp: str = "",
) -> tuple[list[MappingRecord], list[FlaggedItem]]:
    """Turn candidate sets into accepted mappings and flagged items.

    Singleton near-tie at or above theta_escal: deterministic accept with
    confidence clamp(s_final, 0, 1). Otherwise the near-tie pairs are pooled
    per entity and escalated; valid map responses become mappings with the
    stage's method and the reported confidence, rejections and failures
    become flagged items. With argmax_accept the top candidate per feature
    is accepted directly and nothing escalates.
    """
    features_by_id = {f.id: f for f in features}
    entities_by_id = {e.id: e for e in entities}
    mappings: list[MappingRecord] = []
    pending: dict[str, list[tuple[str, ScoredCandidate]]] = {}

    def deterministic_accept(cand: ScoredCandidate, note: str) -> None:
        mappings.append(
            MappingRecord(
                feature_id=cand.feature_id,
                entity_id=cand.entity_id,
                method="deterministic",
                confidence=_clamp01(cand.s_final),
                rationale=note,
                status="accepted",
                provenance=(
                    ProvenanceEvent.make(
                        stage="deterministic_scoring",
                        timestamp=timestamp,
                        actor="scoring_engine",
                        payload={"s_final": cand.s_final, "trace": list(cand.trace)},
                    ),
                ),
            )
        )

    for cset in sets:
        if config.argmax_accept:
            top = cset.ranked[0]
            deterministic_accept(top, f"argmax accept; s_final={top.s_final:.4f}")
            continue
        if len(cset.near_tie) == 1 and cset.best.s_final >= config.theta_escal:
            deterministic_accept(
                cset.best, f"near-tie singleton; s_final={cset.best.s_final:.4f}"
            )
            continue
        for cand in cset.near_tie:
            pending.setdefault(cand.entity_id, []).append((cset.feature_id, cand))

    flagged: list[FlaggedItem] = []
    for eid in sorted(pending):
        pairs = pending[eid]
        candidates = tuple(c for _, c in sorted(pairs, key=lambda fc: (-fc[1].s_final, fc[0])))
        reason = (
            "near_tie_ambiguity" if len(pairs) > 1 else "low_deterministic_confidence"
        )
        if client is None or not (
            config.vlm_selection_enabled or config.llm_escalation_enabled
        ):
            flagged.append(
                FlaggedItem(
                    entity_id=eid,
                    reason=reason,
                    candidates=candidates,
                    rationale="escalation unavailable",
                )
            )
            continue
        entity = entities_by_id[eid]
        request = EscalationRequest(
            stage=STAGE_MULTIMODAL,
            entity=entity,
            descriptor=descriptors[eid],
            candidates=_summaries(pairs, features_by_id),
            drawing_region=entity.context.region_ref if entity.context else None,
        )
        outcome = escalate(request, client, config, timestamp=timestamp)
        if outcome.mapped:
            assert outcome.response is not None and outcome.method is not None
            target = outcome.response.target_feature_id or ""
            chosen = next(c for fid, c in pairs if fid == target)
            mappings.append(
                MappingRecord(
                    feature_id=target,
                    entity_id=eid,
                    method=outcome.method,
                    confidence=_clamp01(outcome.response.confidence),
                    rationale=outcome.response.rationale,
                    status="accepted",
                    provenance=(
                        ProvenanceEvent.make(
                            stage="deterministic_scoring",
                            timestamp=timestamp,
                            actor="scoring_engine",
                            payload={"s_final": chosen.s_final, "trace": list(chosen.trace)},
                        ),
                    )
                    + outcome.events,
                )
            )
        else:
            flagged.append(
                FlaggedItem(
                    entity_id=eid,
                    reason=outcome.flagged_reason or reason,
                    candidates=candidates,
                    rationale=outcome.rationale,
                    provenance=outcome.events,
                )
            )

    mappings.sort(key=lambda m: (m.feature_id, m.entity_id))
    flagged.sort(key=lambda f: f.entity_id)
    return mappings, flagged
