"""Assembly of the unified manufacturing specification, before and after review.

Timestamps and reviewer identities come through an injectable clock so
golden-file tests stay stable. Review mutation is pure: apply_review_decisions
returns a new document with the revision bumped and the audit log extended.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Mapping, Optional, Protocol, Sequence

from .model import (
    DrawingEntity,
    Feature3D,
    FlaggedItem,
    InputError,
    MappingRecord,
    PipelineConfig,
    ProvenanceEvent,
    UnifiedSpec,
)

DEFAULT_FIXED_ISO = "2026-01-01T00:00:00+00:00"


class Clock(Protocol):
    def now(self) -> str: ...


@dataclass(frozen=True)
class FixedClock:
    """Constant timestamps for reproducible documents."""

    iso: str = DEFAULT_FIXED_ISO

    def now(self) -> str:
        return self.iso


class SystemClock:
    def now(self) -> str:
        return datetime.now(timezone.utc).isoformat()


class ReviewError(InputError):
    """A review decision violates the document's contract."""


def emit_proposed_spec(
    part_id: str,
    mappings: Sequence[MappingRecord],
    flagged: Sequence[FlaggedItem],
    entities: Sequence[DrawingEntity],
    features: Sequence[Feature3D],
    config: PipelineConfig,
    *,
    unmapped_reasons: Optional[Mapping[str, str]] = None,
) -> UnifiedSpec:
    """Bind mappings, flagged items, and leftovers into a proposed document.

    Exhaustive over entities and features: every entity lands in an active
    mapping or in unmapped_entities (flagged entities appear in both the
    flagged list and unmapped, pending review); features without an active
    mapping are listed as unconstrained. Approval is absent by construction.
    """
    unmapped_reasons = unmapped_reasons or {}
    mapped_entities = {m.entity_id for m in mappings if m.is_active}
    flagged_by_entity = {f.entity_id: f for f in flagged}

    unmapped: list[tuple[str, str]] = []
    for entity in sorted(entities, key=lambda e: e.id):
        if entity.id in mapped_entities:
            continue
        flag = flagged_by_entity.get(entity.id)
        if flag is not None:
            unmapped.append((entity.id, f"flagged: {flag.reason}"))
        else:
            unmapped.append(
                (entity.id, unmapped_reasons.get(entity.id, "no accepted correspondence"))
            )

    constrained = {m.feature_id for m in mappings if m.is_active}
    unconstrained = tuple(f.id for f in sorted(features, key=lambda f: f.id) if f.id not in constrained)

    spec = UnifiedSpec(
        part_id=part_id,
        mappings=tuple(sorted(mappings, key=lambda m: (m.feature_id, m.entity_id))),
        flagged=tuple(sorted(flagged, key=lambda f: f.entity_id)),
        unmapped_entities=tuple(unmapped),
        unconstrained_features=unconstrained,
        config_snapshot=config,
        approval=None,
    )
    spec.check_exhaustive(e.id for e in entities)
    return spec


@dataclass(frozen=True)
class ReviewDecision:
    """One reviewer action against a mapping or flagged item.

    Actions: accept (confirm a mapping or resolve a flag onto feature_id),
    reject (drop it, entity goes to unmapped), edit (retarget a mapping to
    feature_id), approve (finalize the document; only with zero flags left).
    """

    action: str  # accept | reject | edit | approve
    reviewer: str
    target_id: str = ""  # mapping id "F::E" or flag id "flag::E"; empty for approve
    feature_id: Optional[str] = None
    rationale: str = ""


def _human_event(decision: ReviewDecision, clock: Clock) -> ProvenanceEvent:
    return ProvenanceEvent.make(
        stage="hitl_review",
        timestamp=clock.now(),
        actor="human",
        payload={
            "action": decision.action,
            "target_id": decision.target_id,
            "feature_id": decision.feature_id,
            "reviewer": decision.reviewer,
            "rationale": decision.rationale,
        },
    )


def apply_review_decisions(
    spec: UnifiedSpec,
    decisions: Sequence[ReviewDecision],
    clock: Optional[Clock] = None,
) -> UnifiedSpec:
    """Apply reviewer decisions in order, returning the updated document.

    Edited mappings become method=human / status=human_edited with the human
    event appended; rejections move the entity to unmapped with the reviewer
    rationale; approval is recorded only via an explicit approve action and
    refused while flagged items remain. Provenance is append-only.
    """
    clock = clock or SystemClock()
    if spec.approved:
        raise ReviewError(f"spec {spec.part_id} is already approved")

    for decision in decisions:
        event = _human_event(decision, clock)
        if decision.action == "approve":
            if spec.flagged:
                raise ReviewError(
                    f"cannot approve: {len(spec.flagged)} flagged item(s) remain"
                )
            spec = replace(
                spec,
                approval=(decision.reviewer, clock.now()),
                review_log=spec.review_log + (event,),
                revision=spec.revision + 1,
            )
            continue

        if decision.target_id.startswith("flag::"):
            spec = _apply_to_flag(spec, decision, event)
        else:
            spec = _apply_to_mapping(spec, decision, event)
        spec = replace(
            spec, review_log=spec.review_log + (event,), revision=spec.revision + 1
        )
    return spec


def _apply_to_flag(
    spec: UnifiedSpec, decision: ReviewDecision, event: ProvenanceEvent
) -> UnifiedSpec:
    flag = spec.flag_by_id(decision.target_id)
    if flag is None:
        raise ReviewError(f"unknown flagged item {decision.target_id!r}")
    remaining = tuple(f for f in spec.flagged if f.flag_id != decision.target_id)

    if decision.action in ("accept", "edit"):
        target = decision.feature_id
        if not target:
            raise ReviewError("resolving a flagged item requires feature_id")
        if target not in {c.feature_id for c in flag.candidates}:
            raise ReviewError(
                f"feature {target!r} is not a candidate of {decision.target_id}"
            )
        chosen = next(c for c in flag.candidates if c.feature_id == target)
        record = MappingRecord(
            feature_id=target,
            entity_id=flag.entity_id,
            method="human",
            confidence=1.0,
            rationale=decision.rationale or "resolved by reviewer",
            status="accepted",
            provenance=flag.provenance
            + (
                ProvenanceEvent.make(
                    stage="deterministic_scoring",
                    timestamp=event.timestamp,
                    actor="scoring_engine",
                    payload={"s_final": chosen.s_final, "trace": list(chosen.trace)},
                ),
                event,
            ),
        )
        return replace(
            spec,
            mappings=tuple(
                sorted(spec.mappings + (record,), key=lambda m: (m.feature_id, m.entity_id))
            ),
            flagged=remaining,
            unmapped_entities=tuple(
                (eid, r) for eid, r in spec.unmapped_entities if eid != flag.entity_id
            ),
            unconstrained_features=tuple(
                fid for fid in spec.unconstrained_features if fid != target
            ),
        )

    if decision.action == "reject":
        rationale = decision.rationale or "rejected by reviewer"
        unmapped = tuple(
            (eid, rationale if eid == flag.entity_id else r)
            for eid, r in spec.unmapped_entities
        )
        actively_mapped = {m.entity_id for m in spec.active_mappings}
        if (
            flag.entity_id not in {eid for eid, _ in unmapped}
            and flag.entity_id not in actively_mapped
        ):
            unmapped = unmapped + ((flag.entity_id, rationale),)
        return replace(spec, flagged=remaining, unmapped_entities=unmapped)

    raise ReviewError(f"unknown review action {decision.action!r}")


def _apply_to_mapping(
    spec: UnifiedSpec, decision: ReviewDecision, event: ProvenanceEvent
) -> UnifiedSpec:
    record = spec.mapping_by_id(decision.target_id)
    if record is None:
        raise ReviewError(f"unknown mapping {decision.target_id!r}")
    others = tuple(m for m in spec.mappings if m.record_id != decision.target_id)
    known_features = (
        set(spec.unconstrained_features)
        | {m.feature_id for m in spec.mappings}
        | ({decision.feature_id} if decision.feature_id else set())
    )

    if decision.action == "accept":
        updated = replace(record, provenance=record.provenance + (event,))
        mappings = others + (updated,)
    elif decision.action == "reject":
        rationale = decision.rationale or "rejected by reviewer"
        updated = replace(
            record,
            status="rejected",
            rationale=rationale,
            provenance=record.provenance + (event,),
        )
        mappings = others + (updated,)
    elif decision.action == "edit":
        if not decision.feature_id:
            raise ReviewError("edit requires feature_id")
        updated = replace(
            record,
            feature_id=decision.feature_id,
            method="human",
            status="human_edited",
            provenance=record.provenance + (event,),
        )
        mappings = others + (updated,)
    else:
        raise ReviewError(f"unknown review action {decision.action!r}")

    spec = replace(
        spec, mappings=tuple(sorted(mappings, key=lambda m: (m.feature_id, m.entity_id)))
    )

    # Keep the entity/feature buckets consistent with the new active set.
    active_entities = {m.entity_id for m in spec.active_mappings}
    unmapped = [(eid, r) for eid, r in spec.unmapped_entities if eid not in active_entities]
    if record.entity_id not in active_entities and record.entity_id not in {
        eid for eid, _ in unmapped
    }:
        unmapped.append((record.entity_id, decision.rationale or "rejected by reviewer"))
    constrained = {m.feature_id for m in spec.active_mappings}
    unconstrained = tuple(sorted(f for f in known_features if f not in constrained))
    return replace(
        spec, unmapped_entities=tuple(unmapped), unconstrained_features=unconstrained
    )
