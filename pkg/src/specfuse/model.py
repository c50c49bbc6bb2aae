"""Shared domain types for the drawing-to-CAD mapping pipeline.

Everything here is an immutable value object: construct, validate, share
freely across workers. Serialization is canonical (sorted keys, compact
separators) so encode -> decode -> encode is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

SPEC_VERSION = "1"

MM_PER_INCH = 25.4

# Feature types recognized out of the box. Anything else is treated as an
# "other" label: it participates in type scoring only if a custom
# compatibility table lists it explicitly.
KNOWN_FEATURE_TYPES = frozenset({
    "hole", "bore", "drill", "slot", "pocket", "groove", "fillet", "round",
    "boss", "cylinder", "plane", "chamfer", "thread_hole",
})

ENTITY_TYPES = frozenset({
    "dimension", "gdt_frame", "surface_roughness", "note", "thread_callout",
    "datum",
})

NORMALIZED_TYPES = frozenset({
    "diameter", "radius", "linear", "depth", "thread", "angle",
    "countersink", "counterbore", "gdt_position", "gdt_profile",
    "gdt_runout", "gdt_flatness", "datum_ref", "roughness", "unknown",
})

MAPPING_METHODS = frozenset({"deterministic", "deterministic_vlm", "llm", "human"})
MAPPING_STATUSES = frozenset({"accepted", "flagged", "rejected", "human_edited"})

# Params whose values are lengths in mm and must be strictly positive.
DIMENSIONAL_PARAMS = frozenset({"diameter", "radius", "depth", "width", "length", "height"})


class InputError(ValueError):
    """Raised when caller-supplied data violates a documented contract."""


class InternalInvariantError(RuntimeError):
    """Raised when the engine itself produced an inconsistent document."""


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(value: Any) -> str:
    """sha256 hex digest of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InputError(msg)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


# ---------------------------------------------------------------------------
# Input side: 3D features and 2D drawing entities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Feature3D:
    """One recognized CAD feature: type, geometry, AFR confidence, metadata."""

    id: str
    feature_type: str
    params: Mapping[str, float] = field(default_factory=dict)
    afr_confidence: float = 1.0
    pattern_id: Optional[str] = None
    symmetry_group: Optional[str] = None
    centroid: Optional[tuple[float, float, float]] = None
    bbox: Optional[tuple[tuple[float, float, float], tuple[float, float, float]]] = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "feature id must be non-empty")
        _require(bool(self.feature_type), f"feature {self.id}: feature_type must be non-empty")
        _require(
            _finite(self.afr_confidence) and 0.0 <= self.afr_confidence <= 1.0,
            f"feature {self.id}: afr_confidence must be in [0,1]",
        )
        for name, value in self.params.items():
            _require(_finite(value), f"feature {self.id}: param {name} must be finite")
            if name in DIMENSIONAL_PARAMS:
                _require(value > 0, f"feature {self.id}: dimensional param {name} must be > 0")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "feature_type": self.feature_type,
            "params": dict(sorted(self.params.items())),
            "afr_confidence": self.afr_confidence,
        }
        if self.pattern_id is not None:
            d["pattern_id"] = self.pattern_id
        if self.symmetry_group is not None:
            d["symmetry_group"] = self.symmetry_group
        if self.centroid is not None:
            d["centroid"] = list(self.centroid)
        if self.bbox is not None:
            d["bbox"] = [list(self.bbox[0]), list(self.bbox[1])]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Feature3D":
        try:
            centroid = tuple(float(v) for v in d["centroid"]) if "centroid" in d else None
            bbox = None
            if "bbox" in d:
                lo, hi = d["bbox"]
                bbox = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))
            return cls(
                id=str(d["id"]),
                feature_type=str(d["feature_type"]),
                params={str(k): float(v) for k, v in d.get("params", {}).items()},
                afr_confidence=float(d.get("afr_confidence", 1.0)),
                pattern_id=d.get("pattern_id"),
                symmetry_group=d.get("symmetry_group"),
                centroid=centroid,  # type: ignore[arg-type]
                bbox=bbox,  # type: ignore[arg-type]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad feature record: {exc}") from exc


@dataclass(frozen=True)
class EntityContext:
    """Local drawing context: where the annotation sits and what it touches."""

    bbox: Optional[tuple[float, float, float, float]] = None
    neighbor_ids: tuple[str, ...] = ()
    view_id: Optional[str] = None
    region_ref: Optional[str] = None  # opaque cropped-image reference, passed through

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        if self.bbox is not None:
            d["bbox"] = list(self.bbox)
        if self.neighbor_ids:
            d["neighbor_ids"] = list(self.neighbor_ids)
        if self.view_id is not None:
            d["view_id"] = self.view_id
        if self.region_ref is not None:
            d["region_ref"] = self.region_ref
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EntityContext":
        bbox = tuple(float(v) for v in d["bbox"]) if "bbox" in d else None
        return cls(
            bbox=bbox,  # type: ignore[arg-type]
            neighbor_ids=tuple(str(v) for v in d.get("neighbor_ids", ())),
            view_id=d.get("view_id"),
            region_ref=d.get("region_ref"),
        )


@dataclass(frozen=True)
class DrawingEntity:
    """Raw extracted 2D drawing annotation (dimension, GD&T frame, note...)."""

    id: str
    entity_type: str
    raw_text: str
    semantic_values: Mapping[str, Any] = field(default_factory=dict)
    context: Optional[EntityContext] = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "entity id must be non-empty")
        _require(
            self.entity_type in ENTITY_TYPES,
            f"entity {self.id}: unknown entity_type {self.entity_type!r}",
        )
        _require(bool(self.raw_text), f"entity {self.id}: raw_text must be non-empty")

    @property
    def has_spatial_cues(self) -> bool:
        c = self.context
        return c is not None and (
            c.bbox is not None or c.view_id is not None or bool(c.neighbor_ids)
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "entity_type": self.entity_type,
            "raw_text": self.raw_text,
            "semantic_values": dict(sorted(self.semantic_values.items())),
        }
        if self.context is not None:
            ctx = self.context.to_dict()
            if ctx:
                d["context"] = ctx
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DrawingEntity":
        try:
            ctx = EntityContext.from_dict(d["context"]) if "context" in d else None
            return cls(
                id=str(d["id"]),
                entity_type=str(d["entity_type"]),
                raw_text=str(d["raw_text"]),
                semantic_values=dict(d.get("semantic_values", {})),
                context=ctx,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad entity record: {exc}") from exc


@dataclass(frozen=True)
class EnrichedDescriptor:
    """Normalized semantic form of one drawing entity, produced once before scoring."""

    entity_id: str
    normalized_type: str
    numeric_value: Optional[float] = None
    unit: str = "mm"
    target_category: Optional[str] = None
    multiplicity: int = 1
    has_diameter_symbol: bool = False
    enrich_confidence: float = 0.5
    has_spatial_context: bool = False

    def __post_init__(self) -> None:
        _require(
            self.normalized_type in NORMALIZED_TYPES,
            f"descriptor {self.entity_id}: unknown normalized_type {self.normalized_type!r}",
        )
        _require(self.multiplicity >= 1, f"descriptor {self.entity_id}: multiplicity must be >= 1")
        _require(
            0.0 <= self.enrich_confidence <= 1.0,
            f"descriptor {self.entity_id}: enrich_confidence must be in [0,1]",
        )
        if self.normalized_type == "thread":
            _require(
                self.numeric_value is not None,
                f"descriptor {self.entity_id}: thread descriptors carry the nominal diameter",
            )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "entity_id": self.entity_id,
            "normalized_type": self.normalized_type,
            "unit": self.unit,
            "multiplicity": self.multiplicity,
            "has_diameter_symbol": self.has_diameter_symbol,
            "enrich_confidence": self.enrich_confidence,
            "has_spatial_context": self.has_spatial_context,
        }
        if self.numeric_value is not None:
            d["numeric_value"] = self.numeric_value
        if self.target_category is not None:
            d["target_category"] = self.target_category
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EnrichedDescriptor":
        try:
            nv = d.get("numeric_value")
            return cls(
                entity_id=str(d["entity_id"]),
                normalized_type=str(d["normalized_type"]),
                numeric_value=float(nv) if nv is not None else None,
                unit=str(d.get("unit", "mm")),
                target_category=d.get("target_category"),
                multiplicity=int(d.get("multiplicity", 1)),
                has_diameter_symbol=bool(d.get("has_diameter_symbol", False)),
                enrich_confidence=float(d.get("enrich_confidence", 0.5)),
                has_spatial_context=bool(d.get("has_spatial_context", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad descriptor record: {exc}") from exc


# ---------------------------------------------------------------------------
# Pipeline configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Every constant the pipeline uses, with the published defaults."""

    w_t: float = 0.4
    w_d: float = 0.4
    w_c: float = 0.2
    theta_cand: float = 0.3
    rho: float = 0.9
    epsilon_mm: float = 0.1
    theta_escal: float = 0.6
    heuristics_enabled: bool = True
    context_enabled: bool = True
    vlm_selection_enabled: bool = True
    llm_escalation_enabled: bool = True
    # Table III's no-heuristics variant also loses semantic dimension routing;
    # kept as its own flag so the alternate reading stays available.
    routing_enabled: bool = True
    # Deterministic-only resolution: accept the argmax candidate per feature,
    # never flag or escalate.
    argmax_accept: bool = False

    def __post_init__(self) -> None:
        # The no-context ablation zeroes w_c and suspends the sum constraint.
        if self.context_enabled and self.w_c != 0.0:
            _require(
                abs(self.w_t + self.w_d + self.w_c - 1.0) <= 1e-9,
                "w_t + w_d + w_c must equal 1",
            )
        _require(0.0 < self.rho <= 1.0, "rho must be in (0,1]")
        _require(self.epsilon_mm > 0.0, "epsilon_mm must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "w_t": self.w_t,
            "w_d": self.w_d,
            "w_c": self.w_c,
            "theta_cand": self.theta_cand,
            "rho": self.rho,
            "epsilon_mm": self.epsilon_mm,
            "theta_escal": self.theta_escal,
            "heuristics_enabled": self.heuristics_enabled,
            "context_enabled": self.context_enabled,
            "vlm_selection_enabled": self.vlm_selection_enabled,
            "llm_escalation_enabled": self.llm_escalation_enabled,
            "routing_enabled": self.routing_enabled,
            "argmax_accept": self.argmax_accept,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        try:
            return cls(**known)
        except TypeError as exc:
            raise InputError(f"bad config record: {exc}") from exc


# ---------------------------------------------------------------------------
# Scoring and mapping outputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoredCandidate:
    """A (feature, entity) pair with component scores and the full audit trace."""

    feature_id: str
    entity_id: str
    s_type: float
    s_dim: float
    s_ctx: float
    h_adjust: float
    multiplicative_factors: tuple[tuple[str, float], ...]
    s_final: float
    trace: tuple[str, ...]

    @property
    def pair(self) -> tuple[str, str]:
        return (self.feature_id, self.entity_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_id": self.feature_id,
            "entity_id": self.entity_id,
            "s_type": self.s_type,
            "s_dim": self.s_dim,
            "s_ctx": self.s_ctx,
            "h_adjust": self.h_adjust,
            "multiplicative_factors": [[label, f] for label, f in self.multiplicative_factors],
            "s_final": self.s_final,
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScoredCandidate":
        return cls(
            feature_id=str(d["feature_id"]),
            entity_id=str(d["entity_id"]),
            s_type=float(d["s_type"]),
            s_dim=float(d["s_dim"]),
            s_ctx=float(d["s_ctx"]),
            h_adjust=float(d["h_adjust"]),
            multiplicative_factors=tuple((str(l), float(f)) for l, f in d["multiplicative_factors"]),
            s_final=float(d["s_final"]),
            trace=tuple(str(t) for t in d["trace"]),
        )


@dataclass(frozen=True)
class ProvenanceEvent:
    """One step in a record's decision history."""

    stage: str
    timestamp: str
    actor: str
    payload_digest: str
    payload: Optional[Mapping[str, Any]] = None

    @classmethod
    def make(
        cls,
        stage: str,
        timestamp: str,
        actor: str,
        payload: Optional[Mapping[str, Any]] = None,
    ) -> "ProvenanceEvent":
        return cls(
            stage=stage,
            timestamp=timestamp,
            actor=actor,
            payload_digest=digest(payload if payload is not None else {}),
            payload=payload,
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "stage": self.stage,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "payload_digest": self.payload_digest,
        }
        if self.payload is not None:
            d["payload"] = dict(self.payload)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ProvenanceEvent":
        return cls(
            stage=str(d["stage"]),
            timestamp=str(d["timestamp"]),
            actor=str(d["actor"]),
            payload_digest=str(d["payload_digest"]),
            payload=d.get("payload"),
        )


@dataclass(frozen=True)
class MappingRecord:
    """An accepted (or audited) correspondence between one feature and one entity."""

    feature_id: str
    entity_id: str
    method: str
    confidence: float
    rationale: str
    status: str
    provenance: tuple[ProvenanceEvent, ...] = ()

    def __post_init__(self) -> None:
        _require(self.method in MAPPING_METHODS, f"unknown mapping method {self.method!r}")
        _require(self.status in MAPPING_STATUSES, f"unknown mapping status {self.status!r}")
        _require(0.0 <= self.confidence <= 1.0, "mapping confidence must be in [0,1]")
        if self.method == "human":
            _require(
                any(ev.actor == "human" for ev in self.provenance),
                "human mappings require a human provenance event",
            )
        if self.status == "rejected":
            _require(bool(self.rationale), "rejected mappings carry a rationale")

    @property
    def record_id(self) -> str:
        return f"{self.feature_id}::{self.entity_id}"

    @property
    def is_active(self) -> bool:
        return self.status in ("accepted", "human_edited")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.record_id,
            "feature_id": self.feature_id,
            "entity_id": self.entity_id,
            "method": self.method,
            "confidence": self.confidence,
            "rationale": self.rationale,
            "status": self.status,
            "provenance": [ev.to_dict() for ev in self.provenance],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MappingRecord":
        return cls(
            feature_id=str(d["feature_id"]),
            entity_id=str(d["entity_id"]),
            method=str(d["method"]),
            confidence=float(d["confidence"]),
            rationale=str(d.get("rationale", "")),
            status=str(d["status"]),
            provenance=tuple(ProvenanceEvent.from_dict(ev) for ev in d.get("provenance", [])),
        )


@dataclass(frozen=True)
class FlaggedItem:
    """An unresolved entity held for human review, with its candidate traces."""

    entity_id: str
    reason: str
    candidates: tuple[ScoredCandidate, ...] = ()
    rationale: str = ""
    provenance: tuple[ProvenanceEvent, ...] = ()

    @property
    def flag_id(self) -> str:
        return f"flag::{self.entity_id}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.flag_id,
            "entity_id": self.entity_id,
            "reason": self.reason,
            "rationale": self.rationale,
            "candidates": [c.to_dict() for c in self.candidates],
            "provenance": [ev.to_dict() for ev in self.provenance],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FlaggedItem":
        return cls(
            entity_id=str(d["entity_id"]),
            reason=str(d["reason"]),
            candidates=tuple(ScoredCandidate.from_dict(c) for c in d.get("candidates", [])),
            rationale=str(d.get("rationale", "")),
            provenance=tuple(ProvenanceEvent.from_dict(ev) for ev in d.get("provenance", [])),
        )


@dataclass(frozen=True)
class UnifiedSpec:
    """The output document binding drawing constraints to CAD features."""

    part_id: str
    mappings: tuple[MappingRecord, ...]
    flagged: tuple[FlaggedItem, ...]
    unmapped_entities: tuple[tuple[str, str], ...]  # (entity_id, reason)
    unconstrained_features: tuple[str, ...]
    config_snapshot: PipelineConfig
    approval: Optional[tuple[str, str]] = None  # (reviewer, timestamp)
    review_log: tuple[ProvenanceEvent, ...] = ()
    spec_version: str = SPEC_VERSION
    revision: int = 0

    @property
    def active_mappings(self) -> tuple[MappingRecord, ...]:
        return tuple(m for m in self.mappings if m.is_active)

    @property
    def approved(self) -> bool:
        return self.approval is not None

    def mapping_by_id(self, record_id: str) -> Optional[MappingRecord]:
        for m in self.mappings:
            if m.record_id == record_id:
                return m
        return None

    def flag_by_id(self, flag_id: str) -> Optional[FlaggedItem]:
        for f in self.flagged:
            if f.flag_id == flag_id:
                return f
        return None

    def check_exhaustive(self, entity_ids: Iterable[str]) -> None:
        """Every entity must land in an active mapping or in unmapped_entities."""
        mapped = {m.entity_id for m in self.active_mappings}
        unmapped = {eid for eid, _ in self.unmapped_entities}
        missing = [eid for eid in entity_ids if eid not in mapped and eid not in unmapped]
        if missing:
            raise InternalInvariantError(
                f"spec for {self.part_id} lost entities: {sorted(missing)}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec_version": self.spec_version,
            "part_id": self.part_id,
            "revision": self.revision,
            "mappings": [m.to_dict() for m in self.mappings],
            "flagged": [f.to_dict() for f in self.flagged],
            "unmapped_entities": [
                {"entity_id": eid, "reason": reason} for eid, reason in self.unmapped_entities
            ],
            "unconstrained_features": list(self.unconstrained_features),
            "approval": (
                {"reviewer": self.approval[0], "timestamp": self.approval[1]}
                if self.approval
                else None
            ),
            "config_snapshot": self.config_snapshot.to_dict(),
            "review_log": [ev.to_dict() for ev in self.review_log],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "UnifiedSpec":
        approval = d.get("approval")
        return cls(
            part_id=str(d["part_id"]),
            mappings=tuple(MappingRecord.from_dict(m) for m in d.get("mappings", [])),
            flagged=tuple(FlaggedItem.from_dict(f) for f in d.get("flagged", [])),
            unmapped_entities=tuple(
                (str(u["entity_id"]), str(u["reason"])) for u in d.get("unmapped_entities", [])
            ),
            unconstrained_features=tuple(str(f) for f in d.get("unconstrained_features", [])),
            config_snapshot=PipelineConfig.from_dict(d.get("config_snapshot", {})),
            approval=(approval["reviewer"], approval["timestamp"]) if approval else None,
            review_log=tuple(ProvenanceEvent.from_dict(ev) for ev in d.get("review_log", [])),
            spec_version=str(d.get("spec_version", SPEC_VERSION)),
            revision=int(d.get("revision", 0)),
        )

    @classmethod
    def from_json(cls, raw: str) -> "UnifiedSpec":
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid spec JSON: {exc}") from exc
        return cls.from_dict(parsed)


# ---------------------------------------------------------------------------
# Input validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_part_inputs: issues plus normalized inputs."""

    errors: tuple[str, ...]
    warnings: tuple[str, ...]
    features: tuple[Feature3D, ...]
    entities: tuple[DrawingEntity, ...]

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def empty(self) -> bool:
        return not self.errors and not self.warnings


def validate_part_inputs(
    features: Sequence[Feature3D], entities: Sequence[DrawingEntity]
) -> ValidationReport:
    """Check pipeline admissibility and normalize units to mm.

    Duplicate ids and non-positive dimensional params are fatal. A numeric
    semantic value without a unit gets "mm" with a warning; inch values are
    converted to mm.
    """
    errors: list[str] = []
    warnings: list[str] = []

    seen_f: set[str] = set()
    for f in features:
        if f.id in seen_f:
            errors.append(f"duplicate feature id {f.id!r}")
        seen_f.add(f.id)
        for name, value in f.params.items():
            if name in DIMENSIONAL_PARAMS and value <= 0:
                errors.append(f"feature {f.id}: dimensional param {name} must be > 0")

    normalized: list[DrawingEntity] = []
    seen_e: set[str] = set()
    for e in entities:
        if e.id in seen_e:
            errors.append(f"duplicate entity id {e.id!r}")
        seen_e.add(e.id)
        sv = dict(e.semantic_values)
        value = sv.get("value")
        if value is not None and not isinstance(value, str):
            unit = str(sv.get("unit", "")).lower()
            if not unit:
                sv["unit"] = "mm"
                warnings.append(f"entity {e.id}: missing unit, defaulting to mm")
            elif unit in ("in", "inch", "inches"):
                sv["value"] = float(value) * MM_PER_INCH
                sv["unit"] = "mm"
                warnings.append(f"entity {e.id}: converted {value} in to mm")
        if sv != dict(e.semantic_values):
            e = replace(e, semantic_values=sv)
        normalized.append(e)

    return ValidationReport(
        errors=tuple(errors),
        warnings=tuple(warnings),
        features=tuple(features),
        entities=tuple(normalized),
    )


def load_features(doc: Mapping[str, Any]) -> tuple[Feature3D, ...]:
    """Parse a features file ({"features": [...]})."""
    if "features" not in doc:
        raise InputError('features file must contain a "features" key')
    return tuple(Feature3D.from_dict(f) for f in doc["features"])


def load_entities(doc: Mapping[str, Any]) -> tuple[DrawingEntity, ...]:
    """Parse an entities file ({"entities": [...]})."""
    if "entities" not in doc:
        raise InputError('entities file must contain an "entities" key')
    return tuple(DrawingEntity.from_dict(e) for e in doc["entities"])
