"""Two-stage escalation: multimodal selection, then constrained reasoning.

Both stages share one wire format and one strict output schema
({decision, target_feature_id, confidence, rationale}). A schema violation
earns exactly one retry with the validator message echoed back; a second
violation is treated as a rejection. Deterministic mock clients make the
whole protocol testable offline.
"""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol

from .model import (
    DrawingEntity,
    EnrichedDescriptor,
    InputError,
    ProvenanceEvent,
    canonical_json,
    digest,
)

STAGE_MULTIMODAL = "multimodal"
STAGE_CONSTRAINED_LLM = "constrained_llm"

# Mapping method recorded for an accept produced by each stage.
STAGE_METHODS = {STAGE_MULTIMODAL: "deterministic_vlm", STAGE_CONSTRAINED_LLM: "llm"}


class EscalationSchemaError(ValueError):
    """Response violates the fixed output schema."""


class EscalationTransportError(RuntimeError):
    """The client could not complete the exchange."""


@dataclass(frozen=True)
class CandidateSummary:
    feature_id: str
    feature_type: str
    params: Mapping[str, float]
    s_final: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_id": self.feature_id,
            "feature_type": self.feature_type,
            "params": dict(sorted(self.params.items())),
            "s_final": self.s_final,
        }


@dataclass(frozen=True)
class EscalationRequest:
    stage: str
    entity: DrawingEntity
    descriptor: EnrichedDescriptor
    candidates: tuple[CandidateSummary, ...]  # sorted by s_final descending
    drawing_region: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise InputError("escalation request needs at least one candidate")
        scores = [c.s_final for c in self.candidates]
        if scores != sorted(scores, reverse=True):
            raise InputError("escalation candidates must be sorted by s_final descending")

    @property
    def candidate_ids(self) -> tuple[str, ...]:
        return tuple(c.feature_id for c in self.candidates)

    def to_wire(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "entity": self.entity.to_dict(),
            "descriptor": self.descriptor.to_dict(),
            "candidates": [c.to_dict() for c in self.candidates],
            "drawing_region": self.drawing_region,
        }

    @property
    def request_digest(self) -> str:
        return digest(self.to_wire())


@dataclass(frozen=True)
class EscalationResponse:
    decision: str  # "map" | "reject"
    target_feature_id: Optional[str]
    confidence: float
    rationale: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "decision": self.decision,
            "target_feature_id": self.target_feature_id,
            "confidence": self.confidence,
            "rationale": self.rationale,
        }


def validate_response(raw: Any, request: EscalationRequest) -> EscalationResponse:
    """Validate a raw client payload against the fixed output schema."""
    if not isinstance(raw, Mapping):
        raise EscalationSchemaError(f"response must be a JSON object, got {type(raw).__name__}")
    decision = raw.get("decision")
    if decision not in ("map", "reject"):
        raise EscalationSchemaError(f"decision must be 'map' or 'reject', got {decision!r}")
    target = raw.get("target_feature_id")
    confidence = raw.get("confidence")
    if (
        isinstance(confidence, bool)
        or not isinstance(confidence, (int, float))
        or not 0.0 <= float(confidence) <= 1.0
    ):
        raise EscalationSchemaError(f"confidence must be a number in [0,1], got {confidence!r}")
    rationale = raw.get("rationale")
    if not isinstance(rationale, str):
        raise EscalationSchemaError("rationale must be a string")
    if decision == "map":
        if not isinstance(target, str) or not target:
            raise EscalationSchemaError("map decisions require target_feature_id")
        if target not in request.candidate_ids:
            raise EscalationSchemaError(
                f"target_feature_id {target!r} is not among the request candidates"
            )
    else:
        if target is not None:
            raise EscalationSchemaError("reject decisions must omit target_feature_id")
    return EscalationResponse(
        decision=decision,
        target_feature_id=target if decision == "map" else None,
        confidence=float(confidence),
        rationale=rationale,
    )


class EscalationClient(Protocol):
    def complete(
        self,
        request: EscalationRequest,
        *,
        validation_error: Optional[str] = None,
        previous: Any = None,
    ) -> Any:
        """Return the raw (possibly invalid) response payload."""


@dataclass(frozen=True)
class EscalationOutcome:
    """Result of running the protocol for one ambiguous entity."""

    response: Optional[EscalationResponse]
    method: Optional[str]  # set iff response is a valid map
    flagged_reason: Optional[str]
    rationale: str
    events: tuple[ProvenanceEvent, ...]
    attempts_per_stage: Mapping[str, int]

    @property
    def mapped(self) -> bool:
        return self.response is not None and self.response.decision == "map"


def escalate(
    request: EscalationRequest,
    client: EscalationClient,
    config: Any,
    *,
    timestamp: str = "",
) -> EscalationOutcome:
    """Run the staged protocol for one entity.

    The multimodal stage runs first when enabled; the constrained stage runs
    only if the earlier stage rejected, failed validation twice, or is
    disabled. Every raw response becomes a provenance event.
    """
    stages = []
    if config.vlm_selection_enabled:
        stages.append(STAGE_MULTIMODAL)
    if config.llm_escalation_enabled:
        stages.append(STAGE_CONSTRAINED_LLM)
    if not stages:
        return EscalationOutcome(
            response=None,
            method=None,
            flagged_reason="escalation_disabled",
            rationale="escalation stages disabled by configuration",
            events=(),
            attempts_per_stage={},
        )

    events: list[ProvenanceEvent] = []
    attempts: dict[str, int] = {}
    last_rationale = ""
    for stage in stages:
        staged = replace(request, stage=stage)
        response: Optional[EscalationResponse] = None
        error: Optional[str] = None
        raw: Any = None
        for attempt in (1, 2):  # one retry on schema violation
            attempts[stage] = attempt
            try:
                if attempt == 1:
                    raw = client.complete(staged)
                else:
                    raw = client.complete(staged, validation_error=error, previous=raw)
            except (EscalationTransportError, ConnectionError, TimeoutError, OSError) as exc:
                events.append(
                    ProvenanceEvent.make(
                        stage=f"escalation:{stage}",
                        timestamp=timestamp,
                        actor="escalation_client",
                        payload={"error": f"transport: {exc}"},
                    )
                )
                return EscalationOutcome(
                    response=None,
                    method=None,
                    flagged_reason="escalation_transport_error",
                    rationale=str(exc),
                    events=tuple(events),
                    attempts_per_stage=attempts,
                )
            events.append(
                ProvenanceEvent.make(
                    stage=f"escalation:{stage}",
                    timestamp=timestamp,
                    actor="escalation_client",
                    payload={"attempt": attempt, "raw_response": _jsonable(raw)},
                )
            )
            try:
                response = validate_response(raw, staged)
                break
            except EscalationSchemaError as exc:
                error = str(exc)
                response = None
        if response is None:
            # Two schema violations: treated as a rejection for this stage.
            last_rationale = f"invalid response after retry: {error}"
            continue
        if response.decision == "map":
            return EscalationOutcome(
                response=response,
                method=STAGE_METHODS[stage],
                flagged_reason=None,
                rationale=response.rationale,
                events=tuple(events),
                attempts_per_stage=attempts,
            )
        last_rationale = response.rationale
    return EscalationOutcome(
        response=None,
        method=None,
        flagged_reason="escalation_rejected",
        rationale=last_rationale,
        events=tuple(events),
        attempts_per_stage=attempts,
    )


def _jsonable(raw: Any) -> Any:
    try:
        json.dumps(raw)
        return raw
    except (TypeError, ValueError):
        return repr(raw)


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------

class OracleClient:
    """Answers from a ground-truth link set; enables closed-loop tests."""

    def __init__(self, links: set[tuple[str, str]] | frozenset[tuple[str, str]]):
        self._links = frozenset(links)

    def complete(self, request: EscalationRequest, **_: Any) -> Any:
        eid = request.entity.id
        for cand in request.candidates:
            if (cand.feature_id, eid) in self._links:
                return {
                    "decision": "map",
                    "target_feature_id": cand.feature_id,
                    "confidence": 1.0,
                    "rationale": "oracle",
                }
        return {
            "decision": "reject",
            "target_feature_id": None,
            "confidence": 1.0,
            "rationale": "oracle",
        }


class FirstCandidateClient:
    """Always maps the top-ranked candidate (confidence fixed at 0.75)."""

    def complete(self, request: EscalationRequest, **_: Any) -> Any:
        return {
            "decision": "map",
            "target_feature_id": request.candidates[0].feature_id,
            "confidence": 0.75,
            "rationale": "first candidate policy",
        }


class AlwaysRejectClient:
    def complete(self, request: EscalationRequest, **_: Any) -> Any:
        return {
            "decision": "reject",
            "target_feature_id": None,
            "confidence": 1.0,
            "rationale": "policy",
        }


class ScriptedClient:
    """Replays recorded responses keyed by request digest.

    Requests with no recorded entry get a rejection with rationale
    "unscripted".
    """

    def __init__(self, path: str | Path):
        self._responses: dict[str, Any] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            self._responses[record["digest"]] = record["response"]

    def complete(self, request: EscalationRequest, **_: Any) -> Any:
        key = request.request_digest
        if key not in self._responses:
            return {
                "decision": "reject",
                "target_feature_id": None,
                "confidence": 1.0,
                "rationale": "unscripted",
            }
        return self._responses[key]


class HttpEscalationClient:
    """POSTs the wire-format request to a remote reasoning endpoint."""

    def __init__(self, endpoint: str, credential: str = "", timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.credential = credential
        self.timeout_s = timeout_s

    def complete(
        self,
        request: EscalationRequest,
        *,
        validation_error: Optional[str] = None,
        previous: Any = None,
    ) -> Any:
        payload = request.to_wire()
        if validation_error is not None:
            payload["validation_error"] = validation_error
            payload["previous_response"] = _jsonable(previous)
        body = canonical_json(payload).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint,
            data=body,
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {self.credential}"} if self.credential else {}),
            },
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise EscalationTransportError(str(exc)) from exc


def mock_client(policy: str, **kwargs: Any) -> Any:
    """Factory for the deterministic mock policies."""
    if policy == "oracle":
        return OracleClient(kwargs["links"])
    if policy == "first_candidate":
        return FirstCandidateClient()
    if policy == "always_reject":
        return AlwaysRejectClient()
    if policy == "scripted":
        return ScriptedClient(kwargs["path"])
    raise InputError(f"unknown escalation mock policy {policy!r}")
