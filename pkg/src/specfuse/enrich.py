"""Callout enrichment: raw drawing text to normalized semantic descriptors.

The rule-based grammar is the default backend so the whole pipeline runs
offline and deterministically. An external VLM backend and a replay backend
(recorded responses) are drop-in replacements behind the same interface.
"""

from __future__ import annotations

import json
import re
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Protocol

from .model import (
    DrawingEntity,
    EnrichedDescriptor,
    InputError,
    MM_PER_INCH,
    NORMALIZED_TYPES,
    canonical_json,
    digest,
)

# Confidence emitted by the rule-based backend, keyed by match quality.
RULE_CONFIDENCE = {"exact": 0.95, "partial": 0.7, "none": 0.3}

# Inferred target feature category per normalized type; None means no default.
DEFAULT_TARGETS = {
    "diameter": "hole",
    "thread": "hole",
    "countersink": "hole",
    "counterbore": "hole",
    "radius": "fillet",
}

_NUM = r"(\d+(?:\.\d+)?)"
_TOL = r"(?:\s*(?:±|\+/-)\s*(\d+(?:\.\d+)?))?"

_MULTIPLICITY_RE = re.compile(r"^\s*(\d+)\s*[xX]\s+")
_DIAMETER_RE = re.compile(rf"^(?:Ø|⌀|%%[cC]|DIA\b)\s*{_NUM}{_TOL}", re.IGNORECASE)
_RADIUS_RE = re.compile(rf"^R\s*{_NUM}{_TOL}")
_THREAD_RE = re.compile(rf"^M\s*{_NUM}(?:\s*[xX]\s*{_NUM})?")
_DEPTH_PREFIX_RE = re.compile(rf"^(?:↧|DEPTH\b)\s*{_NUM}{_TOL}", re.IGNORECASE)
_DEPTH_SUFFIX_RE = re.compile(rf"^{_NUM}\s*(?:DEEP\b|↧)", re.IGNORECASE)
_ANGLE_RE = re.compile(rf"^{_NUM}\s*(?:°|DEG\b)", re.IGNORECASE)
_CBORE_RE = re.compile(rf"^(?:⌴|C'?BORE\b)\s*(?:Ø|⌀)?\s*{_NUM}", re.IGNORECASE)
_CSINK_RE = re.compile(rf"^(?:⌵|C'?SINK\b|CSK\b)\s*(?:Ø|⌀)?\s*{_NUM}", re.IGNORECASE)
_ROUGHNESS_RE = re.compile(rf"^Ra\s*{_NUM}", re.IGNORECASE)
_BARE_RE = re.compile(rf"^{_NUM}{_TOL}$")
_DATUM_RE = re.compile(r"^(?:\[\s*([A-Z])\s*\]|-\s*([A-Z])\s*-|([A-Z]))$")

# GD&T frame leads: symbol or spelled-out token, e.g. "⌖|Ø0.1|A|B".
_GDT_TOKENS = {
    "⌖": "gdt_position",
    "⌓": "gdt_profile",
    "⏥": "gdt_flatness",
    "↗": "gdt_runout",
    "POS": "gdt_position",
    "POSITION": "gdt_position",
    "PROFILE": "gdt_profile",
    "FLATNESS": "gdt_flatness",
    "FLAT": "gdt_flatness",
    "RUNOUT": "gdt_runout",
}
_GDT_RE = re.compile(
    r"^(⌖|⌓|⏥|↗|POSITION|POS|PROFILE|FLATNESS|FLAT|RUNOUT)\s*[|]?", re.IGNORECASE
)


@dataclass(frozen=True)
class ParsedCallout:
    """Structured result of running the grammar over one callout string."""

    kind: str = "unknown"  # a normalized_type value
    value: Optional[float] = None
    tolerance: Optional[float] = None
    multiplicity: int = 1
    pitch: Optional[float] = None
    depth_modifier: Optional[float] = None
    zone_width: Optional[float] = None
    datum_refs: tuple[str, ...] = ()
    has_diameter_symbol: bool = False
    match_quality: str = "none"  # exact | partial | none


def parse_callout_grammar(text: str) -> ParsedCallout:
    """Deterministic parse of a drawing callout string.

    Recognizes, in order: an optional nX multiplicity prefix, diameter
    (Ø/⌀/%%c/DIA), radius (R), metric threads M<d>[x<pitch>], depth
    (↧ / DEEP / DEPTH), counterbore/countersink, angles, GD&T frame tokens,
    boxed datum letters, roughness (Ra), and bare numerics with an optional
    ± tolerance. Unrecognized input yields kind="unknown", never an error.
    """
    rest = text.strip()
    multiplicity = 1
    m = _MULTIPLICITY_RE.match(rest)
    if m:
        multiplicity = max(1, int(m.group(1)))
        rest = rest[m.end():].strip()
    if not rest:
        return ParsedCallout(multiplicity=multiplicity)

    m = _DIAMETER_RE.match(rest)
    if m:
        depth_mod = _trailing_depth(rest[m.end():])
        return ParsedCallout(
            kind="diameter",
            value=float(m.group(1)),
            tolerance=float(m.group(2)) if m.group(2) else None,
            multiplicity=multiplicity,
            depth_modifier=depth_mod,
            has_diameter_symbol=True,
            match_quality="exact",
        )

    m = _THREAD_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="thread",
            value=float(m.group(1)),
            pitch=float(m.group(2)) if m.group(2) else None,
            multiplicity=multiplicity,
            match_quality="exact",
        )

    m = _RADIUS_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="radius",
            value=float(m.group(1)),
            tolerance=float(m.group(2)) if m.group(2) else None,
            multiplicity=multiplicity,
            match_quality="exact",
        )

    m = _DEPTH_PREFIX_RE.match(rest) or _DEPTH_SUFFIX_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="depth",
            value=float(m.group(1)),
            multiplicity=multiplicity,
            match_quality="exact",
        )

    m = _CBORE_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="counterbore",
            value=float(m.group(1)),
            multiplicity=multiplicity,
            has_diameter_symbol="Ø" in rest or "⌀" in rest,
            match_quality="exact",
        )

    m = _CSINK_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="countersink",
            value=float(m.group(1)),
            multiplicity=multiplicity,
            has_diameter_symbol="Ø" in rest or "⌀" in rest,
            match_quality="exact",
        )

    m = _ANGLE_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="angle",
            value=float(m.group(1)),
            multiplicity=multiplicity,
            match_quality="exact",
        )

    m = _GDT_RE.match(rest)
    if m:
        kind = _GDT_TOKENS[m.group(1).upper() if m.group(1).isascii() else m.group(1)]
        zone = None
        zm = re.search(rf"(?:Ø|⌀)?\s*{_NUM}", rest[m.end():])
        if zm:
            zone = float(zm.group(1))
        datums = tuple(re.findall(r"\|\s*([A-Z])\b", rest))
        return ParsedCallout(
            kind=kind,
            zone_width=zone,
            datum_refs=datums,
            multiplicity=multiplicity,
            match_quality="exact",
        )

    m = _ROUGHNESS_RE.match(rest)
    if m:
        return ParsedCallout(
            kind="roughness",
            value=float(m.group(1)),
            multiplicity=multiplicity,
            match_quality="exact",
        )

    m = _DATUM_RE.match(rest)
    if m:
        letter = next(g for g in m.groups() if g)
        boxed = rest != letter
        return ParsedCallout(
            kind="datum_ref",
            datum_refs=(letter,),
            multiplicity=multiplicity,
            match_quality="exact" if boxed else "partial",
        )

    m = _BARE_RE.match(rest)
    if m:
        # A tolerance suffix marks a deliberate dimension; a completely bare
        # numeral is only a partial match since its kind is assumed.
        return ParsedCallout(
            kind="linear",
            value=float(m.group(1)),
            tolerance=float(m.group(2)) if m.group(2) else None,
            multiplicity=multiplicity,
            match_quality="exact" if m.group(2) else "partial",
        )

    return ParsedCallout(multiplicity=multiplicity)


def _trailing_depth(tail: str) -> Optional[float]:
    # Compound callouts like "Ø5 ↧12" carry the depth as a modifier.
    m = re.search(rf"(?:↧|DEPTH\b)\s*{_NUM}|{_NUM}\s*DEEP\b", tail, re.IGNORECASE)
    if not m:
        return None
    return float(m.group(1) or m.group(2))


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class RuleBasedEnricher:
    """Pure-function enrichment from the callout grammar plus upstream hints."""

    kind = "rule_based"

    def enrich(self, entity: DrawingEntity) -> tuple[EnrichedDescriptor, dict[str, Any]]:
        parsed = parse_callout_grammar(entity.raw_text)
        sv = entity.semantic_values

        kind = parsed.kind
        quality = parsed.match_quality
        # Upstream extraction may already know the dimension kind; honor it
        # when the grammar could not commit to one.
        hint_kind = sv.get("dim_kind")
        if kind in ("linear", "unknown") and hint_kind in NORMALIZED_TYPES:
            kind = str(hint_kind)
            quality = "partial" if quality != "none" else quality
        if kind == "unknown" and entity.entity_type == "datum":
            kind = "datum_ref"
            quality = "partial"

        value = parsed.value
        if value is None and isinstance(sv.get("value"), (int, float)):
            value = float(sv["value"])
            if quality == "none":
                quality = "partial"
        unit = str(sv.get("unit", "mm")).lower() or "mm"
        if value is not None and unit in ("in", "inch", "inches"):
            value = value * MM_PER_INCH
            unit = "mm"

        # GD&T zone widths are not feature dimensions; keep them out of the
        # numeric slot so they never trip the dimensional mismatch gate.
        if kind.startswith("gdt_") or kind in ("datum_ref", "roughness", "unknown"):
            value = None
        if kind == "thread" and value is None:
            kind = "unknown"
            quality = "none"

        target = sv.get("target")
        if not (isinstance(target, str) and target):
            target = DEFAULT_TARGETS.get(kind)

        descriptor = EnrichedDescriptor(
            entity_id=entity.id,
            normalized_type=kind if kind in NORMALIZED_TYPES else "unknown",
            numeric_value=value,
            unit=unit if value is not None else "mm",
            target_category=target,
            multiplicity=parsed.multiplicity,
            has_diameter_symbol=parsed.has_diameter_symbol,
            enrich_confidence=RULE_CONFIDENCE[quality if kind != "unknown" else "none"],
            has_spatial_context=entity.has_spatial_cues,
        )
        return descriptor, {"backend": self.kind, "match_quality": quality}


def enrichment_request(entity: DrawingEntity) -> dict[str, Any]:
    """Wire request for external enrichment backends."""
    ctx = entity.context
    return {
        "raw_text": entity.raw_text,
        "bbox": list(ctx.bbox) if ctx and ctx.bbox else None,
        "region_ref": ctx.region_ref if ctx else None,
    }


def _descriptor_from_response(entity: DrawingEntity, payload: Mapping[str, Any]) -> EnrichedDescriptor:
    data = dict(payload)
    data.setdefault("entity_id", entity.id)
    data.setdefault("has_spatial_context", entity.has_spatial_cues)
    return EnrichedDescriptor.from_dict(data)


class ReplayEnricher:
    """Replays recorded responses keyed by request digest (bit-stable)."""

    kind = "replay"

    def __init__(self, path: str | Path):
        self._responses: dict[str, Mapping[str, Any]] = {}
        self._fallback = RuleBasedEnricher()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            self._responses[record["digest"]] = record["response"]

    def enrich(self, entity: DrawingEntity) -> tuple[EnrichedDescriptor, dict[str, Any]]:
        key = digest(enrichment_request(entity))
        payload = self._responses.get(key)
        if payload is None:
            desc, meta = self._fallback.enrich(entity)
            meta = dict(meta, backend=self.kind, note="no recorded response, rule_based fallback")
            return desc, meta
        return _descriptor_from_response(entity, payload), {"backend": self.kind}


class ExternalVlmEnricher:
    """POSTs the wire request to a remote enrichment endpoint.

    Any transport or schema failure falls back to the rule-based result with
    a note, so enrichment never fails a run.
    """

    kind = "external_vlm"

    def __init__(
        self,
        endpoint: str,
        credential: str = "",
        timeout_s: float = 10.0,
        transport: Optional[Callable[[dict[str, Any]], Mapping[str, Any]]] = None,
    ):
        self.endpoint = endpoint
        self.credential = credential
        self.timeout_s = timeout_s
        self._transport = transport or self._http_post

    def _http_post(self, request: dict[str, Any]) -> Mapping[str, Any]:
        body = canonical_json(request).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint,
            data=body,
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {self.credential}"} if self.credential else {}),
            },
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def enrich(self, entity: DrawingEntity) -> tuple[EnrichedDescriptor, dict[str, Any]]:
        request = enrichment_request(entity)
        try:
            payload = self._transport(request)
            return _descriptor_from_response(entity, payload), {"backend": self.kind}
        except Exception as exc:  # timeout, transport, schema: degrade, never fail
            desc, meta = RuleBasedEnricher().enrich(entity)
            meta = dict(meta, backend=self.kind, note=f"fallback to rule_based: {exc}")
            return desc, meta


class EnricherBackend(Protocol):
    kind: str

    def enrich(self, entity: DrawingEntity) -> tuple[EnrichedDescriptor, dict[str, Any]]: ...


def enrich(entity: DrawingEntity, backend: Optional[EnricherBackend] = None) -> EnrichedDescriptor:
    """Enrich one entity. Defaults to the rule-based backend."""
    backend = backend or RuleBasedEnricher()
    descriptor, _ = backend.enrich(entity)
    return descriptor


def make_enricher(kind: str, **kwargs: Any) -> Any:
    if kind == "rule_based":
        return RuleBasedEnricher()
    if kind == "replay":
        return ReplayEnricher(kwargs["path"])
    if kind == "external_vlm":
        return ExternalVlmEnricher(**kwargs)
    raise InputError(f"unknown enricher backend {kind!r}")
