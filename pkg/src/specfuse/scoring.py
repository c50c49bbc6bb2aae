"""Composite correspondence scoring for (feature, entity) pairs.

Computes the type gate, tolerance-stepped dimensional agreement with
semantic routing, conservative context consistency, and the engineering
heuristics, then combines them into the final ranking score with a full
per-step trace. Pure functions throughout; identical inputs give
bit-identical candidates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .model import (
    EnrichedDescriptor,
    Feature3D,
    InputError,
    KNOWN_FEATURE_TYPES,
    PipelineConfig,
    ScoredCandidate,
)

S_TYPE_EXACT = 1.0
S_TYPE_SEMANTIC = 0.9
DIM_MISMATCH_FACTOR = 0.3
DIAMETER_SYMBOL_BONUS = 0.1
MISSING_DIAMETER_SYMBOL_FACTOR = 0.7
GDT_PRIOR_BONUS = 0.1
HEURISTIC_CAP = 0.2  # keeps heuristics below one weight unit

HOLE_GROUP = frozenset({"hole", "bore", "drill"})
POCKET_GROUP = frozenset({"slot", "pocket", "groove"})
FILLET_GROUP = frozenset({"fillet", "round", "radius"})

CYLINDRICAL_TYPES = frozenset({"hole", "bore", "drill", "cylinder", "boss", "thread_hole"})
PLANAR_TYPES = frozenset({"plane"})

ROUTABLE_PARAMS = ("diameter", "radius", "depth", "width", "length", "angle")

# When enrichment could not infer a target category, gate by the group of an
# anchor type instead. "any" passes every known feature type at the semantic
# level; unknown descriptors stay hard-gated.
_ANY = "any"
FALLBACK_ANCHORS: dict[str, str] = {
    "diameter": "hole",
    "thread": "hole",
    "countersink": "hole",
    "counterbore": "hole",
    "radius": "fillet",
    "linear": _ANY,
    "depth": _ANY,
    "angle": _ANY,
    "gdt_position": _ANY,
    "gdt_profile": _ANY,
    "gdt_runout": _ANY,
    "gdt_flatness": _ANY,
    "datum_ref": _ANY,
    "roughness": _ANY,
}


@dataclass(frozen=True)
class CompatibilityTable:
    """Type gate tables: exact pairs plus semantic equivalence groups."""

    omega_exact: frozenset[tuple[str, str]]
    omega_semantic: tuple[frozenset[str], ...]

    @classmethod
    def default(cls) -> "CompatibilityTable":
        exact = frozenset((t, t) for t in KNOWN_FEATURE_TYPES)
        return cls(
            omega_exact=exact,
            omega_semantic=(HOLE_GROUP, POCKET_GROUP, FILLET_GROUP),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "CompatibilityTable":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            exact = frozenset((str(a), str(b)) for a, b in doc["omega_exact"])
            groups = tuple(frozenset(str(t) for t in group) for group in doc["omega_semantic"])
        except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise InputError(f"bad compatibility table: {exc}") from exc
        return cls(omega_exact=exact, omega_semantic=groups)

    def group_of(self, t: str) -> Optional[frozenset[str]]:
        for group in self.omega_semantic:
            if t in group:
                return group
        return None

    def same_group(self, a: str, b: str) -> bool:
        for group in self.omega_semantic:
            if a in group and b in group:
                return True
        return False


def score_type(
    feature: Feature3D, desc: EnrichedDescriptor, table: CompatibilityTable
) -> float:
    """Type gate: 1.0 exact, 0.9 same semantic group, 0 otherwise.

    Exact lookup takes precedence over groups. Descriptors without a target
    category fall back to normalized-type defaults at the semantic level;
    unknown descriptors and unknown feature labels gate to 0 unless a custom
    table lists them.
    """
    ft = feature.feature_type
    tc = desc.target_category
    if tc:
        if (ft, tc) in table.omega_exact:
            return S_TYPE_EXACT
        if table.same_group(ft, tc):
            return S_TYPE_SEMANTIC
        return 0.0
    anchor = FALLBACK_ANCHORS.get(desc.normalized_type)
    if anchor is None:
        return 0.0
    if anchor == _ANY:
        # Unknown "other" labels still gate unless a custom table lists them.
        if ft in KNOWN_FEATURE_TYPES or (ft, ft) in table.omega_exact:
            return S_TYPE_SEMANTIC
        return 0.0
    group = table.group_of(anchor) or frozenset({anchor})
    return S_TYPE_SEMANTIC if ft in group else 0.0


def route_dimension(
    desc: EnrichedDescriptor, feature: Feature3D
) -> Optional[tuple[float, float]]:
    """Pick the geometrically appropriate 3D parameter for a 2D value.

    Diameters and threads compare only against the feature diameter, radii
    against the radius (or half the diameter), depths against depth, linear
    dimensions against the better of width/length. Returns None when the
    feature has no routable parameter for this kind.
    """
    v = desc.numeric_value
    if v is None:
        return None
    p = feature.params
    kind = desc.normalized_type
    if kind in ("diameter", "thread", "countersink", "counterbore"):
        x = p.get("diameter")
    elif kind == "radius":
        if "radius" in p:
            x = p["radius"]
        elif "diameter" in p:
            x = p["diameter"] / 2.0
        else:
            x = None
    elif kind == "depth":
        x = p.get("depth")
    elif kind == "angle":
        x = p.get("angle")
    elif kind == "linear":
        options = [p[k] for k in ("width", "length") if k in p]
        x = min(options, key=lambda o: abs(v - o)) if options else None
    else:
        return None
    return None if x is None else (v, x)


def route_any_param(
    desc: EnrichedDescriptor, feature: Feature3D
) -> Optional[tuple[float, float]]:
    """Routing-disabled comparison: best agreement over every scalar param."""
    v = desc.numeric_value
    if v is None or not feature.params:
        return None
    x = min(feature.params.values(), key=lambda o: abs(v - o))
    return (v, x)


def score_dim(
    pair: Optional[tuple[float, float]],
    epsilon: float,
    *,
    has_numeric_value: bool = True,
) -> tuple[float, bool]:
    """Stepped tolerance score plus the numeric-mismatch flag.

    1.0 within epsilon, 0.7 within 2*epsilon, else 0 with the mismatch flag
    set. An absent pair with a numeric 2D value is also a mismatch; with no
    numeric value it contributes nothing and raises no flag.
    """
    if pair is None:
        return 0.0, bool(has_numeric_value)
    delta = abs(pair[0] - pair[1])
    if delta <= epsilon:
        return 1.0, False
    if delta <= 2.0 * epsilon:
        return 0.7, False
    return 0.0, True


def score_context(
    desc: EnrichedDescriptor, spatial_cues_available: Optional[bool] = None
) -> float:
    """Neutral 0.5 without spatial cues, else the enrichment confidence."""
    cues = desc.has_spatial_context if spatial_cues_available is None else spatial_cues_available
    return desc.enrich_confidence if cues else 0.5


@dataclass(frozen=True)
class HeuristicAdjustment:
    h_adjust: float
    factors: tuple[tuple[str, float], ...]
    force_type_zero: bool
    notes: tuple[str, ...]


NO_HEURISTICS = HeuristicAdjustment(0.0, (), False, ())


def apply_heuristics(feature: Feature3D, desc: EnrichedDescriptor) -> HeuristicAdjustment:
    """Engineering-domain refinements applied inside deterministic scoring.

    Diameter-symbol preference for hole features (additive bonus, or a
    multiplicative penalty for symbol-less diameter dimensions), thread
    restriction to cylindrical features, and soft GD&T attachment priors.
    Additive contributions cap at +0.2.
    """
    h = 0.0
    factors: list[tuple[str, float]] = []
    notes: list[str] = []
    force_zero = False
    ft = feature.feature_type
    kind = desc.normalized_type
    in_hole_group = ft in HOLE_GROUP

    if desc.has_diameter_symbol and in_hole_group:
        h += DIAMETER_SYMBOL_BONUS
        notes.append(f"diameter symbol on hole-group feature: h +{DIAMETER_SYMBOL_BONUS}")
    if kind == "diameter" and not desc.has_diameter_symbol and in_hole_group:
        factors.append(("missing_diameter_symbol", MISSING_DIAMETER_SYMBOL_FACTOR))
        notes.append(
            f"diameter dimension without symbol: factor x{MISSING_DIAMETER_SYMBOL_FACTOR}"
        )
    if kind == "thread" and ft not in CYLINDRICAL_TYPES:
        force_zero = True
        notes.append("thread callout restricted to cylindrical features: s_type forced 0")
    if kind in ("gdt_position", "gdt_profile") and (in_hole_group or ft == "pocket"):
        h += GDT_PRIOR_BONUS
        notes.append(f"position/profile prior on hole/pocket: h +{GDT_PRIOR_BONUS}")
    if kind == "gdt_runout" and ft in CYLINDRICAL_TYPES:
        h += GDT_PRIOR_BONUS
        notes.append(f"runout prior on cylindrical feature: h +{GDT_PRIOR_BONUS}")
    if kind == "datum_ref" and ft in (PLANAR_TYPES | CYLINDRICAL_TYPES):
        h += GDT_PRIOR_BONUS
        notes.append(f"datum prior on planar/cylindrical feature: h +{GDT_PRIOR_BONUS}")

    if h > HEURISTIC_CAP:
        notes.append(f"h capped at +{HEURISTIC_CAP}")
        h = HEURISTIC_CAP
    return HeuristicAdjustment(h, tuple(factors), force_zero, tuple(notes))


def score_pair(
    feature: Feature3D,
    desc: EnrichedDescriptor,
    config: PipelineConfig,
    table: Optional[CompatibilityTable] = None,
) -> ScoredCandidate:
    """Full composite score for one (feature, entity) pair, with trace.

    The type gate short-circuits to 0. Otherwise the weighted sum of the
    three components plus the heuristic term is multiplied by the canonical
    factor chain (dimensional mismatch 0.3 first, then the diameter-symbol
    penalty 0.7). The result is unnormalized and used for ranking only.
    """
    table = table or CompatibilityTable.default()
    trace: list[str] = []

    s_type = score_type(feature, desc, table)
    trace.append(
        f"s_type={s_type} ({feature.feature_type} vs "
        f"{desc.target_category or desc.normalized_type + ' fallback'})"
    )

    heur = apply_heuristics(feature, desc) if config.heuristics_enabled else NO_HEURISTICS
    if heur.force_type_zero:
        s_type = 0.0
    trace.extend(heur.notes)

    if s_type == 0.0:
        trace.append("type gate: s_final=0")
        return ScoredCandidate(
            feature_id=feature.id,
            entity_id=desc.entity_id,
            s_type=0.0,
            s_dim=0.0,
            s_ctx=0.0,
            h_adjust=0.0,
            multiplicative_factors=(),
            s_final=0.0,
            trace=tuple(trace),
        )

    router = route_dimension if config.routing_enabled else route_any_param
    pair = router(desc, feature)
    s_dim, mismatch = score_dim(
        pair, config.epsilon_mm, has_numeric_value=desc.numeric_value is not None
    )
    if pair is not None:
        trace.append(f"s_dim={s_dim} (2D {pair[0]} vs 3D {pair[1]})")
    elif desc.numeric_value is not None:
        trace.append("s_dim=0 (no routable parameter, numeric mismatch)")
    else:
        trace.append("s_dim=0 (no numeric value, no penalty)")

    s_ctx = score_context(desc)
    trace.append(f"s_ctx={s_ctx} ({'cues' if desc.has_spatial_context else 'no cues'})")

    factors: list[tuple[str, float]] = []
    if mismatch:
        factors.append(("dimensional_mismatch", DIM_MISMATCH_FACTOR))
    factors.extend(heur.factors)

    ctx_term = config.w_c * s_ctx if config.context_enabled else 0.0
    if not config.context_enabled:
        trace.append("context term zeroed (ablation)")
    s_final = config.w_t * s_type + config.w_d * s_dim + ctx_term + heur.h_adjust
    trace.append(
        f"base = {config.w_t}*{s_type} + {config.w_d}*{s_dim} + "
        f"{'0' if not config.context_enabled else config.w_c}*{s_ctx} + {heur.h_adjust} "
        f"= {s_final}"
    )
    for label, factor in factors:
        s_final *= factor
        trace.append(f"x {factor} ({label}) -> {s_final}")

    return ScoredCandidate(
        feature_id=feature.id,
        entity_id=desc.entity_id,
        s_type=s_type,
        s_dim=s_dim,
        s_ctx=s_ctx,
        h_adjust=heur.h_adjust,
        multiplicative_factors=tuple(factors),
        s_final=s_final,
        trace=tuple(trace),
    )


def replay_score(candidate: ScoredCandidate, config: PipelineConfig) -> float:
    """Recompute s_final from the candidate's recorded components.

    Mirrors score_pair's arithmetic exactly (same operation order), so the
    result must match the stored s_final bit-for-bit.
    """
    if candidate.s_type == 0.0:
        return 0.0
    ctx_term = config.w_c * candidate.s_ctx if config.context_enabled else 0.0
    s = (
        config.w_t * candidate.s_type
        + config.w_d * candidate.s_dim
        + ctx_term
        + candidate.h_adjust
    )
    for _, factor in candidate.multiplicative_factors:
        s *= factor
    return s
