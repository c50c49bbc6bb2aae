import random
from dataclasses import replace

from specfuse import (
    AlwaysRejectClient,
    DrawingEntity,
    EnrichedDescriptor,
    Feature3D,
    FirstCandidateClient,
    OracleClient,
    PipelineConfig,
    ScoredCandidate,
    build_candidate_sets,
    expand_pattern_groups,
    resolve,
)
from specfuse.escalate import EscalationTransportError


def _cand(fid, eid, s):
    return ScoredCandidate(
        feature_id=fid, entity_id=eid, s_type=1.0, s_dim=1.0, s_ctx=0.5,
        h_adjust=0.0, multiplicative_factors=(), s_final=s, trace=(),
    )


def _feature(fid, ftype="hole", params=None, pattern_id=None):
    return Feature3D(id=fid, feature_type=ftype, params=params or {"diameter": 5.0},
                     afr_confidence=0.9, pattern_id=pattern_id)


def _entity(eid, raw="Ø5"):
    return DrawingEntity(id=eid, entity_type="dimension", raw_text=raw)


def _desc(eid, multiplicity=1, value=5.0):
    return EnrichedDescriptor(
        entity_id=eid, normalized_type="diameter", numeric_value=value,
        target_category="hole", multiplicity=multiplicity,
        has_diameter_symbol=True, enrich_confidence=0.95,
    )


# --- candidate sets and near-ties ---------------------------------------------

def test_near_tie_cutoff_example(config):
    scored = [_cand("F1", "E1", 0.90), _cand("F1", "E2", 0.85), _cand("F1", "E3", 0.70)]
    sets, _ = build_candidate_sets(scored, config, ["F1"])
    assert [c.entity_id for c in sets[0].near_tie] == ["E1", "E2"]


def test_near_tie_excludes_below_cutoff(config):
    scored = [_cand("F1", "E1", 0.90), _cand("F1", "E2", 0.80)]
    sets, _ = build_candidate_sets(scored, config, ["F1"])
    assert [c.entity_id for c in sets[0].near_tie] == ["E1"]


def test_singleton_above_threshold(config):
    sets, _ = build_candidate_sets([_cand("F1", "E1", 0.50)], config, ["F1"])
    assert [c.entity_id for c in sets[0].near_tie] == ["E1"]


def test_theta_cand_filter_and_unconstrained(config):
    scored = [_cand("F1", "E1", 0.29), _cand("F2", "E1", 0.31)]
    sets, unconstrained = build_candidate_sets(scored, config, ["F1", "F2"])
    assert unconstrained == ["F1"]
    assert len(sets) == 1 and sets[0].feature_id == "F2"


def test_rank_ties_broken_lexicographically(config):
    scored = [_cand("F1", "E2", 0.9), _cand("F1", "E1", 0.9)]
    sets, _ = build_candidate_sets(scored, config, ["F1"])
    assert [c.entity_id for c in sets[0].ranked] == ["E1", "E2"]


def test_near_tie_closure_property(config):
    rng = random.Random(5)
    for _ in range(300):
        n = rng.randint(1, 8)
        scored = [_cand("F1", f"E{i}", round(rng.uniform(0.3, 1.2), 4)) for i in range(n)]
        sets, _ = build_candidate_sets(scored, config, ["F1"])
        got = {c.entity_id for c in sets[0].near_tie}
        best = max(c.s_final for c in scored)
        want = {c.entity_id for c in scored if c.s_final >= config.rho * best}
        assert got == want


# --- pattern expansion -----------------------------------------------------------

def test_pattern_expansion_to_all_members(config):
    features = [_feature(f"F{i}", pattern_id="P1") for i in range(4)]
    descs = {"E1": _desc("E1", multiplicity=4)}
    sets, _ = build_candidate_sets([_cand("F0", "E1", 1.09)], config, [f.id for f in features])
    sets, flags = expand_pattern_groups(sets, features, descs, config)
    assert not flags
    assert sorted(s.feature_id for s in sets) == ["F0", "F1", "F2", "F3"]
    assert all(s.best.s_final == 1.09 for s in sets)


def test_pattern_expansion_unsatisfied_flags(config):
    features = [_feature(f"F{i}", pattern_id="P1") for i in range(3)]
    descs = {"E1": _desc("E1", multiplicity=4)}
    sets, _ = build_candidate_sets([_cand("F0", "E1", 1.09)], config, [f.id for f in features])
    sets, flags = expand_pattern_groups(sets, features, descs, config)
    assert flags and flags[0][0] == "E1"
    assert len(sets) == 1  # no expansion happened


def test_pattern_expansion_multiplicity_one_noop(config):
    features = [_feature(f"F{i}", pattern_id="P1") for i in range(4)]
    descs = {"E1": _desc("E1", multiplicity=1)}
    sets, _ = build_candidate_sets([_cand("F0", "E1", 1.0)], config, [f.id for f in features])
    out, flags = expand_pattern_groups(sets, features, descs, config)
    assert out == sets and not flags


def test_pattern_expansion_by_param_similarity(config):
    # no pattern ids; similarity from shared routable params within epsilon
    features = [_feature(f"F{i}", params={"diameter": 5.0 + 0.01 * i}) for i in range(2)]
    descs = {"E1": _desc("E1", multiplicity=2)}
    sets, _ = build_candidate_sets([_cand("F0", "E1", 1.0)], config, ["F0", "F1"])
    sets, flags = expand_pattern_groups(sets, features, descs, config)
    assert not flags
    assert sorted(s.feature_id for s in sets) == ["F0", "F1"]


# --- resolution -------------------------------------------------------------------

def _resolve(sets, config, client, features=None, entities=None, descs=None):
    features = features or [_feature("F1"), _feature("F2")]
    entities = entities or [_entity("E1"), _entity("E2")]
    descs = descs or {e.id: _desc(e.id) for e in entities}
    return resolve(sets, features, entities, descs, config, client, timestamp="t0")


def test_singleton_deterministic_accept(config):
    sets, _ = build_candidate_sets([_cand("F1", "E1", 0.90)], config, ["F1"])
    mappings, flagged = _resolve(sets, config, None)
    assert len(mappings) == 1 and not flagged
    m = mappings[0]
    assert m.method == "deterministic"
    assert m.confidence == 0.90
    assert m.status == "accepted"


def test_confidence_clamped_to_one(config):
    sets, _ = build_candidate_sets([_cand("F1", "E1", 1.09)], config, ["F1"])
    mappings, _ = _resolve(sets, config, None)
    assert mappings[0].confidence == 1.0


def test_near_tie_pair_goes_to_vlm(config):
    scored = [_cand("F1", "E1", 0.95), _cand("F1", "E2", 0.93)]
    sets, _ = build_candidate_sets(scored, config, ["F1"])
    mappings, flagged = _resolve(sets, config, FirstCandidateClient())
    assert not flagged
    assert {m.entity_id for m in mappings} == {"E1", "E2"}
    assert all(m.method == "deterministic_vlm" for m in mappings)
    assert all(m.confidence == 0.75 for m in mappings)


def test_low_confidence_singleton_escalates(config):
    sets, _ = build_candidate_sets([_cand("F1", "E1", 0.50)], config, ["F1"])
    mappings, flagged = _resolve(sets, config, OracleClient({("F1", "E1")}))
    assert len(mappings) == 1 and not flagged
    assert mappings[0].method == "deterministic_vlm"
    assert mappings[0].confidence == 1.0


def test_rejection_flags_entity(config):
    scored = [_cand("F1", "E1", 0.95), _cand("F1", "E2", 0.93)]
    sets, _ = build_candidate_sets(scored, config, ["F1"])
    mappings, flagged = _resolve(sets, config, AlwaysRejectClient())
    assert not mappings
    assert sorted(f.entity_id for f in flagged) == ["E1", "E2"]
    assert all(f.reason == "escalation_rejected" for f in flagged)
    assert all(f.candidates for f in flagged)


def test_escalation_disabled_flags(config):
    cfg = replace(config, vlm_selection_enabled=False, llm_escalation_enabled=False)
    scored = [_cand("F1", "E1", 0.95), _cand("F1", "E2", 0.93)]
    sets, _ = build_candidate_sets(scored, cfg, ["F1"])
    mappings, flagged = _resolve(sets, cfg, OracleClient(set()))
    assert not mappings
    assert len(flagged) == 2


def test_transport_failure_flags_never_drops(config):
    class BrokenClient:
        def complete(self, request, **kw):
            raise EscalationTransportError("socket closed")

    scored = [_cand("F1", "E1", 0.95), _cand("F1", "E2", 0.93)]
    sets, _ = build_candidate_sets(scored, config, ["F1"])
    mappings, flagged = _resolve(sets, config, BrokenClient())
    assert not mappings
    assert {f.reason for f in flagged} == {"escalation_transport_error"}


def test_argmax_mode_accepts_top_only(config):
    cfg = replace(config, argmax_accept=True, vlm_selection_enabled=False,
                  llm_escalation_enabled=False, heuristics_enabled=False)
    scored = [_cand("F1", "E1", 0.95), _cand("F1", "E2", 0.93)]
    sets, _ = build_candidate_sets(scored, cfg, ["F1"])
    mappings, flagged = _resolve(sets, cfg, None)
    assert len(mappings) == 1 and not flagged
    assert mappings[0].entity_id == "E1"


def test_one_to_many_both_directions(config):
    # one entity accepted by two features, one feature accepting two entities
    scored = [
        _cand("F1", "E1", 0.95), _cand("F2", "E1", 0.95),
        _cand("F3", "E2", 0.95), _cand("F3", "E3", 0.94),
    ]
    sets, _ = build_candidate_sets(scored, config, ["F1", "F2", "F3"])
    client = OracleClient({("F1", "E1"), ("F2", "E1"), ("F3", "E2"), ("F3", "E3")})
    features = [_feature(f) for f in ("F1", "F2", "F3")]
    entities = [_entity(e) for e in ("E1", "E2", "E3")]
    descs = {e.id: _desc(e.id) for e in entities}
    mappings, flagged = resolve(sets, features, entities, descs, config, client,
                                timestamp="t0")
    pairs = {(m.feature_id, m.entity_id) for m in mappings}
    assert ("F1", "E1") in pairs and ("F2", "E1") in pairs
    assert ("F3", "E2") in pairs and ("F3", "E3") in pairs


def test_deterministic_path_reproducible(config):
    cfg = replace(config, vlm_selection_enabled=False, llm_escalation_enabled=False)
    scored = [_cand("F1", "E1", 0.9), _cand("F2", "E2", 0.7), _cand("F2", "E3", 0.69)]
    sets, _ = build_candidate_sets(scored, cfg, ["F1", "F2"])
    features = [_feature(f) for f in ("F1", "F2")]
    entities = [_entity(e) for e in ("E1", "E2", "E3")]
    descs = {e.id: _desc(e.id) for e in entities}
    a = resolve(sets, features, entities, descs, cfg, None, timestamp="t0")
    b = resolve(sets, features, entities, descs, cfg, None, timestamp="t0")
    assert a == b


def test_no_accepted_mapping_below_theta_cand(config):
    rng = random.Random(3)
    for _ in range(100):
        scored = [_cand("F1", f"E{i}", round(rng.uniform(0.0, 1.1), 3)) for i in range(5)]
        sets, _ = build_candidate_sets(scored, config, ["F1"])
        entities = [_entity(f"E{i}") for i in range(5)]
        descs = {e.id: _desc(e.id) for e in entities}
        mappings, _ = resolve(sets, [_feature("F1")], entities, descs, config,
                              FirstCandidateClient(), timestamp="t0")
        by_id = {c.entity_id: c.s_final for c in scored}
        for m in mappings:
            if m.method == "deterministic":
                assert by_id[m.entity_id] >= config.theta_cand
