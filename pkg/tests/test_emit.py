import pytest
from dataclasses import replace

from specfuse import (
    FlaggedItem,
    MappingRecord,
    PipelineConfig,
    ProvenanceEvent,
    ScoredCandidate,
    apply_review_decisions,
    emit_proposed_spec,
    fixture_inputs,
    run_mapping,
)
from specfuse.emit import FixedClock, ReviewDecision, ReviewError
from specfuse.escalate import OracleClient
from specfuse.fixtures import fixture_truth


def _record(fid="F1", eid="E1", status="accepted", method="deterministic"):
    return MappingRecord(
        feature_id=fid, entity_id=eid, method=method, confidence=0.9,
        rationale="r", status=status,
        provenance=(ProvenanceEvent.make("deterministic_scoring", "t0", "scoring_engine"),),
    )


def _cand(fid, eid="E1", s=0.7):
    return ScoredCandidate(feature_id=fid, entity_id=eid, s_type=1.0, s_dim=1.0,
                           s_ctx=0.5, h_adjust=0.0, multiplicative_factors=(),
                           s_final=s, trace=("step",))


def _fixture_spec(flagged=True):
    part = fixture_inputs()
    if flagged:
        cfg = replace(PipelineConfig(), vlm_selection_enabled=False,
                      llm_escalation_enabled=False)
        client = None
    else:
        cfg = PipelineConfig()
        client = OracleClient(fixture_truth().links)
    return run_mapping(part, cfg, escalation_client=client, clock=FixedClock()).spec


# --- emission ---------------------------------------------------------------------

def test_fixture_fully_resolved_spec():
    spec = _fixture_spec(flagged=False)
    assert len(spec.active_mappings) == 4
    assert not spec.unmapped_entities
    assert not spec.flagged
    assert not spec.unconstrained_features
    assert spec.approval is None
    assert spec.config_snapshot == PipelineConfig()


def test_rejected_entity_listed_unmapped(config):
    part = fixture_inputs()
    flag = FlaggedItem(entity_id="E3", reason="escalation_rejected",
                       candidates=(_cand("F3", "E3"),), rationale="no evidence")
    mappings = [_record("F1", "E1"), _record("F2", "E2"), _record("F4", "E4")]
    spec = emit_proposed_spec("FIG3", mappings, [flag], part.entities, part.features, config)
    assert ("E3", "flagged: escalation_rejected") in spec.unmapped_entities
    assert spec.unconstrained_features == ("F3",)


def test_empty_entity_set_all_features_unconstrained(config):
    part = fixture_inputs()
    spec = emit_proposed_spec("FIG3", [], [], [], part.features, config)
    assert spec.unconstrained_features == ("F1", "F2", "F3", "F4")
    assert not spec.mappings


def test_reemission_is_identical(config):
    part = fixture_inputs()
    mappings = [_record("F1", "E1")]
    kw = dict(unmapped_reasons={e.id: "nope" for e in part.entities})
    a = emit_proposed_spec("FIG3", mappings, [], part.entities, part.features, config, **kw)
    b = emit_proposed_spec("FIG3", mappings, [], part.entities, part.features, config, **kw)
    assert a.to_json() == b.to_json()


# --- review decisions ---------------------------------------------------------------

def test_edit_mapping_becomes_human(config):
    spec = _fixture_spec(flagged=False)
    out = apply_review_decisions(
        spec,
        [ReviewDecision(action="edit", reviewer="rev", target_id="F3::E3",
                        feature_id="F2", rationale="actually the hole")],
        FixedClock(),
    )
    edited = out.mapping_by_id("F2::E3")
    assert edited is not None
    assert edited.method == "human"
    assert edited.status == "human_edited"
    assert any(ev.actor == "human" for ev in edited.provenance)
    # the edited-away feature is unconstrained again
    assert "F3" in out.unconstrained_features


def test_reject_moves_entity_to_unmapped(config):
    spec = _fixture_spec(flagged=False)
    out = apply_review_decisions(
        spec,
        [ReviewDecision(action="reject", reviewer="rev", target_id="F1::E1",
                        rationale="wrong view")],
        FixedClock(),
    )
    assert out.mapping_by_id("F1::E1").status == "rejected"
    assert ("E1", "wrong view") in out.unmapped_entities
    assert "F1" in out.unconstrained_features


def test_approve_refused_while_flagged():
    spec = _fixture_spec(flagged=True)
    assert spec.flagged
    with pytest.raises(ReviewError):
        apply_review_decisions(
            spec, [ReviewDecision(action="approve", reviewer="rev")], FixedClock()
        )


def test_accept_all_then_approve():
    spec = _fixture_spec(flagged=True)
    decisions = [
        ReviewDecision(action="accept", reviewer="rev", target_id=f.flag_id,
                       feature_id=f.candidates[0].feature_id)
        for f in spec.flagged
    ]
    decisions.append(ReviewDecision(action="approve", reviewer="rev"))
    out = apply_review_decisions(spec, decisions, FixedClock())
    assert out.approval == ("rev", FixedClock().iso)
    assert not out.flagged
    out.check_exhaustive(e.id for e in fixture_inputs().entities)


def test_flag_accept_requires_candidate_feature():
    spec = _fixture_spec(flagged=True)
    flag = spec.flagged[0]
    with pytest.raises(ReviewError):
        apply_review_decisions(
            spec,
            [ReviewDecision(action="accept", reviewer="rev", target_id=flag.flag_id,
                            feature_id="F9")],
            FixedClock(),
        )


def test_unknown_mapping_id_rejected():
    spec = _fixture_spec(flagged=False)
    with pytest.raises(ReviewError):
        apply_review_decisions(
            spec, [ReviewDecision(action="accept", reviewer="rev", target_id="F9::E9")],
            FixedClock(),
        )


def test_decisions_on_approved_spec_refused():
    spec = _fixture_spec(flagged=False)
    approved = apply_review_decisions(
        spec, [ReviewDecision(action="approve", reviewer="rev")], FixedClock()
    )
    with pytest.raises(ReviewError):
        apply_review_decisions(
            approved, [ReviewDecision(action="reject", reviewer="rev", target_id="F1::E1")],
            FixedClock(),
        )


def test_provenance_append_only_and_revision_bumps():
    spec = _fixture_spec(flagged=False)
    before = {m.record_id: len(m.provenance) for m in spec.mappings}
    out = apply_review_decisions(
        spec, [ReviewDecision(action="accept", reviewer="rev", target_id="F1::E1")],
        FixedClock(),
    )
    assert out.revision == spec.revision + 1
    assert len(out.review_log) == len(spec.review_log) + 1
    for m in out.mappings:
        assert len(m.provenance) >= before[m.record_id]
