from dataclasses import replace

import pytest

from specfuse import (
    DrawingEntity,
    Feature3D,
    OracleClient,
    PipelineConfig,
    compute_metrics,
    generate_synthetic_corpus,
    run_mapping,
)
from specfuse.corpus import PartInputs
from specfuse.emit import FixedClock
from specfuse.evaluate import predicted_links
from specfuse.fixtures import fixture_inputs, fixture_truth
from specfuse.model import InputError
from specfuse.pipeline import evaluate_corpus, run_part_against_truth


def test_fixture_end_to_end_exact():
    spec, metrics = run_part_against_truth(
        fixture_inputs(), fixture_truth(), PipelineConfig(), clock=FixedClock()
    )
    assert predicted_links(spec) == fixture_truth().links
    assert metrics.exact_match_rate == 1.0
    methods = {m.record_id: m.method for m in spec.active_mappings}
    assert methods["F3::E3"] == "deterministic_vlm"  # no spatial cues, escalated
    assert methods["F1::E1"] == "deterministic"


def test_validation_failure_raises():
    f = Feature3D(id="F1", feature_type="hole", params={"diameter": 5.0})
    dup = [f, f]
    entities = [DrawingEntity(id="E1", entity_type="dimension", raw_text="Ø5")]
    with pytest.raises(InputError):
        run_mapping(PartInputs("P", tuple(dup), tuple(entities)))


def test_unit_warnings_surface():
    f = Feature3D(id="F1", feature_type="hole", params={"diameter": 5.0})
    e = DrawingEntity(id="E1", entity_type="dimension", raw_text="Ø5",
                      semantic_values={"value": 5.0})
    result = run_mapping(PartInputs("P", (f,), (e,)), clock=FixedClock())
    assert any("defaulting to mm" in w for w in result.validation_warnings)


def test_multiplicity_unsatisfied_flagged():
    # 3X callout with only two similar holes: no expansion, entity flagged
    features = tuple(
        Feature3D(id=f"F{i}", feature_type="hole", params={"diameter": 5.0},
                  pattern_id="P1")
        for i in range(2)
    )
    entity = DrawingEntity(id="E1", entity_type="dimension", raw_text="3X Ø5")
    result = run_mapping(PartInputs("P", features, (entity,)), clock=FixedClock())
    spec = result.spec
    assert any(
        f.entity_id == "E1" and f.reason == "multiplicity_unsatisfied"
        for f in spec.flagged
    )


def test_full_pipeline_perfect_on_corpus():
    corpus = generate_synthetic_corpus(42, 20)
    for part, truth in corpus:
        spec, metrics = run_part_against_truth(part, truth, PipelineConfig(),
                                               clock=FixedClock())
        assert metrics.f1 == 1.0, (part.part_id, metrics)
        spec.check_exhaustive(e.id for e in part.entities)


def test_spec_exhaustive_across_variants():
    from specfuse.evaluate import ABLATION_VARIANTS, variant_config
    corpus = generate_synthetic_corpus(3, 6)
    for variant in ABLATION_VARIANTS:
        config = variant_config(variant)
        for part, truth in corpus:
            client = OracleClient(truth.links)
            result = run_mapping(part, config, escalation_client=client,
                                 clock=FixedClock())
            result.spec.check_exhaustive(e.id for e in part.entities)


def test_parallel_evaluation_matches_serial():
    corpus = generate_synthetic_corpus(9, 8)
    config = PipelineConfig()
    serial = evaluate_corpus(corpus, None, config, jobs=1, clock=FixedClock())
    parallel = evaluate_corpus(corpus, None, config, jobs=4, clock=FixedClock())
    assert serial == parallel


def test_missing_truth_is_error():
    corpus = [p for p, _ in generate_synthetic_corpus(2, 2)]
    with pytest.raises(InputError):
        evaluate_corpus(corpus, {}, PipelineConfig())


def test_flagged_items_carry_candidate_traces():
    cfg = replace(PipelineConfig(), vlm_selection_enabled=False,
                  llm_escalation_enabled=False)
    result = run_mapping(fixture_inputs(), cfg, clock=FixedClock())
    assert result.spec.flagged
    for flag in result.spec.flagged:
        assert flag.candidates
        assert all(c.trace for c in flag.candidates)
