import json

import pytest

from specfuse import (
    DrawingEntity,
    EntityContext,
    ReplayEnricher,
    RuleBasedEnricher,
    enrich,
    parse_callout_grammar,
)
from specfuse.enrich import ExternalVlmEnricher, enrichment_request
from specfuse.model import digest


def _entity(raw_text, entity_type="dimension", sv=None, ctx=None):
    return DrawingEntity(
        id="E1", entity_type=entity_type, raw_text=raw_text,
        semantic_values=sv or {}, context=ctx,
    )


# --- grammar ----------------------------------------------------------------

def test_diameter_with_tolerance():
    p = parse_callout_grammar("Ø10 ±0.05")
    assert p.kind == "diameter"
    assert p.value == 10.0
    assert p.tolerance == 0.05
    assert p.has_diameter_symbol


def test_multiplicity_thread():
    p = parse_callout_grammar("2X M6")
    assert p.multiplicity == 2
    assert p.kind == "thread"
    assert p.value == 6.0


def test_empty_input_is_unknown():
    assert parse_callout_grammar("").kind == "unknown"


def test_thread_pitch_parsed_but_nominal_kept():
    p = parse_callout_grammar("M8x1.25")
    assert p.kind == "thread"
    assert p.value == 8.0
    assert p.pitch == 1.25


def test_ascii_diameter_fallbacks():
    for text in ("%%c12", "DIA 12", "⌀12"):
        p = parse_callout_grammar(text)
        assert p.kind == "diameter", text
        assert p.value == 12.0
        assert p.has_diameter_symbol


def test_depth_forms():
    assert parse_callout_grammar("↧12").kind == "depth"
    assert parse_callout_grammar("12 DEEP").value == 12.0
    assert parse_callout_grammar("DEPTH 7.5").value == 7.5


def test_compound_diameter_depth_modifier():
    p = parse_callout_grammar("Ø5 ↧12")
    assert p.kind == "diameter"
    assert p.value == 5.0
    assert p.depth_modifier == 12.0


def test_gdt_frames():
    p = parse_callout_grammar("⌖|Ø0.1|A|B")
    assert p.kind == "gdt_position"
    assert p.zone_width == 0.1
    assert p.datum_refs == ("A", "B")
    assert parse_callout_grammar("⌓|0.2|A").kind == "gdt_profile"
    assert parse_callout_grammar("RUNOUT|0.05|A").kind == "gdt_runout"
    assert parse_callout_grammar("⏥|0.02").kind == "gdt_flatness"


def test_datum_letters():
    assert parse_callout_grammar("[A]").kind == "datum_ref"
    assert parse_callout_grammar("-B-").datum_refs == ("B",)


def test_angle_and_roughness():
    assert parse_callout_grammar("45°").kind == "angle"
    assert parse_callout_grammar("30 DEG").value == 30.0
    assert parse_callout_grammar("Ra 3.2").kind == "roughness"


def test_counterbore_countersink():
    assert parse_callout_grammar("⌴ Ø10").kind == "counterbore"
    assert parse_callout_grammar("CBORE 10").value == 10.0
    assert parse_callout_grammar("CSK 8").kind == "countersink"


@pytest.mark.parametrize("n", list(range(1, 101)))
def test_multiplicity_property(n):
    p = parse_callout_grammar(f"{n}X Ø5")
    assert p.multiplicity == n
    assert p.kind == "diameter"
    assert p.value == 5.0


# --- rule-based enrichment ---------------------------------------------------

def test_enrich_diameter_example():
    d = enrich(_entity("Ø10"))
    assert d.normalized_type == "diameter"
    assert d.numeric_value == 10.0
    assert d.unit == "mm"
    assert d.target_category == "hole"
    assert d.has_diameter_symbol
    assert d.enrich_confidence == 0.95


def test_enrich_thread_example():
    d = enrich(_entity("M8"))
    assert d.normalized_type == "thread"
    assert d.numeric_value == 8.0
    assert d.target_category == "hole"


def test_enrich_radius_example():
    d = enrich(_entity("R5"))
    assert d.normalized_type == "radius"
    assert d.numeric_value == 5.0
    assert d.target_category == "fillet"


def test_enrich_pattern_example():
    d = enrich(_entity("4X Ø5"))
    assert d.multiplicity == 4
    assert d.numeric_value == 5.0


def test_enrich_unparseable_never_fails():
    d = enrich(_entity("SEE NOTE 3", entity_type="note"))
    assert d.normalized_type == "unknown"
    assert d.enrich_confidence == 0.3


def test_enrich_bare_numeric_partial_confidence():
    d = enrich(_entity("10"))
    assert d.normalized_type == "linear"
    assert d.enrich_confidence == 0.7


def test_enrich_honors_dim_kind_hint():
    d = enrich(_entity("10", sv={"dim_kind": "diameter"}))
    assert d.normalized_type == "diameter"
    assert not d.has_diameter_symbol
    assert d.target_category == "hole"


def test_enrich_honors_target_hint():
    d = enrich(_entity("Ø20", sv={"target": "boss"}))
    assert d.target_category == "boss"


def test_enrich_converts_inches():
    d = enrich(_entity("1", sv={"unit": "in"}))
    assert d.numeric_value == 25.4
    assert d.unit == "mm"


def test_enrich_gdt_zone_not_numeric_value():
    d = enrich(_entity("⌖|Ø0.1|A", entity_type="gdt_frame"))
    assert d.normalized_type == "gdt_position"
    assert d.numeric_value is None


def test_enrich_spatial_context_flag():
    ctx = EntityContext(bbox=(0.0, 0.0, 1.0, 1.0))
    assert enrich(_entity("Ø5", ctx=ctx)).has_spatial_context
    assert not enrich(_entity("Ø5")).has_spatial_context


def test_enrich_deterministic_and_idempotent():
    entity = _entity("4X Ø5 ±0.1")
    first = enrich(entity)
    assert first == enrich(entity)
    # re-enriching an already-enriched entity's raw text gives the same result
    assert enrich(_entity(entity.raw_text)) == enrich(_entity(entity.raw_text))


def test_enrich_confidence_bounds_over_random_strings():
    import random
    rng = random.Random(7)
    alphabet = "Ø⌀RM↧⌖⌓⏥X±|.0123456789 ABDEEP"
    for _ in range(300):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
        d = enrich(_entity(text))
        assert 0.0 <= d.enrich_confidence <= 1.0


# --- replay and external backends -------------------------------------------

def test_replay_backend_bit_stable(tmp_path):
    entity = _entity("Ø9")
    key = digest(enrichment_request(entity))
    response = {
        "entity_id": "E1", "normalized_type": "diameter", "numeric_value": 9.0,
        "unit": "mm", "target_category": "hole", "multiplicity": 1,
        "has_diameter_symbol": True, "enrich_confidence": 0.88,
    }
    path = tmp_path / "replay.ndjson"
    path.write_text(json.dumps({"digest": key, "response": response}) + "\n")
    backend = ReplayEnricher(path)
    a, _ = backend.enrich(entity)
    b, _ = backend.enrich(entity)
    assert a == b
    assert a.enrich_confidence == 0.88


def test_replay_backend_falls_back_to_rules(tmp_path):
    path = tmp_path / "replay.ndjson"
    path.write_text("")
    backend = ReplayEnricher(path)
    desc, meta = backend.enrich(_entity("R4"))
    assert desc.normalized_type == "radius"
    assert "fallback" in meta["note"]


def test_external_backend_timeout_falls_back():
    def broken_transport(request):
        raise TimeoutError("deadline")

    backend = ExternalVlmEnricher("http://unused", transport=broken_transport)
    desc, meta = backend.enrich(_entity("Ø7"))
    assert desc.normalized_type == "diameter"
    assert "fallback to rule_based" in meta["note"]


def test_external_backend_uses_response():
    def transport(request):
        assert request["raw_text"] == "Ø7"
        return {
            "normalized_type": "diameter", "numeric_value": 7.0,
            "target_category": "hole", "enrich_confidence": 0.91,
        }

    backend = ExternalVlmEnricher("http://unused", transport=transport)
    desc, _ = backend.enrich(_entity("Ø7"))
    assert desc.enrich_confidence == 0.91
    assert desc.entity_id == "E1"
