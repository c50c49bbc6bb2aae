import random

import pytest

from specfuse import (
    GroundTruth,
    PipelineConfig,
    compute_metrics,
    macro_average,
    variant_config,
)
from specfuse.evaluate import (
    AggregateStat,
    PartMetrics,
    format_ablation_table,
    format_metrics_table,
)
from specfuse.model import InputError


def _truth(links):
    return GroundTruth(part_id="P", links=frozenset(links))


# --- compute_metrics -----------------------------------------------------------

def test_identity_case():
    m = compute_metrics({("F1", "E1")}, _truth({("F1", "E1")}))
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
    assert m.exact_match_rate == 1.0
    assert m.partial_match_rate == 1.0


def test_half_right_case():
    m = compute_metrics(
        {("F1", "E1"), ("F2", "E3")},
        _truth({("F1", "E1"), ("F2", "E2")}),
    )
    assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)
    assert m.exact_match_rate == 0.5
    assert m.partial_match_rate == 0.5


def test_empty_prediction_conventions():
    assert compute_metrics(set(), _truth(set())).precision == 1.0
    assert compute_metrics(set(), _truth({("F1", "E1")})).precision == 0.0
    assert compute_metrics(set(), _truth(set())).recall == 1.0


def test_partial_vs_exact():
    # F1 has one of two truth entities: partial but not exact
    m = compute_metrics({("F1", "E1")}, _truth({("F1", "E1"), ("F1", "E2")}))
    assert m.exact_match_rate == 0.0
    assert m.partial_match_rate == 1.0


def test_f1_formula_against_components():
    rng = random.Random(17)
    for _ in range(200):
        n_truth = rng.randint(1, 6)
        truth = {(f"F{i}", f"E{i}") for i in range(n_truth)}
        predicted = {link for link in truth if rng.random() < 0.7}
        predicted |= {(f"F{i+10}", f"E{i+10}") for i in range(rng.randint(0, 3))}
        m = compute_metrics(predicted, _truth(truth))
        if m.precision + m.recall > 0:
            expected = 2 * m.precision * m.recall / (m.precision + m.recall)
            assert abs(m.f1 - expected) <= 1e-12
        else:
            assert m.f1 == 0.0


def test_metric_bounds_and_rate_order_property():
    rng = random.Random(29)
    universe = [(f"F{i}", f"E{j}") for i in range(4) for j in range(4)]
    for _ in range(500):
        truth = {l for l in universe if rng.random() < 0.3}
        predicted = {l for l in universe if rng.random() < 0.3}
        m = compute_metrics(predicted, _truth(truth))
        for value in (m.precision, m.recall, m.f1, m.exact_match_rate, m.partial_match_rate):
            assert 0.0 <= value <= 1.0
        assert m.f1 <= max(m.precision, m.recall) + 1e-12
        assert m.exact_match_rate <= m.partial_match_rate + 1e-12


# --- macro averaging --------------------------------------------------------------

def _metrics(p):
    return PartMetrics(precision=p, recall=p, f1=p, exact_match_rate=p,
                       partial_match_rate=p, n_predicted=1, n_truth=1, n_correct=1)


def test_single_part_aggregate():
    agg = macro_average([_metrics(0.8)])
    assert agg["precision"].mean == 0.8
    assert agg["precision"].std == 0.0
    assert agg["precision"].min == agg["precision"].max == 0.8


def test_two_part_mean():
    agg = macro_average([_metrics(1.0), _metrics(0.5)])
    assert agg["precision"].mean == 0.75
    assert agg["precision"].min == 0.5
    assert agg["precision"].max == 1.0
    # population std of {1.0, 0.5}
    assert abs(agg["precision"].std - 0.25) < 1e-12


def test_empty_list_is_error():
    with pytest.raises(InputError):
        macro_average([])


def test_metrics_table_columns():
    table = format_metrics_table(macro_average([_metrics(0.5)]))
    header = table.splitlines()[0]
    for col in ("Mean", "Std", "Min", "Max"):
        assert col in header


# --- variant configs ----------------------------------------------------------------

def test_variant_configs():
    det = variant_config("deterministic_only")
    assert det.argmax_accept and not det.heuristics_enabled
    assert not det.vlm_selection_enabled and not det.llm_escalation_enabled
    assert det.routing_enabled

    noh = variant_config("no_heuristics")
    assert not noh.heuristics_enabled and not noh.routing_enabled
    assert noh.vlm_selection_enabled

    nol = variant_config("no_llm_escalation")
    assert not nol.vlm_selection_enabled and not nol.llm_escalation_enabled
    assert nol.heuristics_enabled

    noc = variant_config("no_context")
    assert not noc.context_enabled
    assert noc.w_c == 0.2  # weights not renormalized

    assert variant_config("full") == PipelineConfig()


def test_unknown_variant_is_error():
    with pytest.raises(InputError):
        variant_config("no_such_thing")


def test_ablation_table_shape():
    stat = AggregateStat(mean=0.5, std=0.0, min=0.5, max=0.5)
    from specfuse.evaluate import AblationRow
    table = format_ablation_table(
        [AblationRow(variant="full", precision=stat, recall=stat, f1=stat)]
    )
    assert "Variant" in table and "F1" in table
    assert "full" in table
