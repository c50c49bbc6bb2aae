"""Link-level evaluation: precision/recall/F1, match rates, macro averages,
and the ablation runner over the pipeline's degraded configurations.

Flagged-for-review items count as not predicted; automated metrics reflect
the pipeline without manual intervention.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

from .model import InputError, PipelineConfig, UnifiedSpec

Link = tuple[str, str]  # (feature_id, entity_id)

METRIC_NAMES = ("precision", "recall", "f1", "exact_match_rate", "partial_match_rate")

ABLATION_VARIANTS = (
    "deterministic_only",
    "no_heuristics",
    "no_llm_escalation",
    "no_context",
    "full",
)


@dataclass(frozen=True)
class GroundTruth:
    """Manually curated correct links for one part."""

    part_id: str
    links: frozenset[Link]

    def to_dict(self) -> dict[str, Any]:
        return {
            "part_id": self.part_id,
            "links": [[f, e] for f, e in sorted(self.links)],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GroundTruth":
        try:
            return cls(
                part_id=str(d["part_id"]),
                links=frozenset((str(f), str(e)) for f, e in d["links"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad ground-truth record: {exc}") from exc


@dataclass(frozen=True)
class PartMetrics:
    precision: float
    recall: float
    f1: float
    exact_match_rate: float
    partial_match_rate: float
    n_predicted: int
    n_truth: int
    n_correct: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "exact_match_rate": self.exact_match_rate,
            "partial_match_rate": self.partial_match_rate,
            "n_predicted": self.n_predicted,
            "n_truth": self.n_truth,
            "n_correct": self.n_correct,
        }


def predicted_links(spec: UnifiedSpec) -> frozenset[Link]:
    """Active mappings only; flagged and rejected records are not predictions."""
    return frozenset((m.feature_id, m.entity_id) for m in spec.active_mappings)


def compute_metrics(predicted: Iterable[Link], truth: GroundTruth) -> PartMetrics:
    """Set-intersection metrics for one part.

    Precision is 1.0 when both sets are empty and 0.0 when only the
    prediction is empty; recall mirrors that for an empty truth set. Match
    rates are per 3D feature over features carrying at least one truth link:
    exact means the predicted entity set equals the truth set, partial means
    a non-empty intersection.
    """
    m = frozenset(predicted)
    mstar = truth.links
    correct = m & mstar

    if not m:
        precision = 1.0 if not mstar else 0.0
    else:
        precision = len(correct) / len(m)
    recall = len(correct) / len(mstar) if mstar else 1.0  # nothing to recall
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    truth_by_feature: dict[str, set[str]] = {}
    for f, e in mstar:
        truth_by_feature.setdefault(f, set()).add(e)
    pred_by_feature: dict[str, set[str]] = {}
    for f, e in m:
        pred_by_feature.setdefault(f, set()).add(e)

    if truth_by_feature:
        exact = sum(
            1
            for f, es in truth_by_feature.items()
            if pred_by_feature.get(f, set()) == es
        ) / len(truth_by_feature)
        partial = sum(
            1
            for f, es in truth_by_feature.items()
            if pred_by_feature.get(f, set()) & es
        ) / len(truth_by_feature)
    else:
        exact = partial = 1.0

    return PartMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        exact_match_rate=exact,
        partial_match_rate=partial,
        n_predicted=len(m),
        n_truth=len(mstar),
        n_correct=len(correct),
    )


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    std: float
    min: float
    max: float

    def to_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


def macro_average(per_part: Sequence[PartMetrics]) -> dict[str, AggregateStat]:
    """Unweighted per-metric mean/std/min/max; std is population std."""
    if not per_part:
        raise InputError("macro_average requires at least one part")
    out: dict[str, AggregateStat] = {}
    for name in METRIC_NAMES:
        values = [getattr(p, name) for p in per_part]
        out[name] = AggregateStat(
            mean=statistics.fmean(values),
            std=statistics.pstdev(values),
            min=min(values),
            max=max(values),
        )
    return out


def format_metrics_table(aggregates: Mapping[str, AggregateStat]) -> str:
    """Aligned text table shaped like the aggregated-results table."""
    header = f"{'Metric':<22}{'Mean':>9}{'Std':>9}{'Min':>9}{'Max':>9}"
    lines = [header, "-" * len(header)]
    labels = {
        "precision": "Mapping Precision",
        "recall": "Mapping Recall",
        "f1": "Mapping F1 score",
        "exact_match_rate": "Exact Match Rate",
        "partial_match_rate": "Partial Match Rate",
    }
    for name in METRIC_NAMES:
        s = aggregates[name]
        lines.append(
            f"{labels[name]:<22}{s.mean:>9.4f}{s.std:>9.4f}{s.min:>9.4f}{s.max:>9.4f}"
        )
    return "\n".join(lines)


def variant_config(variant: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Pipeline configuration for one ablation variant.

    deterministic_only: heuristics off, no escalation, argmax accept.
    no_heuristics: heuristic terms off and semantic routing disabled
    (the published ablation note; pass keep_routing upstream for the
    alternate reading). no_llm_escalation: both escalation stages off,
    near-ties stay flagged. no_context: the context term is zeroed without
    renormalizing the weights. full: everything on.
    """
    base = base or PipelineConfig()
    if variant == "full":
        return base
    if variant == "deterministic_only":
        return replace(
            base,
            heuristics_enabled=False,
            vlm_selection_enabled=False,
            llm_escalation_enabled=False,
            argmax_accept=True,
        )
    if variant == "no_heuristics":
        return replace(base, heuristics_enabled=False, routing_enabled=False)
    if variant == "no_llm_escalation":
        return replace(base, vlm_selection_enabled=False, llm_escalation_enabled=False)
    if variant == "no_context":
        return replace(base, context_enabled=False)
    raise InputError(f"unknown ablation variant {variant!r}")


@dataclass(frozen=True)
class AblationRow:
    variant: str
    precision: AggregateStat
    recall: AggregateStat
    f1: AggregateStat

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "precision": self.precision.to_dict(),
            "recall": self.recall.to_dict(),
            "f1": self.f1.to_dict(),
        }


def run_ablation(
    corpus: Sequence[Any],
    truths: Mapping[str, GroundTruth],
    variants: Sequence[str],
    *,
    base_config: Optional[PipelineConfig] = None,
    no_heuristics_keeps_routing: bool = False,
    jobs: int = 1,
) -> list[AblationRow]:
    """Evaluate each variant over the corpus with a per-part oracle escalator.

    `corpus` is a sequence of PartInputs. Each part is mapped with the
    variant's configuration and the ground-truth oracle mock, then scored
    against the same truth.
    """
    from .pipeline import evaluate_corpus  # local to avoid a cycle

    rows: list[AblationRow] = []
    for variant in variants:
        config = variant_config(variant, base_config)
        if variant == "no_heuristics" and no_heuristics_keeps_routing:
            config = replace(config, routing_enabled=True)
        per_part = evaluate_corpus(corpus, truths, config, jobs=jobs)
        agg = macro_average([m for _, m in per_part])
        rows.append(
            AblationRow(
                variant=variant,
                precision=agg["precision"],
                recall=agg["recall"],
                f1=agg["f1"],
            )
        )
    return rows


def format_ablation_table(rows: Sequence[AblationRow]) -> str:
    header = f"{'Variant':<24}{'P':>9}{'R':>9}{'F1':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.variant:<24}{row.precision.mean:>9.4f}{row.recall.mean:>9.4f}"
            f"{row.f1.mean:>9.4f}"
        )
    return "\n".join(lines)
