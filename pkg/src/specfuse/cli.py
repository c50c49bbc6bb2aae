"""Command-line entry point.

Subcommands: map (one part to a unified spec), eval (spec-vs-truth metrics,
corpus evaluation, ablation tables), gen (synthetic corpus), review (serve
the HITL review service).

Offline mode is the default: rule-based enricher, mock escalator, fixed
provenance clock. Network escalation needs --online plus the credential
environment variable.

Exit codes: 0 success, 2 input error, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

from .corpus import (
    CorpusProfile,
    PartInputs,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
)
from .emit import DEFAULT_FIXED_ISO, FixedClock, SystemClock
from .enrich import ExternalVlmEnricher, ReplayEnricher, RuleBasedEnricher
from .escalate import HttpEscalationClient, mock_client
from .evaluate import (
    ABLATION_VARIANTS,
    GroundTruth,
    compute_metrics,
    format_ablation_table,
    format_metrics_table,
    macro_average,
    run_ablation,
    variant_config,
)
from .model import (
    InputError,
    InternalInvariantError,
    PipelineConfig,
    UnifiedSpec,
    canonical_json,
    load_entities,
    load_features,
)
from .pipeline import evaluate_corpus, run_mapping
from .scoring import CompatibilityTable

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3

ESCALATION_CREDENTIAL_ENV = "SPECFUSE_ESCALATION_CREDENTIAL"


def _read_json(path: str) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _make_clock(args: argparse.Namespace):
    if getattr(args, "clock", None):
        return FixedClock(args.clock)
    if getattr(args, "offline", True):
        return FixedClock(DEFAULT_FIXED_ISO)
    return SystemClock()


def _make_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig()
    if getattr(args, "config", None):
        config = PipelineConfig.from_dict(_read_json(args.config))
    if getattr(args, "ablate", None) and args.ablate != "all":
        config = variant_config(args.ablate, config)
    return config


def _make_enricher(args: argparse.Namespace):
    if getattr(args, "enricher_replay", None):
        return ReplayEnricher(args.enricher_replay)
    if not args.offline and getattr(args, "enricher_endpoint", None):
        return ExternalVlmEnricher(
            endpoint=args.enricher_endpoint,
            credential=os.environ.get(ESCALATION_CREDENTIAL_ENV, ""),
        )
    return RuleBasedEnricher()


def _make_escalator(args: argparse.Namespace, truth: Optional[GroundTruth]):
    if not args.offline and getattr(args, "escalation_endpoint", None):
        credential = os.environ.get(ESCALATION_CREDENTIAL_ENV, "")
        if not credential:
            raise InputError(
                f"online escalation requires the {ESCALATION_CREDENTIAL_ENV} environment variable"
            )
        return HttpEscalationClient(args.escalation_endpoint, credential=credential)
    policy = args.escalation_policy
    if policy == "oracle":
        if truth is None:
            raise InputError("--escalation-policy oracle requires --truth")
        return mock_client("oracle", links=truth.links)
    if policy == "scripted":
        if not args.escalation_script:
            raise InputError("--escalation-policy scripted requires --escalation-script")
        return mock_client("scripted", path=args.escalation_script)
    return mock_client(policy)


def cmd_map(args: argparse.Namespace) -> int:
    features = load_features(_read_json(args.features))
    entities = load_entities(_read_json(args.entities))
    part_id = args.part_id or Path(args.features).parent.name or "part"
    truth = GroundTruth.from_dict(_read_json(args.truth)) if args.truth else None

    config = _make_config(args)
    table = CompatibilityTable.from_json(args.table) if args.table else None
    result = run_mapping(
        PartInputs(part_id, features, entities),
        config,
        enricher=_make_enricher(args),
        escalation_client=_make_escalator(args, truth),
        table=table,
        clock=_make_clock(args),
    )
    for warning in result.validation_warnings:
        print(f"warning: {warning}", file=sys.stderr)
    _write_atomic(Path(args.out), result.spec.to_json() + "\n")
    spec = result.spec
    print(
        f"{part_id}: {len(spec.active_mappings)} mappings, "
        f"{len(spec.flagged)} flagged, {len(spec.unmapped_entities)} unmapped, "
        f"{len(spec.unconstrained_features)} unconstrained -> {args.out}"
    )
    return EXIT_OK


def _eval_single(args: argparse.Namespace) -> int:
    try:
        spec = UnifiedSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {args.spec}: {exc}") from exc
    truth = GroundTruth.from_dict(_read_json(args.truth))

    # The spec document is exhaustive, so ids the truth references must all
    # appear somewhere in it.
    known_features = {m.feature_id for m in spec.mappings} | set(spec.unconstrained_features)
    known_entities = (
        {m.entity_id for m in spec.mappings}
        | {eid for eid, _ in spec.unmapped_entities}
        | {f.entity_id for f in spec.flagged}
    )
    unknown = sorted({f for f, _ in truth.links} - known_features) + sorted(
        {e for _, e in truth.links} - known_entities
    )
    if unknown:
        raise InputError(f"truth references ids unknown to the spec: {', '.join(unknown)}")

    predicted = {(m.feature_id, m.entity_id) for m in spec.active_mappings}
    metrics = compute_metrics(predicted, truth)
    report = {"part_id": spec.part_id, "metrics": metrics.to_dict()}
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.report:
        _write_atomic(Path(args.report), canonical_json(report) + "\n")
    return EXIT_OK


def _eval_corpus(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    config = _make_config(args)
    clock = _make_clock(args)

    if args.ablate == "all":
        rows = run_ablation(
            corpus,
            {truth.part_id: truth for _, truth in corpus},
            list(ABLATION_VARIANTS),
            base_config=PipelineConfig(),
            jobs=args.jobs,
        )
        table = format_ablation_table(rows)
        print(table)
        if args.report:
            _write_atomic(
                Path(args.report),
                canonical_json({"ablation": [r.to_dict() for r in rows]}) + "\n",
            )
        return EXIT_OK

    per_part = evaluate_corpus(corpus, None, config, jobs=args.jobs, clock=clock)
    aggregates = macro_average([m for _, m in per_part])
    print(format_metrics_table(aggregates))
    report = {
        "per_part": {pid: m.to_dict() for pid, m in per_part},
        "aggregate": {k: v.to_dict() for k, v in aggregates.items()},
    }
    if args.report:
        _write_atomic(Path(args.report), canonical_json(report) + "\n")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if bool(args.spec) == bool(args.corpus):
        raise InputError("eval needs exactly one of --spec (with --truth) or --corpus")
    if args.spec:
        if not args.truth:
            raise InputError("--spec requires --truth")
        return _eval_single(args)
    return _eval_corpus(args)


def cmd_gen(args: argparse.Namespace) -> int:
    profile = CorpusProfile.named(args.profile)
    corpus = generate_synthetic_corpus(args.seed, args.parts, profile)
    out = Path(args.out)
    try:
        save_corpus(corpus, out, seed=args.seed, profile=args.profile)
    except OSError as exc:
        raise InputError(f"cannot write corpus to {out}: {exc}") from exc
    n_features = sum(len(p.features) for p, _ in corpus)
    n_entities = sum(len(p.entities) for p, _ in corpus)
    print(f"wrote {len(corpus)} parts ({n_features} features, {n_entities} entities) to {out}")
    return EXIT_OK


def cmd_review(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import SpecStore, create_app

    store = SpecStore(Path(args.store))
    app = create_app(store, ui_dir=Path(args.ui) if args.ui else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--offline", dest="offline", action="store_true", default=True,
                       help="rule-based enricher + mock escalator (default)")
        p.add_argument("--online", dest="offline", action="store_false",
                       help="allow network enrichment/escalation endpoints")
        p.add_argument("--clock", help="fixed ISO timestamp for provenance events")
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument("--ablate", choices=list(ABLATION_VARIANTS) + ["all"],
                       help="apply an ablation variant configuration")

    p_map = sub.add_parser("map", help="map one part and write the unified spec")
    p_map.add_argument("--features", required=True)
    p_map.add_argument("--entities", required=True)
    p_map.add_argument("--out", required=True)
    p_map.add_argument("--part-id", dest="part_id")
    p_map.add_argument("--table", help="compatibility table override JSON")
    p_map.add_argument("--truth", help="ground-truth JSON (for the oracle mock)")
    p_map.add_argument("--escalation-policy", dest="escalation_policy",
                       choices=["oracle", "first_candidate", "always_reject", "scripted"],
                       default="always_reject")
    p_map.add_argument("--escalation-script", dest="escalation_script")
    p_map.add_argument("--escalation-endpoint", dest="escalation_endpoint")
    p_map.add_argument("--enricher-endpoint", dest="enricher_endpoint")
    p_map.add_argument("--enricher-replay", dest="enricher_replay")
    add_common(p_map)
    p_map.set_defaults(func=cmd_map)

    p_eval = sub.add_parser("eval", help="evaluate a spec or a corpus")
    p_eval.add_argument("--spec", help="unified spec JSON file")
    p_eval.add_argument("--truth", help="ground-truth JSON file")
    p_eval.add_argument("--corpus", help="corpus directory (map + eval each part)")
    p_eval.add_argument("--report", help="write the JSON report here")
    p_eval.add_argument("--jobs", type=int, default=1)
    add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_gen = sub.add_parser("gen", help="generate a synthetic corpus with ground truth")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--parts", type=int, default=20)
    p_gen.add_argument("--profile", default="table1")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_rev = sub.add_parser("review", help="serve the HITL review service")
    p_rev.add_argument("--store", required=True, help="spec store directory")
    p_rev.add_argument("--ui", help="static review UI bundle directory")
    p_rev.add_argument("--host", default="127.0.0.1")
    p_rev.add_argument("--port", type=int, default=8400)
    p_rev.set_defaults(func=cmd_review)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InternalInvariantError as exc:
        print(f"internal invariant failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
