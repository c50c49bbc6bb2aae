"""Bundled golden fixture: the four-feature demonstration part.

A cylindrical boss with its diameter callout, one hole of a pattern, a
pocket carrying a profile GD&T frame (no spatial cues, so it exercises the
multimodal escalation path), and a fillet with its radius callout.
"""

from __future__ import annotations

import json
from importlib import resources

from .corpus import PartInputs
from .evaluate import GroundTruth
from .model import load_entities, load_features

FIXTURE_PART_ID = "FIG3"


def _read(name: str) -> dict:
    ref = resources.files("specfuse").joinpath("data/fig3").joinpath(name)
    return json.loads(ref.read_text(encoding="utf-8"))


def fixture_inputs() -> PartInputs:
    return PartInputs(
        part_id=FIXTURE_PART_ID,
        features=load_features(_read("features.json")),
        entities=load_entities(_read("entities.json")),
    )


def fixture_truth() -> GroundTruth:
    return GroundTruth.from_dict(_read("truth.json"))
