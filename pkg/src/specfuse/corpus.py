"""Synthetic benchmark corpus with ground truth, for desk-scale evaluation.

Part sizes follow the published dataset ranges (2-9 features, 2-13 entities
per part). Each part mixes plain feature/callout pairs with engineered
ambiguities:

  * near-duplicate hole pairs whose diameters sit within the tolerance band,
    so deterministic scoring ties and only escalation can split them;
  * nX hole patterns with AFR parameter noise beyond 2*epsilon on some
    members, recoverable only through pattern-group expansion;
  * routing traps: an undimensioned feature whose depth equals another
    callout's diameter, a false accept only when semantic routing is off;
  * type-gate coincidences: a slot whose width equals a diameter callout's
    value, blocked by the type gate in every configuration;
  * junk near-tie entity pairs that full-pipeline escalation rejects but a
    context-blind run accepts;
  * one multi-callout hole (diameter plus depth) per part.

Generation is a pure function of the seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .evaluate import GroundTruth, Link
from .model import (
    DrawingEntity,
    EntityContext,
    Feature3D,
    InputError,
    canonical_json,
    load_entities,
    load_features,
)

MIN_FEATURES, MAX_FEATURES = 2, 9
MIN_ENTITIES, MAX_ENTITIES = 2, 13


@dataclass(frozen=True)
class PartInputs:
    part_id: str
    features: tuple[Feature3D, ...]
    entities: tuple[DrawingEntity, ...]


@dataclass(frozen=True)
class CorpusProfile:
    """Block inclusion probabilities for the generator."""

    name: str = "table1"
    p_near_duplicate: float = 0.65
    p_pattern: float = 0.5
    p_gate_coincidence: float = 0.4
    p_junk_near_tie: float = 0.35
    p_second_trap: float = 0.25
    p_note: float = 0.3
    p_plain_extra: float = 0.35

    @classmethod
    def named(cls, name: str) -> "CorpusProfile":
        if name in ("table1", "ambiguity", "default"):
            return cls(name=name)
        raise InputError(f"unknown corpus profile {name!r}")


class _PartBuilder:
    def __init__(self, part_id: str, rng: random.Random):
        self.part_id = part_id
        self.rng = rng
        self.features: list[Feature3D] = []
        self.entities: list[DrawingEntity] = []
        self.links: set[Link] = set()

    def fid(self) -> str:
        return f"F{len(self.features) + 1:02d}"

    def eid(self) -> str:
        return f"E{len(self.entities) + 1:02d}"

    def fits(self, n_features: int, n_entities: int) -> bool:
        return (
            len(self.features) + n_features <= MAX_FEATURES
            and len(self.entities) + n_entities <= MAX_ENTITIES
        )

    def bbox(self) -> EntityContext:
        x = round(self.rng.uniform(10.0, 400.0), 1)
        y = round(self.rng.uniform(10.0, 280.0), 1)
        return EntityContext(bbox=(x, y, x + 18.0, y + 6.0), view_id="front")

    def add_feature(self, feature_type: str, params: dict, **kw) -> str:
        fid = self.fid()
        self.features.append(
            Feature3D(
                id=fid,
                feature_type=feature_type,
                params=params,
                afr_confidence=round(self.rng.uniform(0.85, 0.99), 2),
                **kw,
            )
        )
        return fid

    def add_entity(
        self,
        raw_text: str,
        entity_type: str = "dimension",
        semantic_values: Optional[dict] = None,
        with_context: bool = True,
    ) -> str:
        eid = self.eid()
        self.entities.append(
            DrawingEntity(
                id=eid,
                entity_type=entity_type,
                raw_text=raw_text,
                semantic_values=semantic_values or {},
                context=self.bbox() if with_context else None,
            )
        )
        return eid


def _fmt(x: float) -> str:
    return f"{x:g}"


def generate_part(part_id: str, rng: random.Random, profile: CorpusProfile, *, with_gdt: bool) -> tuple[PartInputs, GroundTruth]:
    b = _PartBuilder(part_id, rng)

    # Plain unambiguous pair: fillet radius or chamfer angle.
    if rng.random() < 0.5:
        r = round(rng.choice([2.0, 2.5, 3.0, 3.5]), 2)
        fid = b.add_feature("fillet", {"radius": r})
        eidp = b.add_entity(f"R{_fmt(r)}")
    else:
        ang = rng.choice([30.0, 45.0, 60.0])
        fid = b.add_feature("chamfer", {"angle": ang, "width": round(rng.uniform(1.0, 2.0), 1)})
        eidp = b.add_entity(f"{_fmt(ang)}°")
    b.links.add((fid, eidp))

    # Multi-callout hole: separate diameter and depth callouts, both true.
    mc_d = round(rng.choice([6.0, 7.0, 8.0, 9.5, 11.0, 12.0]), 2)
    mc_depth = round(rng.uniform(50.0, 60.0), 1)
    mc = b.add_feature("hole", {"diameter": mc_d, "depth": mc_depth})
    e_dia = b.add_entity(f"Ø{_fmt(mc_d)}")
    e_dep = b.add_entity(f"{_fmt(mc_depth)} DEEP", semantic_values={"target": "hole"})
    b.links.add((mc, e_dia))
    b.links.add((mc, e_dep))

    # Routing trap: undimensioned hole whose depth coincides with mc_d.
    trap_d = round(rng.uniform(32.0, 40.0), 1)
    b.add_feature("hole", {"diameter": trap_d, "depth": mc_d})
    if rng.random() < profile.p_second_trap and b.fits(1, 0):
        trap2_d = round(rng.uniform(32.0, 40.0), 1)
        b.add_feature("bore", {"diameter": trap2_d, "depth": mc_d})

    # Near-duplicate hole pair: diameters within epsilon of each other.
    if rng.random() < profile.p_near_duplicate and b.fits(2, 2):
        base = round(rng.choice([14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0]), 2)
        twin = round(base + 0.08, 2)
        # Creation order shuffled so lexicographic tie-breaks are wrong for
        # roughly half of the argmax runs.
        first_is_base = rng.random() < 0.5
        h1 = b.add_feature("hole", {"diameter": base, "depth": round(rng.uniform(62.0, 68.0), 1)})
        h2 = b.add_feature("hole", {"diameter": twin, "depth": round(rng.uniform(62.0, 68.0), 1)})
        if first_is_base:
            ea = b.add_entity(f"Ø{_fmt(base)}")
            eb = b.add_entity(f"Ø{_fmt(twin)}")
        else:
            eb = b.add_entity(f"Ø{_fmt(twin)}")
            ea = b.add_entity(f"Ø{_fmt(base)}")
        b.links.add((h1, ea))
        b.links.add((h2, eb))

        # Type-gate coincidence: slot width equal to the base diameter.
        if rng.random() < profile.p_gate_coincidence and b.fits(1, 1):
            slot_len = round(rng.uniform(130.0, 140.0), 1)
            slot = b.add_feature("slot", {"width": base, "length": slot_len})
            e_w = b.add_entity(f"{_fmt(slot_len)}")
            # The slot's own linear callout routes to length; the Ø entities
            # stay gated out.
            b.links.add((slot, e_w))

    # Repeated hole pattern with an nX callout and AFR noise on members.
    if rng.random() < profile.p_pattern:
        n = rng.choice([2, 3, 4])
        if b.fits(n, 1):
            pd = round(rng.choice([3.0, 3.5, 4.0, 4.5, 5.0]), 2)
            pat = f"PAT-{part_id}-{len(b.features)}"
            e_pat = b.add_entity(f"{n}X Ø{_fmt(pd)}")
            for k in range(n):
                noise = 0.0 if k < max(1, n - 1) else rng.choice([0.35, 0.5])
                fidk = b.add_feature(
                    "hole",
                    {"diameter": round(pd + noise, 2), "depth": round(rng.uniform(70.0, 80.0), 1)},
                    pattern_id=pat,
                )
                b.links.add((fidk, e_pat))

    # Junk near-tie pair on an undimensioned slot: full escalation rejects
    # both, a context-blind run accepts the first.
    if rng.random() < profile.p_junk_near_tie and b.fits(1, 2):
        jw = round(rng.uniform(42.0, 48.0), 1)
        b.add_feature("slot", {"width": jw, "length": round(jw * 2, 1)})
        b.add_entity(f"{_fmt(jw)}")
        b.add_entity(f"{_fmt(round(jw + 0.15, 2))} ±0.05")

    # Extra plain boss pair to vary part size.
    if rng.random() < profile.p_plain_extra and b.fits(1, 1):
        bd = round(rng.uniform(84.0, 96.0), 1)
        boss = b.add_feature("boss", {"diameter": bd, "height": round(rng.uniform(5.0, 15.0), 1)})
        e_boss = b.add_entity(
            f"Ø{_fmt(bd)}", semantic_values={"target": "boss", "dim_kind": "diameter"}
        )
        b.links.add((boss, e_boss))

    # One GD&T annotation across the whole corpus, mirroring the dataset.
    if with_gdt and b.fits(1, 1):
        pk = b.add_feature("pocket", {"width": round(rng.uniform(100.0, 120.0), 1), "depth": 4.0})
        e_g = b.add_entity("⌖|Ø0.2|A", entity_type="gdt_frame", with_context=False)
        b.links.add((pk, e_g))

    # Unparseable note entity; stays unmapped.
    if rng.random() < profile.p_note and b.fits(0, 1):
        b.add_entity(f"SEE NOTE {rng.randint(1, 9)}", entity_type="note")

    assert MIN_FEATURES <= len(b.features) <= MAX_FEATURES, part_id
    assert MIN_ENTITIES <= len(b.entities) <= MAX_ENTITIES, part_id
    return (
        PartInputs(part_id=part_id, features=tuple(b.features), entities=tuple(b.entities)),
        GroundTruth(part_id=part_id, links=frozenset(b.links)),
    )


def generate_synthetic_corpus(
    seed: int,
    n_parts: int = 20,
    profile: str | CorpusProfile = "table1",
) -> list[tuple[PartInputs, GroundTruth]]:
    """Deterministic corpus: same seed, same bytes."""
    if isinstance(profile, str):
        profile = CorpusProfile.named(profile)
    rng = random.Random(seed)
    parts = []
    for i in range(n_parts):
        part_id = f"P{i + 1:02d}"
        parts.append(generate_part(part_id, rng, profile, with_gdt=(i == 0)))
    return parts


# ---------------------------------------------------------------------------
# On-disk layout: one directory per part plus a manifest
# ---------------------------------------------------------------------------

def save_corpus(
    corpus: list[tuple[PartInputs, GroundTruth]],
    out_dir: str | Path,
    *,
    seed: Optional[int] = None,
    profile: str = "table1",
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for part, truth in corpus:
        pdir = out / part.part_id
        pdir.mkdir(parents=True, exist_ok=True)
        _write(pdir / "features.json", {"features": [f.to_dict() for f in part.features]})
        _write(pdir / "entities.json", {"entities": [e.to_dict() for e in part.entities]})
        _write(pdir / "truth.json", truth.to_dict())
    _write(
        out / "manifest.json",
        {
            "parts": [part.part_id for part, _ in corpus],
            "seed": seed,
            "profile": profile,
        },
    )


def load_corpus(corpus_dir: str | Path) -> list[tuple[PartInputs, GroundTruth]]:
    root = Path(corpus_dir)
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        part_ids = json.loads(manifest_path.read_text(encoding="utf-8"))["parts"]
    else:
        part_ids = sorted(p.name for p in root.iterdir() if p.is_dir())
    corpus = []
    for pid in part_ids:
        pdir = root / pid
        features = load_features(json.loads((pdir / "features.json").read_text(encoding="utf-8")))
        entities = load_entities(json.loads((pdir / "entities.json").read_text(encoding="utf-8")))
        truth = GroundTruth.from_dict(json.loads((pdir / "truth.json").read_text(encoding="utf-8")))
        corpus.append((PartInputs(pid, features, entities), truth))
    return corpus


def _write(path: Path, doc: object) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(canonical_json(doc) + "\n", encoding="utf-8")
    tmp.replace(path)
