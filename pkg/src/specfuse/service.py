"""HTTP review service for the single human-in-the-loop stage.

Serves proposed unified specs, accepts reviewer decisions, enforces the
approval contract (no approval while flagged items remain), and persists
every revision as its own JSON document for auditability. Concurrency is
optimistic: decisions carry the revision they were made against; a stale
revision gets a retryable conflict response.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .emit import Clock, ReviewDecision, ReviewError, SystemClock, apply_review_decisions
from .model import UnifiedSpec


class SpecStore:
    """Directory of versioned spec documents: <store>/<part_id>/v0000.json."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def _versions(self, spec_id: str) -> list[Path]:
        d = self.root / spec_id
        if not d.is_dir():
            return []
        return sorted(d.glob("v*.json"))

    def load(self, spec_id: str) -> Optional[UnifiedSpec]:
        versions = self._versions(spec_id)
        if not versions:
            return None
        return UnifiedSpec.from_json(versions[-1].read_text(encoding="utf-8"))

    def save(self, spec: UnifiedSpec) -> None:
        d = self.root / spec.part_id
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"v{spec.revision:04d}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(spec.to_json() + "\n", encoding="utf-8")
        tmp.replace(path)

    def mutate(self, spec_id: str, expected_revision: int, decisions: list[ReviewDecision],
               clock: Clock) -> UnifiedSpec:
        """Apply decisions under the store lock with an optimistic version check."""
        with self._lock:
            spec = self.load(spec_id)
            if spec is None:
                raise KeyError(spec_id)
            if spec.revision != expected_revision:
                raise ConflictError(spec.revision)
            updated = apply_review_decisions(spec, decisions, clock)
            self.save(updated)
            return updated


class ConflictError(Exception):
    def __init__(self, current_revision: int):
        super().__init__(f"stale revision; current is {current_revision}")
        self.current_revision = current_revision


def _summary(spec: UnifiedSpec) -> dict[str, Any]:
    return {
        "id": spec.part_id,
        "part_id": spec.part_id,
        "revision": spec.revision,
        "approved": spec.approved,
        "counts": {
            "accepted": len(spec.active_mappings),
            "flagged": len(spec.flagged),
            "unmapped": len(spec.unmapped_entities),
            "unconstrained": len(spec.unconstrained_features),
        },
    }


class DecisionBody(BaseModel):
    revision: int
    target_id: str
    action: str
    reviewer: str
    feature_id: Optional[str] = None
    rationale: str = ""


class ApproveBody(BaseModel):
    revision: int
    reviewer: str
    rationale: str = ""


def create_app(
    store: SpecStore, ui_dir: Optional[Path] = None, clock: Optional[Clock] = None
) -> FastAPI:
    app = FastAPI(title="specfuse review service")
    clk = clock or SystemClock()

    @app.get("/api/specs")
    def list_specs() -> list[dict[str, Any]]:
        summaries = []
        for spec_id in store.list_ids():
            spec = store.load(spec_id)
            if spec is not None:
                summaries.append(_summary(spec))
        return summaries

    @app.get("/api/specs/{spec_id}")
    def get_spec(spec_id: str) -> dict[str, Any]:
        spec = store.load(spec_id)
        if spec is None:
            raise HTTPException(status_code=404, detail=f"unknown spec {spec_id!r}")
        return spec.to_dict()

    def _mutate(spec_id: str, revision: int, decisions: list[ReviewDecision]):
        try:
            updated = store.mutate(spec_id, revision, decisions, clk)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown spec {spec_id!r}")
        except ConflictError as exc:
            return JSONResponse(
                status_code=409,
                content={
                    "error": "version_conflict",
                    "current_revision": exc.current_revision,
                },
            )
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return updated.to_dict()

    @app.post("/api/specs/{spec_id}/decisions")
    def post_decision(spec_id: str, body: DecisionBody):
        decision = ReviewDecision(
            action=body.action,
            reviewer=body.reviewer,
            target_id=body.target_id,
            feature_id=body.feature_id,
            rationale=body.rationale,
        )
        return _mutate(spec_id, body.revision, [decision])

    @app.post("/api/specs/{spec_id}/approve")
    def post_approve(spec_id: str, body: ApproveBody):
        decision = ReviewDecision(
            action="approve", reviewer=body.reviewer, rationale=body.rationale
        )
        return _mutate(spec_id, body.revision, [decision])

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
