/**
 * Client-side state for the review workflow.
 *
 * Decisions are optimistic: the flagged item (or mapping) is updated locally
 * before the POST resolves; a version conflict triggers a refetch and the
 * caller re-renders from server truth. Subscribers are notified on every
 * state change.
 */

import { ConflictError, ReviewApi } from "./api.js";
import type { DecisionAction, SpecSummary, UnifiedSpecDoc } from "./types.js";

export type StoreState = {
  summaries: SpecSummary[];
  spec: UnifiedSpecDoc | null;
  reviewer: string;
  error: string | null;
  busy: boolean;
  conflictNotice: boolean;
};

export type DecisionOutcome = "applied" | "conflict";

type Listener = (state: StoreState) => void;

export class ReviewStore {
  private readonly api: ReviewApi;
  private readonly listeners: Listener[] = [];
  private state: StoreState = {
    summaries: [],
    spec: null,
    reviewer: "reviewer",
    error: null,
    busy: false,
    conflictNotice: false,
  };

  constructor(api: ReviewApi) {
    this.api = api;
  }

  getState(): StoreState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      const index = this.listeners.indexOf(listener);
      if (index >= 0) this.listeners.splice(index, 1);
    };
  }

  setReviewer(name: string): void {
    this.update({ reviewer: name });
  }

  /** Queue sorted by flagged count descending, approved specs last. */
  async loadQueue(): Promise<void> {
    await this.guard(async () => {
      const summaries = await this.api.listSpecs();
      summaries.sort((a, b) => {
        if (a.approved !== b.approved) return a.approved ? 1 : -1;
        if (b.counts.flagged !== a.counts.flagged) {
          return b.counts.flagged - a.counts.flagged;
        }
        return a.id.localeCompare(b.id);
      });
      this.update({ summaries, error: null });
    });
  }

  async openSpec(id: string): Promise<void> {
    await this.guard(async () => {
      const spec = await this.api.getSpec(id);
      this.update({ spec, error: null, conflictNotice: false });
    });
  }

  /**
   * Post one decision against the loaded spec. Optimistically removes the
   * flagged item; on a stale-revision conflict the spec is refetched and the
   * decision is NOT retried (the reviewer sees fresh state and decides again).
   */
  async decide(
    targetId: string,
    action: DecisionAction,
    featureId?: string,
    rationale = "",
  ): Promise<DecisionOutcome> {
    const spec = this.state.spec;
    if (!spec) throw new Error("no spec loaded");

    const optimistic: UnifiedSpecDoc = {
      ...spec,
      flagged: spec.flagged.filter((item) => item.id !== targetId),
    };
    this.update({ spec: optimistic, busy: true });

    try {
      const updated = await this.api.postDecision(spec.part_id, {
        revision: spec.revision,
        target_id: targetId,
        action,
        reviewer: this.state.reviewer,
        feature_id: featureId ?? null,
        rationale,
      });
      this.update({ spec: updated, busy: false, error: null, conflictNotice: false });
      return "applied";
    } catch (err) {
      if (err instanceof ConflictError) {
        const fresh = await this.api.getSpec(spec.part_id);
        this.update({ spec: fresh, busy: false, conflictNotice: true });
        return "conflict";
      }
      this.update({ spec, busy: false, error: String(err) });
      throw err;
    }
  }

  async approve(): Promise<DecisionOutcome> {
    const spec = this.state.spec;
    if (!spec) throw new Error("no spec loaded");
    try {
      const updated = await this.api.approve(spec.part_id, spec.revision, this.state.reviewer);
      this.update({ spec: updated, error: null, conflictNotice: false });
      return "applied";
    } catch (err) {
      if (err instanceof ConflictError) {
        const fresh = await this.api.getSpec(spec.part_id);
        this.update({ spec: fresh, conflictNotice: true });
        return "conflict";
      }
      this.update({ error: String(err) });
      throw err;
    }
  }

  private async guard(work: () => Promise<void>): Promise<void> {
    this.update({ busy: true });
    try {
      await work();
    } catch (err) {
      this.update({ error: String(err) });
    } finally {
      this.update({ busy: false });
    }
  }

  private update(patch: Partial<StoreState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of [...this.listeners]) listener(this.state);
  }
}
