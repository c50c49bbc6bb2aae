/**
 * Thin fetch client for the review service. Conflict responses (stale
 * revision) surface as ConflictError so the store can refetch and retry.
 */

import type { DecisionBody, SpecSummary, UnifiedSpecDoc } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export class ConflictError extends Error {
  readonly currentRevision: number;

  constructor(currentRevision: number) {
    super(`stale revision; current is ${currentRevision}`);
    this.currentRevision = currentRevision;
  }
}

export class ReviewApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async listSpecs(): Promise<SpecSummary[]> {
    return this.getJson(`${this.base}/api/specs`);
  }

  async getSpec(id: string): Promise<UnifiedSpecDoc> {
    return this.getJson(`${this.base}/api/specs/${encodeURIComponent(id)}`);
  }

  async postDecision(id: string, body: DecisionBody): Promise<UnifiedSpecDoc> {
    return this.postJson(`${this.base}/api/specs/${encodeURIComponent(id)}/decisions`, body);
  }

  async approve(id: string, revision: number, reviewer: string): Promise<UnifiedSpecDoc> {
    return this.postJson(`${this.base}/api/specs/${encodeURIComponent(id)}/approve`, {
      revision,
      reviewer,
    });
  }

  private async getJson<T>(url: string): Promise<T> {
    const response = await this.fetchFn(url);
    return this.decode(response);
  }

  private async postJson<T>(url: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.decode(response);
  }

  private async decode<T>(response: Response): Promise<T> {
    if (response.status === 409) {
      const payload = (await response.json()) as { current_revision: number };
      throw new ConflictError(payload.current_revision);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}
