/**
 * Wire types mirroring the review service JSON documents.
 * The UI never invents state: everything rendered comes from these.
 */

export type ProvenanceEvent = {
  stage: string;
  timestamp: string;
  actor: string;
  payload_digest: string;
  payload?: Record<string, unknown>;
};

export type ScoredCandidate = {
  feature_id: string;
  entity_id: string;
  s_type: number;
  s_dim: number;
  s_ctx: number;
  h_adjust: number;
  multiplicative_factors: [string, number][];
  s_final: number;
  trace: string[];
};

export type MappingRecord = {
  id: string;
  feature_id: string;
  entity_id: string;
  method: "deterministic" | "deterministic_vlm" | "llm" | "human";
  confidence: number;
  rationale: string;
  status: "accepted" | "flagged" | "rejected" | "human_edited";
  provenance: ProvenanceEvent[];
};

export type FlaggedItem = {
  id: string;
  entity_id: string;
  reason: string;
  rationale: string;
  candidates: ScoredCandidate[];
  provenance: ProvenanceEvent[];
};

export type PipelineConfig = {
  w_t: number;
  w_d: number;
  w_c: number;
  theta_cand: number;
  rho: number;
  epsilon_mm: number;
  theta_escal: number;
  heuristics_enabled: boolean;
  context_enabled: boolean;
  vlm_selection_enabled: boolean;
  llm_escalation_enabled: boolean;
  routing_enabled: boolean;
  argmax_accept: boolean;
};

export type UnifiedSpecDoc = {
  spec_version: string;
  part_id: string;
  revision: number;
  mappings: MappingRecord[];
  flagged: FlaggedItem[];
  unmapped_entities: { entity_id: string; reason: string }[];
  unconstrained_features: string[];
  approval: { reviewer: string; timestamp: string } | null;
  config_snapshot: PipelineConfig;
  review_log: ProvenanceEvent[];
};

export type SpecSummary = {
  id: string;
  part_id: string;
  revision: number;
  approved: boolean;
  counts: {
    accepted: number;
    flagged: number;
    unmapped: number;
    unconstrained: number;
  };
};

export type DecisionAction = "accept" | "reject" | "edit";

export type DecisionBody = {
  revision: number;
  target_id: string;
  action: DecisionAction;
  reviewer: string;
  feature_id?: string | null;
  rationale?: string;
};

/** Approve is enabled exactly when nothing is flagged and nothing approved yet. */
export function approveEnabled(spec: UnifiedSpecDoc): boolean {
  return spec.flagged.length === 0 && spec.approval === null;
}

/** Weighted additive segments of one candidate's score, from served values only. */
export function scoreSegments(
  candidate: ScoredCandidate,
  config: PipelineConfig,
): { label: string; value: number }[] {
  const ctxWeight = config.context_enabled ? config.w_c : 0;
  return [
    { label: "type", value: config.w_t * candidate.s_type },
    { label: "dim", value: config.w_d * candidate.s_dim },
    { label: "ctx", value: ctxWeight * candidate.s_ctx },
    { label: "h", value: candidate.h_adjust },
  ];
}
