/**
 * DOM builders: createElement + textContent only, no innerHTML with served
 * data. Every displayed number comes straight from the service document.
 */

import { approveEnabled, scoreSegments } from "./types.js";
import type {
  FlaggedItem,
  MappingRecord,
  PipelineConfig,
  ScoredCandidate,
  SpecSummary,
  UnifiedSpecDoc,
} from "./types.js";

export type QueueHandlers = { onOpen: (id: string) => void };

export type SpecHandlers = {
  onSelectCandidate: (flagId: string, featureId: string) => void;
  onRejectFlag: (flagId: string) => void;
  onApprove: () => void;
};

function el(
  doc: Document,
  tag: string,
  className?: string,
  text?: string,
): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderErrorBanner(
  doc: Document,
  message: string,
  onRetry: () => void,
): HTMLElement {
  const banner = el(doc, "div", "error-banner");
  banner.appendChild(el(doc, "span", "error-message", message));
  const retry = el(doc, "button", "retry-button", "Retry") as HTMLButtonElement;
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  return banner;
}

export function renderQueue(
  doc: Document,
  summaries: SpecSummary[],
  handlers: QueueHandlers,
): HTMLElement {
  const root = el(doc, "div", "queue");
  if (summaries.length === 0) {
    root.appendChild(el(doc, "p", "empty-state", "No specifications awaiting review."));
    return root;
  }
  const pending = summaries.filter((s) => !s.approved);
  const done = summaries.filter((s) => s.approved);

  const list = el(doc, "ul", "queue-list");
  for (const summary of pending) list.appendChild(queueRow(doc, summary, handlers));
  root.appendChild(list);

  if (done.length > 0) {
    root.appendChild(el(doc, "h3", "queue-done-heading", "Done"));
    const doneList = el(doc, "ul", "queue-list queue-done");
    for (const summary of done) doneList.appendChild(queueRow(doc, summary, handlers));
    root.appendChild(doneList);
  }
  return root;
}

function queueRow(doc: Document, summary: SpecSummary, handlers: QueueHandlers): HTMLElement {
  const row = el(doc, "li", "queue-row");
  row.dataset.specId = summary.id;
  const open = el(doc, "button", "queue-open", summary.part_id) as HTMLButtonElement;
  open.addEventListener("click", () => handlers.onOpen(summary.id));
  row.appendChild(open);
  row.appendChild(
    el(
      doc,
      "span",
      "queue-counts",
      `${summary.counts.flagged} flagged / ${summary.counts.accepted} accepted / ` +
        `${summary.counts.unmapped} unmapped`,
    ),
  );
  if (summary.approved) row.appendChild(el(doc, "span", "queue-approved", "approved"));
  return row;
}

export function renderScoreBar(
  doc: Document,
  candidate: ScoredCandidate,
  config: PipelineConfig,
): HTMLElement {
  const bar = el(doc, "div", "score-bar");
  bar.dataset.sFinal = String(candidate.s_final);
  const segments = scoreSegments(candidate, config);
  const scale = Math.max(candidate.s_final, segments.reduce((acc, s) => acc + s.value, 0), 1e-9);
  for (const segment of segments) {
    if (segment.value <= 0) continue;
    const div = el(doc, "div", `score-segment score-${segment.label}`);
    div.dataset.value = String(segment.value);
    div.style.width = `${(100 * segment.value) / scale}%`;
    div.title = `${segment.label} = ${segment.value.toFixed(3)}`;
    bar.appendChild(div);
  }
  for (const [label, factor] of candidate.multiplicative_factors) {
    bar.appendChild(el(doc, "span", "score-factor", `x${factor} ${label}`));
  }
  return bar;
}

function candidateCard(
  doc: Document,
  flag: FlaggedItem,
  candidate: ScoredCandidate,
  config: PipelineConfig,
  handlers: SpecHandlers,
): HTMLElement {
  const card = el(doc, "div", "candidate-card");
  card.dataset.featureId = candidate.feature_id;
  const head = el(doc, "div", "candidate-head");
  head.appendChild(el(doc, "span", "candidate-feature", candidate.feature_id));
  head.appendChild(el(doc, "span", "candidate-score", candidate.s_final.toFixed(4)));
  card.appendChild(head);
  card.appendChild(renderScoreBar(doc, candidate, config));

  const traceList = el(doc, "ul", "candidate-trace");
  for (const step of candidate.trace) traceList.appendChild(el(doc, "li", undefined, step));
  card.appendChild(traceList);

  const select = el(doc, "button", "candidate-select", `Map to ${candidate.feature_id}`) as
    HTMLButtonElement;
  select.addEventListener("click", () =>
    handlers.onSelectCandidate(flag.id, candidate.feature_id),
  );
  card.appendChild(select);
  return card;
}

function flaggedCard(
  doc: Document,
  flag: FlaggedItem,
  config: PipelineConfig,
  handlers: SpecHandlers,
): HTMLElement {
  const card = el(doc, "div", "flagged-item");
  card.dataset.flagId = flag.id;
  const head = el(doc, "div", "flagged-head");
  head.appendChild(el(doc, "span", "flagged-entity", flag.entity_id));
  head.appendChild(el(doc, "span", "flagged-reason", flag.reason));
  if (flag.rationale) head.appendChild(el(doc, "span", "flagged-rationale", flag.rationale));
  card.appendChild(head);

  const candidates = el(doc, "div", "flagged-candidates");
  for (const candidate of flag.candidates) {
    candidates.appendChild(candidateCard(doc, flag, candidate, config, handlers));
  }
  card.appendChild(candidates);

  const reject = el(doc, "button", "flag-reject", "Reject (leave unmapped)") as HTMLButtonElement;
  reject.addEventListener("click", () => handlers.onRejectFlag(flag.id));
  card.appendChild(reject);
  return card;
}

function mappingRow(doc: Document, mapping: MappingRecord): HTMLElement {
  const row = el(doc, "li", `mapping-row mapping-${mapping.status}`);
  row.dataset.mappingId = mapping.id;
  row.appendChild(el(doc, "span", "mapping-pair", `${mapping.feature_id} ↔ ${mapping.entity_id}`));
  row.appendChild(el(doc, "span", "mapping-method", mapping.method));
  row.appendChild(el(doc, "span", "mapping-confidence", mapping.confidence.toFixed(3)));
  row.appendChild(el(doc, "span", "mapping-status", mapping.status));
  return row;
}

export function renderSpec(
  doc: Document,
  spec: UnifiedSpecDoc,
  handlers: SpecHandlers,
  conflictNotice = false,
): HTMLElement {
  const root = el(doc, "div", "spec-view");
  root.dataset.partId = spec.part_id;
  root.appendChild(el(doc, "h2", "spec-title", `Part ${spec.part_id} (rev ${spec.revision})`));

  if (conflictNotice) {
    root.appendChild(
      el(doc, "div", "conflict-notice",
         "Another decision landed first; showing the refreshed document."),
    );
  }

  const flaggedSection = el(doc, "section", "flagged-section");
  flaggedSection.appendChild(
    el(doc, "h3", undefined, `Flagged for review (${spec.flagged.length})`),
  );
  if (spec.flagged.length === 0) {
    flaggedSection.appendChild(el(doc, "p", "empty-state", "Nothing flagged."));
  }
  for (const flag of spec.flagged) {
    flaggedSection.appendChild(flaggedCard(doc, flag, spec.config_snapshot, handlers));
  }
  root.appendChild(flaggedSection);

  const mappingsSection = el(doc, "section", "mappings-section");
  mappingsSection.appendChild(el(doc, "h3", undefined, `Mappings (${spec.mappings.length})`));
  const list = el(doc, "ul", "mapping-list");
  for (const mapping of spec.mappings) list.appendChild(mappingRow(doc, mapping));
  mappingsSection.appendChild(list);
  root.appendChild(mappingsSection);

  const unmappedSection = el(doc, "section", "unmapped-section");
  unmappedSection.appendChild(
    el(doc, "h3", undefined, `Unmapped entities (${spec.unmapped_entities.length})`),
  );
  const unmappedList = el(doc, "ul", "unmapped-list");
  for (const item of spec.unmapped_entities) {
    unmappedList.appendChild(
      el(doc, "li", "unmapped-row", `${item.entity_id}: ${item.reason}`),
    );
  }
  unmappedSection.appendChild(unmappedList);
  root.appendChild(unmappedSection);

  const footer = el(doc, "footer", "spec-footer");
  const approve = el(doc, "button", "approve-button", "Approve specification") as
    HTMLButtonElement;
  approve.disabled = !approveEnabled(spec);
  approve.addEventListener("click", handlers.onApprove);
  footer.appendChild(approve);
  if (spec.approval) {
    footer.appendChild(
      el(doc, "span", "approval-note",
         `Approved by ${spec.approval.reviewer} at ${spec.approval.timestamp}`),
    );
  }
  root.appendChild(footer);
  return root;
}
