/** Entry point: wires the store to the DOM and keeps both panels in sync. */

import { ReviewApi } from "./api.js";
import { renderErrorBanner, renderQueue, renderSpec } from "./render.js";
import { ReviewStore } from "./store.js";

export function bootstrap(doc: Document, api = new ReviewApi()): ReviewStore {
  const store = new ReviewStore(api);
  const queueRoot = doc.getElementById("queue-root");
  const specRoot = doc.getElementById("spec-root");
  const bannerRoot = doc.getElementById("banner-root");
  const reviewerInput = doc.getElementById("reviewer-input") as HTMLInputElement | null;

  if (reviewerInput) {
    reviewerInput.addEventListener("change", () => store.setReviewer(reviewerInput.value));
  }

  const handlers = {
    onSelectCandidate: (flagId: string, featureId: string) => {
      void store.decide(flagId, "accept", featureId).then(() => store.loadQueue());
    },
    onRejectFlag: (flagId: string) => {
      void store.decide(flagId, "reject").then(() => store.loadQueue());
    },
    onApprove: () => {
      void store.approve().then(() => store.loadQueue());
    },
  };

  store.subscribe((state) => {
    if (bannerRoot) {
      bannerRoot.replaceChildren();
      if (state.error) {
        bannerRoot.appendChild(
          renderErrorBanner(doc, state.error, () => {
            void store.loadQueue();
            const spec = store.getState().spec;
            if (spec) void store.openSpec(spec.part_id);
          }),
        );
      }
    }
    if (queueRoot) {
      queueRoot.replaceChildren(
        renderQueue(doc, state.summaries, {
          onOpen: (id) => void store.openSpec(id),
        }),
      );
    }
    if (specRoot) {
      specRoot.replaceChildren();
      if (state.spec) {
        specRoot.appendChild(renderSpec(doc, state.spec, handlers, state.conflictNotice));
      } else {
        const hint = doc.createElement("p");
        hint.className = "empty-state";
        hint.textContent = "Select a specification from the queue.";
        specRoot.appendChild(hint);
      }
    }
  });

  void store.loadQueue();
  return store;
}

declare global {
  interface Window {
    specfuseStore?: ReviewStore;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.specfuseStore = bootstrap(document);
}
