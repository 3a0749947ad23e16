// Bootstrapping and event wiring for the teacher UI. One in-flight mutation
// at a time per session; reads (status polling) run freely at 1 Hz.

import { ApiClient, apiBaseFromLocation } from "./api.js";
import { LabelQueue, freshnessSummary, statusLine } from "./state.js";
import type { DictionarySpec, StatusSnapshot } from "./types.js";
import {
  renderFeaturePanel,
  renderHistogram,
  renderItemDetail,
  renderLabelingList,
  renderMetrics,
  renderReviewGrid,
  renderStatusBar,
} from "./views.js";

const api = new ApiClient(apiBaseFromLocation(window.location.search));
const queue = new LabelQueue();

let sessionId: string | null = localStorage.getItem("labelloop.session");
let lastStatus: StatusSnapshot | null = null;
let lastError = "";
let mutationInFlight = false;

function node(id: string): HTMLElement {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found;
}

function input(id: string): HTMLInputElement {
  return node(id) as HTMLInputElement;
}

async function mutate<T>(run: () => Promise<T>): Promise<T | undefined> {
  if (mutationInFlight) return undefined;
  mutationInFlight = true;
  try {
    const result = await run();
    lastError = "";
    return result;
  } catch (error) {
    lastError = error instanceof Error ? error.message : String(error);
    return undefined;
  } finally {
    mutationInFlight = false;
  }
}

function renderQueue(): void {
  renderLabelingList(
    node("labeling-list"),
    queue,
    (rowId) => {
      queue.toggle(rowId);
      renderQueue();
    },
    (rowId) => {
      void openItem(rowId);
    },
  );
  node("queue-size").textContent = queue.size
    ? `${queue.size} item(s) queued, ${queue.toggledRows().length} pre-label(s) corrected`
    : "";
}

async function openItem(rowId: number): Promise<void> {
  if (!sessionId) return;
  try {
    const detail = await api.item(rowId, sessionId);
    renderItemDetail(node("item-detail"), detail);
  } catch (error) {
    lastError = error instanceof Error ? error.message : String(error);
  }
}

async function ensureSession(): Promise<void> {
  if (sessionId) {
    try {
      await api.status(sessionId);
      return;
    } catch {
      sessionId = null; // stale id from a previous server
    }
  }
  const created = await api.createSession({
    features: [],
    split_ratio: 0.7,
    retrain_threshold: Number(input("retrain-threshold").value) || 1,
  });
  sessionId = created.session_id;
  localStorage.setItem("labelloop.session", sessionId);
}

async function refresh(): Promise<void> {
  if (!sessionId) return;
  try {
    const status = await api.status(sessionId);
    lastStatus = status;
    renderStatusBar(node("status-bar"), statusLine(status), lastError);
    const history = (await api.metrics(sessionId)).history;
    renderMetrics(node("metrics"), status, history, freshnessSummary(status.freshness));
    renderHistogram(node("histogram"), await api.histogram(sessionId, 20));
    renderFeaturePanel(
      node("feature-list"),
      status.features,
      (name) => {
        input("dict-name").value = name;
      },
      (name) => {
        void mutate(() => api.featureEdit(sessionId!, "remove", name));
      },
    );
  } catch (error) {
    lastError = error instanceof Error ? error.message : String(error);
    renderStatusBar(node("status-bar"), "service unreachable — queued work kept", lastError);
  }
}

async function refreshReview(): Promise<void> {
  if (!sessionId || !lastStatus || lastStatus.cold_start) return;
  const filter = (node("review-filter") as HTMLSelectElement).value as
    | "all"
    | "false_positive"
    | "false_negative"
    | "disagreement";
  const sort = (node("review-sort") as HTMLSelectElement).value as "score" | "recency" | "row_id";
  try {
    const review = await api.review(sessionId, filter, sort);
    renderReviewGrid(node("review-grid"), review.items, (rowId, label) => {
      void mutate(() => api.submitLabels(sessionId!, [{ row_id: rowId, label }])).then(() =>
        refreshReview(),
      );
    });
  } catch (error) {
    lastError = error instanceof Error ? error.message : String(error);
  }
}

function wire(): void {
  node("search-button").addEventListener("click", () => {
    void mutate(async () => {
      const items = await api.drawSample(sessionId!, {
        strategy: "search",
        query: input("search-query").value,
        count: Number(input("sample-count").value) || 10,
      });
      queue.load(items.items);
      renderQueue();
    });
  });

  node("sample-button").addEventListener("click", () => {
    const strategy = (node("sample-strategy") as HTMLSelectElement).value;
    void mutate(async () => {
      const items = await api.drawSample(
        sessionId!,
        strategy === "score_range"
          ? {
              strategy: "score_range",
              lo: Number(input("band-lo").value),
              hi: Number(input("band-hi").value),
              count: Number(input("sample-count").value) || 10,
            }
          : { strategy: "uniform_unlabeled", count: Number(input("sample-count").value) || 10 },
      );
      queue.load(items.items);
      renderQueue();
    });
  });

  node("submit-button").addEventListener("click", () => {
    if (!queue.size) return;
    void mutate(() => api.submitLabels(sessionId!, queue.batch())).then((ack) => {
      if (ack) {
        queue.clear(); // only drop the queue once the service acknowledged
        renderQueue();
        void refresh();
      }
    });
  });

  node("dict-save").addEventListener("click", () => {
    const name = input("dict-name").value.trim();
    const entries = input("dict-entries")
      .value.split(/[\s,;]+/)
      .filter(Boolean);
    if (!name || !entries.length) {
      lastError = "dictionary needs a name and at least one entry";
      return; // blocked client-side: empty dictionaries are never sent
    }
    const spec: DictionarySpec = { type: "dictionary", name, entries };
    const exists = lastStatus?.features.some((f) => f.name === name) ?? false;
    void mutate(() => api.featureEdit(sessionId!, exists ? "edit" : "add", spec)).then(() =>
      refresh(),
    );
  });

  node("review-refresh").addEventListener("click", () => void refreshReview());
  node("export-button").addEventListener("click", () => {
    if (!lastStatus || lastStatus.model_version === 0) return;
    void api.exportModel(sessionId!, lastStatus.model_version).then((text) => {
      const blob = new Blob([text], { type: "application/json" });
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = `model-v${lastStatus!.model_version}.json`;
      link.click();
    });
  });
}

async function boot(): Promise<void> {
  wire();
  try {
    await ensureSession();
  } catch (error) {
    lastError = error instanceof Error ? error.message : String(error);
    renderStatusBar(node("status-bar"), "cannot reach the loop service", lastError);
    return;
  }
  node("session-id").textContent = sessionId ?? "";
  await refresh();
  renderQueue();
  window.setInterval(() => void refresh(), 1000);
}

void boot();
