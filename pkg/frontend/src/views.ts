// DOM rendering. Every number shown here came from the service verbatim.

import { highlightSegments } from "./highlight.js";
import type { LabelQueue } from "./state.js";
import type {
  HistogramResponse,
  ItemDetail,
  MetricsEntry,
  ReviewItem,
  StatusSnapshot,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderLabelingList(
  container: HTMLElement,
  queue: LabelQueue,
  onToggle: (rowId: number) => void,
  onOpen: (rowId: number) => void,
): void {
  container.replaceChildren();
  if (queue.size === 0) {
    container.append(el("p", "empty", "No items drawn. Search or sample to fill the queue."));
    return;
  }
  for (const item of queue.items) {
    const row = el("div", "item");
    const decision = queue.decision(item.row_id);
    row.classList.add(decision);
    const badge = el("button", "label-badge", decision);
    badge.addEventListener("click", () => onToggle(item.row_id));
    const body = el("div", "item-body");
    const title = el("a", "item-title", `#${item.row_id} ${item.title}`);
    title.href = "#";
    title.addEventListener("click", (ev) => {
      ev.preventDefault();
      onOpen(item.row_id);
    });
    const meta = el(
      "span",
      "item-meta",
      item.score === null
        ? "unscored"
        : `score ${item.score.toFixed(3)}${item.moved ? " (moved out of range)" : ""}`,
    );
    body.append(title, el("div", "item-excerpt", item.excerpt), meta);
    row.append(badge, body);
    container.append(row);
  }
}

export function renderItemDetail(container: HTMLElement, detail: ItemDetail): void {
  container.replaceChildren();
  container.append(el("h3", undefined, `#${detail.row_id} ${detail.title}`));
  if (detail.score !== undefined) {
    container.append(el("p", "item-meta", `score ${detail.score.toFixed(4)}`));
  }
  const body = el("p", "item-text");
  for (const segment of highlightSegments(detail.body_text, detail.dictionary_hits ?? {})) {
    if (segment.hit) {
      const mark = el("mark", undefined, segment.text);
      mark.title = segment.dictionaries.join(", ");
      body.append(mark);
    } else {
      body.append(document.createTextNode(segment.text));
    }
  }
  container.append(body);
}

export function renderStatusBar(container: HTMLElement, line: string, error?: string): void {
  container.replaceChildren();
  container.append(el("span", undefined, line));
  if (error) container.append(el("span", "error", ` — ${error}`));
}

function metricsCell(side: { auc: number | null; recall_at_p80: number }): string {
  const auc = side.auc === null ? "—" : side.auc.toFixed(3);
  return `AUC ${auc}, R@P80 ${side.recall_at_p80.toFixed(3)}`;
}

export function renderMetrics(
  container: HTMLElement,
  status: StatusSnapshot,
  history: MetricsEntry[],
  freshnessLine: string,
): void {
  container.replaceChildren();
  container.append(
    el("p", "counts", `labels: ${status.positives} positive / ${status.negatives} negative`),
    el("p", "freshness", `score freshness: ${freshnessLine}`),
  );
  const table = el("table");
  const head = el("tr");
  for (const columnName of ["model", "trigger", "train", "test"]) {
    head.append(el("th", undefined, columnName));
  }
  table.append(head);
  for (const entry of history.slice(-8).reverse()) {
    const tr = el("tr");
    tr.append(
      el("td", undefined, `v${entry.model_version}`),
      el("td", undefined, entry.trigger),
      el("td", undefined, metricsCell(entry.train)),
      el("td", undefined, metricsCell(entry.test)),
    );
    table.append(tr);
  }
  container.append(table);
}

export function renderHistogram(container: HTMLElement, histogram: HistogramResponse): void {
  container.replaceChildren();
  const max = Math.max(1, ...histogram.counts);
  const bar = el("div", "histogram");
  histogram.counts.forEach((count, i) => {
    const column = el("div", "bar");
    column.style.height = `${Math.max(2, Math.round((48 * count) / max))}px`;
    column.title = `[${(i / histogram.bins).toFixed(2)}, ${((i + 1) / histogram.bins).toFixed(2)}): ${count}`;
    bar.append(column);
  });
  container.append(el("p", "item-meta", "score distribution"), bar);
}

export function renderFeaturePanel(
  container: HTMLElement,
  features: Array<{ name: string; version: number }>,
  onEdit: (name: string) => void,
  onRemove: (name: string) => void,
): void {
  container.replaceChildren();
  if (!features.length) {
    container.append(el("p", "empty", "no features yet"));
    return;
  }
  for (const feature of features) {
    const row = el("div", "feature");
    row.append(el("span", undefined, `${feature.name} (v${feature.version})`));
    const edit = el("button", "small", "edit");
    edit.addEventListener("click", () => onEdit(feature.name));
    const remove = el("button", "small", "remove");
    remove.addEventListener("click", () => onRemove(feature.name));
    row.append(edit, remove);
    container.append(row);
  }
}

export function renderReviewGrid(
  container: HTMLElement,
  items: ReviewItem[],
  onRelabel: (rowId: number, label: "positive" | "negative") => void,
): void {
  container.replaceChildren();
  const table = el("table");
  const head = el("tr");
  for (const columnName of ["row", "title", "label", "predicted", "p", ""]) {
    head.append(el("th", undefined, columnName));
  }
  table.append(head);
  for (const item of items) {
    const tr = el("tr", item.label === item.predicted ? "agree" : "disagree");
    const flip = el("button", "small", "flip label");
    flip.addEventListener("click", () =>
      onRelabel(item.row_id, item.label === "positive" ? "negative" : "positive"),
    );
    const cells = [
      el("td", undefined, String(item.row_id)),
      el("td", undefined, item.title),
      el("td", undefined, item.label),
      el("td", undefined, item.predicted),
      el("td", undefined, item.probability.toFixed(3)),
    ];
    const actions = el("td");
    actions.append(flip);
    tr.append(...cells, actions);
    table.append(tr);
  }
  container.append(table);
}
