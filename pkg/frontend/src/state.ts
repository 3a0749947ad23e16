// Client-side session state: the labeling queue and status bookkeeping.
// Decisions start at the service's pre-labels; the teacher corrects the
// wrong ones and submits the batch. Nothing is dropped until acknowledged.

import type { Label, SampledItem, StatusSnapshot } from "./types.js";

export function assertPreLabelConsistent(item: SampledItem): void {
  // service invariant, checked defensively: pre-label matches the displayed
  // score at threshold 0.5
  if (item.score === null || item.pre_label === null) return;
  const expected: Label = item.score >= 0.5 ? "positive" : "negative";
  if (item.pre_label !== expected) {
    throw new Error(
      `inconsistent pre-label for row ${item.row_id}: score ${item.score} vs ${item.pre_label}`,
    );
  }
}

export class LabelQueue {
  items: SampledItem[] = [];
  private decisions = new Map<number, Label>();

  load(items: SampledItem[]): void {
    items.forEach(assertPreLabelConsistent);
    this.items = items;
    this.decisions = new Map();
    for (const item of items) {
      this.decisions.set(item.row_id, item.pre_label ?? "negative");
    }
  }

  decision(rowId: number): Label {
    const label = this.decisions.get(rowId);
    if (label === undefined) throw new Error(`row ${rowId} is not in the queue`);
    return label;
  }

  toggle(rowId: number): Label {
    const next: Label = this.decision(rowId) === "positive" ? "negative" : "positive";
    this.decisions.set(rowId, next);
    return next;
  }

  toggledRows(): number[] {
    return this.items
      .filter((item) => item.pre_label !== null && this.decision(item.row_id) !== item.pre_label)
      .map((item) => item.row_id);
  }

  batch(): Array<{ row_id: number; label: Label }> {
    return this.items.map((item) => ({ row_id: item.row_id, label: this.decision(item.row_id) }));
  }

  get size(): number {
    return this.items.length;
  }

  clear(): void {
    this.items = [];
    this.decisions = new Map();
  }
}

// The status bar: which teacher actions are not yet reflected in the model.
export function statusLine(status: StatusSnapshot): string {
  const parts = [`model v${status.model_version}`];
  if (status.cold_start) {
    parts.push("cold start: label both classes via search or uniform sampling");
  }
  if (status.pending_labels > 0) {
    parts.push(`${status.pending_labels} label(s) not yet reflected`);
  }
  parts.push(
    status.scorer_status === "scoring"
      ? "scoring in progress"
      : status.scorer_status === "interrupted"
        ? "scoring interrupted"
        : "scores quiescent",
  );
  return parts.join(" · ");
}

export function freshnessSummary(freshness: Record<string, number>): string {
  const total = Object.values(freshness).reduce((a, b) => a + b, 0);
  const parts = Object.entries(freshness)
    .sort((a, b) => Number(a[0]) - Number(b[0]))
    .map(([version, count]) => `v${version}: ${((100 * count) / total).toFixed(1)}%`);
  return parts.join(", ");
}
