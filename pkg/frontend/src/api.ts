// Thin typed client over the loop service; no model quantities are ever
// computed here — everything shown in the UI is service-reported.

import type {
  DictionarySpec,
  HistogramResponse,
  ItemDetail,
  Label,
  MetricsEntry,
  ReviewItem,
  SampledItem,
  SampleRequestBody,
  SearchHit,
  StatusSnapshot,
  SubmitResult,
} from "./types.js";

export function apiBaseFromLocation(search: string, fallback = "http://127.0.0.1:8351"): string {
  const params = new URLSearchParams(search);
  const base = params.get("api") ?? fallback;
  return base.replace(/\/+$/, "");
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      try {
        detail = (JSON.parse(text) as { error?: string }).error ?? text;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(response.status, detail);
    }
    const type = response.headers.get("Content-Type") ?? "";
    return (type.includes("json") ? JSON.parse(text) : text) as T;
  }

  search(query: string, k: number): Promise<{ results: SearchHit[] }> {
    const q = new URLSearchParams({ q: query, k: String(k) });
    return this.request("GET", `/search?${q}`);
  }

  createSession(options: {
    features: unknown[];
    split_ratio?: number;
    retrain_threshold?: number;
  }): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", options);
  }

  submitLabels(
    sessionId: string,
    labels: Array<{ row_id: number; label: Label }>,
  ): Promise<SubmitResult> {
    return this.request("POST", `/sessions/${sessionId}/labels`, { labels });
  }

  drawSample(sessionId: string, body: SampleRequestBody): Promise<{ items: SampledItem[] }> {
    return this.request("POST", `/sessions/${sessionId}/sample`, body);
  }

  featureEdit(
    sessionId: string,
    action: "add" | "edit" | "remove",
    feature: DictionarySpec | string,
  ): Promise<{ name: string; version: number; model_version: number; retrained: boolean }> {
    const body =
      typeof feature === "string" ? { action, name: feature } : { action, feature };
    return this.request("POST", `/sessions/${sessionId}/features`, body);
  }

  status(sessionId: string): Promise<StatusSnapshot> {
    return this.request("GET", `/sessions/${sessionId}/status`);
  }

  metrics(sessionId: string): Promise<{ history: MetricsEntry[] }> {
    return this.request("GET", `/sessions/${sessionId}/metrics`);
  }

  review(
    sessionId: string,
    filter: "all" | "false_positive" | "false_negative" | "disagreement",
    sort: "score" | "recency" | "row_id",
  ): Promise<{ items: ReviewItem[] }> {
    const q = new URLSearchParams({ filter, sort });
    return this.request("GET", `/sessions/${sessionId}/review?${q}`);
  }

  exportModel(sessionId: string, version: number): Promise<string> {
    return this.request("GET", `/sessions/${sessionId}/export/${version}`);
  }

  item(rowId: number, sessionId?: string): Promise<ItemDetail> {
    const suffix = sessionId ? `?session=${sessionId}` : "";
    return this.request("GET", `/items/${rowId}${suffix}`);
  }

  histogram(sessionId: string, bins: number): Promise<HistogramResponse> {
    return this.request("GET", `/sessions/${sessionId}/histogram?bins=${bins}`);
  }
}
