// Wire types, mirroring the loop service API verbatim.

export type Label = "positive" | "negative";

export interface SampledItem {
  row_id: number;
  title: string;
  excerpt: string;
  score: number | null;
  pre_label: Label | null;
  moved: boolean;
}

export interface SearchHit {
  row_id: number;
  score: number;
  title: string;
  excerpt: string;
}

export interface FeatureRef {
  name: string;
  version: number;
}

export interface MetricsSide {
  auc: number | null;
  positives: number;
  negatives: number;
  recall_at_p80: number;
}

export interface MetricsEntry {
  sequence: number;
  model_version: number;
  reg_strength: number;
  train: MetricsSide;
  test: MetricsSide;
  positives: number;
  negatives: number;
  trigger: string;
}

export interface StatusSnapshot {
  session_id: string;
  dataset_id: string;
  model_version: number;
  scorer_status: "idle" | "scoring" | "interrupted";
  pending_labels: number;
  retrain_threshold: number;
  positives: number;
  negatives: number;
  cold_start: boolean;
  freshness: Record<string, number>;
  features: FeatureRef[];
  metrics_tail: MetricsEntry[];
}

export interface ReviewItem {
  row_id: number;
  label: Label;
  probability: number;
  predicted: Label;
  title: string;
}

export interface ItemDetail {
  row_id: number;
  external_id: string;
  url: string;
  title: string;
  body_text: string;
  score?: number;
  label?: Label | null;
  dictionary_hits?: Record<string, string[]>;
}

export interface SubmitResult {
  accepted: number;
  retrained: boolean;
  model_version: number;
  pending_labels: number;
}

export interface SampleRequestBody {
  strategy: "score_range" | "uniform_unlabeled" | "search";
  count: number;
  lo?: number;
  hi?: number;
  query?: string;
  exclude_labeled?: boolean;
}

export interface DictionarySpec {
  type: "dictionary";
  name: string;
  entries: string[];
}

export interface HistogramResponse {
  bins: number;
  counts: number[];
  coverage: number;
}
