/** Wire types for the qualification service the console consumes. */

export type Label = "positive" | "negative";
export type Strategy = "zscore_sum" | "weighted" | "vote";
export type Variant = "plain" | "color";

export interface FusionConfigEcho {
  strategy: Strategy;
  weights: [number, number];
  threshold: number;
  sigma_convention: string;
  zscore_population: string;
  population_batch_id: string;
}

export interface QualifyResponse {
  sample_id: string;
  criterion_id: string;
  delta_text: number;
  delta_image: number;
  z_text: number;
  z_image: number;
  combined: number;
  label: Label;
  threshold: number;
  config: FusionConfigEcho;
  prompts: { positive: string; negative: string; variant: Variant };
  nearest_positive: { sample_id: string; similarity: number } | null;
  nearest_negative: { sample_id: string; similarity: number } | null;
  warnings: string[];
  kb_snapshot_id: string;
}

export interface TraceStepDoc {
  criterion_id: string;
  verdict: "pass" | "fail";
  score?: {
    z_text: number;
    z_image: number;
    combined: number;
    label: Label;
    threshold: number;
    strategy: Strategy;
    batch_id: string;
  };
  error?: string;
}

export interface TraceResponse {
  sample_id: string;
  steps: TraceStepDoc[];
  final: "accept" | "reject";
  short_circuited: boolean;
  config_hash: string;
  kb_snapshot_id: string;
}

export interface ApiErrorBody {
  code: "bad_request" | "not_found" | "conflict" | "unprocessable" | "internal";
  message: string;
  detail?: unknown;
}

/** One cached verdict row; everything the panel needs to re-render offline. */
export interface VerdictRow {
  criterionId: string;
  zText: number;
  zImage: number;
  combined: number;
  label: Label;
  positivePrompt: string;
  negativePrompt: string;
  populationBatchId: string;
}
