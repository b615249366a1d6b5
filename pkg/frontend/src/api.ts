/** Thin typed client over the qualification service HTTP API. */

import type { ApiErrorBody, QualifyResponse, Strategy, TraceResponse, Variant } from "./types.js";

export class ServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
  }
}

export interface QualifyRequest {
  sample_id: string;
  criterion_id: string;
  strategy?: Strategy;
  weights?: [number, number];
  threshold?: number;
  variant?: Variant;
}

export interface TreeRequest {
  sample_id: string;
  order?: string[];
  gate_criteria?: string[];
  stop_at_first_failure?: boolean;
}

async function parse<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ServiceError(response.status, body as ApiErrorBody);
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return parse<T>(response);
  }

  async health(): Promise<{ status: string; version: string; kb_snapshot_id: string }> {
    return parse(await fetch(this.baseUrl + "/health"));
  }

  async qualify(request: QualifyRequest): Promise<QualifyResponse> {
    return this.post("/qualify", request);
  }

  async qualifyTree(request: TreeRequest): Promise<TraceResponse> {
    return this.post("/qualify/tree", request);
  }

  async retrieve(criteria: string[], k: number, model = "clip", variant: Variant = "plain") {
    return this.post<{ ranked: { sample_id: string; similarity: number }[] }>("/retrieve", {
      criteria,
      k,
      model,
      variant,
    });
  }
}
