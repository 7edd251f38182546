/** Typed client for the workbench HTTP JSON API. Every value shown in the
 * console comes from these responses; the client never derives metrics. */

export interface HealthResponse {
  status: string;
  store: string;
  records: number;
}

export interface ModelMetadata {
  model_id: string;
  kind: string;
  created_at?: string;
  training_rows?: number;
  [key: string]: unknown;
}

export interface WhatIfRequest {
  model_id: string;
  from_users: number;
  from_pods: number;
  action: string;
  caliper?: number;
  min_pairs?: number;
  epsilon_tie_ms?: number;
  trim?: string;
}

export interface WhatIfReport {
  from_regime: string;
  to_regime: string;
  action: string;
  n_pairs: number;
  mean_delta_pred_ms: number | null;
  median_delta_pred_ms: number | null;
  p95_abs_delta_ms: number | null;
  mean_delta_true_ms: number | null;
  sign_agreement: number | null;
  mae_delta_ms: number | null;
  sensitivity: string | null;
  deployment_grade: string;
  degenerate: boolean;
  report_id?: string;
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string | null,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code: string | null = null;
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as Record<string, unknown>;
    if (typeof body.code === "string") code = body.code;
    if (typeof body.detail === "string") message = body.detail;
    else if (code !== null) message = code;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/healthz");
  }

  listModels(): Promise<ModelMetadata[]> {
    return this.request<ModelMetadata[]>("/models");
  }

  runWhatIf(req: WhatIfRequest): Promise<WhatIfReport> {
    return this.request<WhatIfReport>("/whatif", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  listReports(): Promise<Record<string, unknown>[]> {
    return this.request<Record<string, unknown>[]>("/reports");
  }

  getReport(reportId: string): Promise<Record<string, unknown>> {
    return this.request<Record<string, unknown>>(
      `/reports/${encodeURIComponent(reportId)}`,
    );
  }
}
