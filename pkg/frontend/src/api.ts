/** Typed client for the loopback service.
 *
 * Every URL is same-origin relative: the console must work with the
 * static bundle served by the service itself and never reach any other
 * host. All numbers displayed in the UI originate from these responses.
 */

import type { CaseEntry, HealthInfo, ModelInfo, ScreeningResult } from "./types.js";

export const MAX_IMAGE_BYTES = 10 * 1024 * 1024;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ServiceUnreachable extends Error {
  constructor() {
    super("service unreachable");
    this.name = "ServiceUnreachable";
  }
}

async function parseDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `${response.status} ${response.statusText}`;
}

export class ApiClient {
  constructor(private readonly fetchFn: typeof fetch = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(path, init);
    } catch {
      throw new ServiceUnreachable();
    }
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/api/v1/health");
  }

  model(): Promise<ModelInfo> {
    return this.request<ModelInfo>("/api/v1/model");
  }

  screen(image: Blob, name: string): Promise<ScreeningResult> {
    const form = new FormData();
    form.append("image", image, name);
    return this.request<ScreeningResult>("/api/v1/screen", {
      method: "POST",
      body: form,
    });
  }

  async listCases(): Promise<CaseEntry[]> {
    const body = await this.request<{ cases: CaseEntry[] }>("/api/v1/cases");
    return body.cases;
  }

  /** File a screened result as a case; omitting the decision leaves it pending. */
  createCase(
    caseId: string,
    result: ScreeningResult,
    decision?: string,
    notes?: string,
  ): Promise<CaseEntry> {
    const payload: Record<string, unknown> = { case_id: caseId, result };
    if (decision !== undefined) payload.operator_decision = decision;
    if (notes !== undefined) payload.notes = notes;
    return this.postCase(payload);
  }

  /** Record the operator decision on an existing pending case. */
  decideCase(caseId: string, decision: string, notes?: string): Promise<CaseEntry> {
    const payload: Record<string, unknown> = {
      case_id: caseId,
      operator_decision: decision,
    };
    if (notes !== undefined) payload.notes = notes;
    return this.postCase(payload);
  }

  private postCase(payload: Record<string, unknown>): Promise<CaseEntry> {
    return this.request<CaseEntry>("/api/v1/cases", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }
}
