import type { GenerateRequest, GenerateResponse, ModelInfo } from "./types.js";

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the inference service; base URL configurable at runtime. */
export class ApiClient {
  private baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async generate(request: GenerateRequest): Promise<GenerateResponse> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/generate`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(request),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let reason = `service error (${response.status})`;
      try {
        const body = await response.json();
        if (body && body.detail) {
          reason = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
        }
      } catch {
        // non-JSON error body; keep the status message
      }
      throw new ApiError(response.status, reason);
    }
    return (await response.json()) as GenerateResponse;
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchFn(`${this.baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  }

  async modelInfo(): Promise<ModelInfo> {
    const response = await this.fetchFn(`${this.baseUrl}/model-info`);
    if (!response.ok) {
      throw new ApiError(response.status, `model info unavailable (${response.status})`);
    }
    return (await response.json()) as ModelInfo;
  }
}
