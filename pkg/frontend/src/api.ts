// Thin typed client for the chat service; all errors arrive as
// {"error": {"code", "message"}} and surface as ApiError.

import type { GenerateRequest, GenerateResponse, Health, SessionHistory } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "network_error", `cannot reach ${this.baseUrl}: ${String(err)}`);
    }
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const error = (payload as { error?: { code?: string; message?: string } } | null)?.error;
      throw new ApiError(
        response.status,
        error?.code ?? "unknown_error",
        error?.message ?? `HTTP ${response.status}`,
      );
    }
    return payload as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("GET", "/healthz");
  }

  createSession(): Promise<{ id: string }> {
    return this.request<{ id: string }>("POST", "/sessions");
  }

  getSession(id: string): Promise<SessionHistory> {
    return this.request<SessionHistory>("GET", `/sessions/${id}`);
  }

  sendMessage(id: string, body: GenerateRequest): Promise<GenerateResponse> {
    return this.request<GenerateResponse>("POST", `/sessions/${id}/messages`, body);
  }

  resample(id: string, body: GenerateRequest = {}): Promise<GenerateResponse> {
    return this.request<GenerateResponse>("POST", `/sessions/${id}/resample`, body);
  }
}
