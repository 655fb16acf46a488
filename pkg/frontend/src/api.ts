import type { ActRequest, CreateResponse, StatePayload, StepDelta } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

/** Thin typed client for the session service HTTP endpoints. */
export class SessionClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(body: Record<string, unknown>): Promise<CreateResponse> {
    return this.request<CreateResponse>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getState(id: string): Promise<StatePayload> {
    return this.request<StatePayload>(`/sessions/${id}/state`);
  }

  act(id: string, request: ActRequest): Promise<StepDelta> {
    return this.request<StepDelta>(`/sessions/${id}/act`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  async historyCsv(id: string): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/history`);
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }
}
