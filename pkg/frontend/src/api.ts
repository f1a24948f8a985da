/** Thin typed client for the session service; all state changes go through
 * the documented endpoints and nothing else. */

import type { EventsResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function check(response: Response): Promise<Response> {
  if (!response.ok) {
    let code = "http_error";
    let detail = response.statusText;
    try {
      const body = await response.json();
      code = body.code ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, code, detail);
  }
  return response;
}

export class SessionApi {
  constructor(
    private base: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  async createSession(scenario: string): Promise<string> {
    const response = await check(
      await this.fetchFn(`${this.base}/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ scenario }),
      }),
    );
    const body = await response.json();
    return body.id as string;
  }

  async postUtterance(sessionId: string, text: string): Promise<void> {
    await check(
      await this.fetchFn(`${this.base}/sessions/${sessionId}/utterance`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text }),
      }),
    );
  }

  async postVerdict(sessionId: string, completed: boolean, feedback: string): Promise<void> {
    await check(
      await this.fetchFn(`${this.base}/sessions/${sessionId}/verdict`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ completed, feedback }),
      }),
    );
  }

  async pollEvents(sessionId: string, cursor: number, waitMs = 8000): Promise<EventsResponse> {
    const response = await check(
      await this.fetchFn(
        `${this.base}/sessions/${sessionId}/events?cursor=${cursor}&wait_ms=${waitMs}`,
      ),
    );
    return (await response.json()) as EventsResponse;
  }

  async fetchTrace(sessionId: string): Promise<string> {
    const response = await check(await this.fetchFn(`${this.base}/sessions/${sessionId}/trace`));
    return await response.text();
  }
}
