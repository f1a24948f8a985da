import { describe, expect, it, vi } from "vitest";

import { ApiError, SessionApi } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("session api client", () => {
  it("creates sessions and returns the id", async () => {
    const fetchFn = vi.fn().mockResolvedValue(jsonResponse({ id: "abc", state: "awaiting_command" }));
    const api = new SessionApi("http://host", fetchFn as unknown as typeof fetch);
    expect(await api.createSession("tablev_6")).toBe("abc");
    expect(fetchFn).toHaveBeenCalledWith(
      "http://host/sessions",
      expect.objectContaining({ method: "POST" }),
    );
  });

  it("polls events with the cursor", async () => {
    const fetchFn = vi
      .fn()
      .mockResolvedValue(
        jsonResponse({ events: [], next_cursor: 5, state: "executing", question: null, question_kind: null }),
      );
    const api = new SessionApi("", fetchFn as unknown as typeof fetch);
    const body = await api.pollEvents("abc", 5, 100);
    expect(body.next_cursor).toBe(5);
    expect(fetchFn).toHaveBeenCalledWith("/sessions/abc/events?cursor=5&wait_ms=100");
  });

  it("raises typed errors with the machine-readable code", async () => {
    const fetchFn = vi
      .fn()
      .mockImplementation(async () =>
        jsonResponse({ code: "session_finished", detail: "done" }, 409),
      );
    const api = new SessionApi("", fetchFn as unknown as typeof fetch);
    await expect(api.postUtterance("abc", "hello")).rejects.toThrowError(ApiError);
    await expect(api.postUtterance("abc", "hello")).rejects.toMatchObject({
      status: 409,
      code: "session_finished",
    });
  });
});
