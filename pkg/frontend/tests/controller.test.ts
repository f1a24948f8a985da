import { describe, expect, it, vi } from "vitest";

import { SessionApi } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import type { EventsResponse } from "../src/types.js";

function poll(body: Partial<EventsResponse>): Response {
  return new Response(
    JSON.stringify({
      events: [],
      next_cursor: 0,
      state: "executing",
      question: null,
      question_kind: null,
      ...body,
    }),
    { status: 200, headers: { "Content-Type": "application/json" } },
  );
}

describe("session controller", () => {
  it("survives a connection drop and resumes from the cursor", async () => {
    const calls: string[] = [];
    const fetchFn = vi
      .fn()
      .mockImplementationOnce(async (url: string) => {
        calls.push(url);
        return poll({
          events: [{ tick: 0, type: "transcript", transcript: "hi" }],
          next_cursor: 1,
        });
      })
      .mockImplementationOnce(async (url: string) => {
        calls.push(url);
        throw new TypeError("network down");
      })
      .mockImplementationOnce(async (url: string) => {
        calls.push(url);
        return poll({
          events: [{ tick: 1, type: "terminal", status: "success" }],
          next_cursor: 2,
          state: "finished",
        });
      });

    const api = new SessionApi("", fetchFn as unknown as typeof fetch);
    const connection: boolean[] = [];
    const controller = new SessionController(api, "sid", {
      onUpdate: () => {},
      onPrompt: () => {},
      onConnectionChange: (connected) => connection.push(connected),
    });
    const view = await controller.run(10);

    expect(view.terminal).toBe("success");
    expect(view.eventCount).toBe(2);
    expect(connection).toContain(false);
    expect(connection[connection.length - 1]).toBe(true);
    // the retry after the drop re-polled from the last delivered cursor
    expect(calls[1]).toContain("cursor=1");
    expect(calls[2]).toContain("cursor=1");
  });

  it("surfaces each outstanding question exactly once", async () => {
    let served = 0;
    const fetchFn = vi.fn().mockImplementation(async () => {
      served += 1;
      if (served <= 2) {
        return poll({
          state: "awaiting_operator",
          question: "Could you rephrase the location?",
          question_kind: "turn",
          next_cursor: 0,
        });
      }
      return poll({ state: "finished", next_cursor: 0 });
    });
    const api = new SessionApi("", fetchFn as unknown as typeof fetch);
    const prompts: string[] = [];
    const controller = new SessionController(api, "sid", {
      onUpdate: () => {},
      onPrompt: (prompt) => {
        if (prompt) prompts.push(prompt.question);
      },
    });
    await controller.run(10);
    expect(prompts).toEqual(["Could you rephrase the location?"]);
  });
});
