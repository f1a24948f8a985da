import { describe, expect, it } from "vitest";

import { applyEvents, emptyView, formatCall } from "../src/model.js";
import type { TraceEvent } from "../src/types.js";

const PLAN_EVENT: TraceEvent = {
  tick: 0,
  type: "plan",
  reason: "initial",
  ledger_version: 0,
  calls: [
    { function: "go_to_location", args: { location: "shelf" } },
    { function: "find_concrete_name_objects", args: { object: "apple" } },
    { function: "pick", args: { object: "apple", location: "shelf" } },
  ],
};

function skill(tick: number, fn: string, status: "success" | "failure"): TraceEvent {
  return { tick, type: "skill_result", function: fn, status, origin: 0, args: {} };
}

describe("session view model", () => {
  it("renders exactly the delivered prefix", () => {
    const events: TraceEvent[] = [
      { tick: 0, type: "transcript", transcript: "bring me the apple" },
      PLAN_EVENT,
      skill(1, "go_to_location", "success"),
    ];
    const view = applyEvents(emptyView("s1"), events, 3, "executing");
    expect(view.eventCount).toBe(3);
    expect(view.cursor).toBe(3);
    expect(view.transcript).toHaveLength(1);
    expect(view.planStatuses).toEqual(["ok", "pending", "pending"]);

    // replaying the same prefix rebuilds the same view
    const replay = applyEvents(emptyView("s1"), events, 3, "executing");
    expect(replay).toEqual(view);
  });

  it("marks retries and failures on the active call", () => {
    const view = emptyView("s");
    applyEvents(view, [PLAN_EVENT, skill(1, "go_to_location", "success")], 2, "executing");
    applyEvents(view, [skill(2, "find_concrete_name_objects", "failure")], 3, "executing");
    expect(view.planStatuses).toEqual(["ok", "failed", "pending"]);
    applyEvents(
      view,
      [{ tick: 2, type: "recovery_action", mode: "M3", action: "RETRY_SKILL", ledger_version_after: 0 }],
      4,
      "executing",
    );
    expect(view.planStatuses).toEqual(["ok", "retrying", "pending"]);
    applyEvents(view, [skill(3, "find_concrete_name_objects", "success")], 5, "executing");
    expect(view.planStatuses).toEqual(["ok", "ok", "pending"]);
  });

  it("a replan resets the plan pane", () => {
    const view = emptyView("s");
    applyEvents(view, [PLAN_EVENT, skill(1, "go_to_location", "success")], 2, "executing");
    const replan: TraceEvent = {
      ...PLAN_EVENT,
      reason: "replan",
      ledger_version: 2,
      calls: [{ function: "go_to_location", args: { location: "kitchen" } }],
    };
    applyEvents(view, [replan], 3, "executing");
    expect(view.planReason).toBe("replan");
    expect(view.planCalls).toHaveLength(1);
    expect(view.planStatuses).toEqual(["pending"]);
    expect(view.ledgerVersion).toBe(2);
  });

  it("collects failure events and recovery actions", () => {
    const view = emptyView("s");
    applyEvents(
      view,
      [
        {
          tick: 2,
          type: "failure_event",
          mode: "M2",
          evidence_kind: "grounding_failure",
          detail: { reason: "UNKNOWN_LOCATION", term: "stair lake shelf" },
        },
        {
          tick: 2,
          type: "recovery_action",
          mode: "M2",
          action: "ASK_OPERATOR_REPHRASE",
          ledger_version_after: 0,
        },
      ],
      2,
      "planning",
    );
    expect(view.recoveries).toEqual([
      { tick: 2, kind: "failure", mode: "M2", text: "UNKNOWN_LOCATION" },
      { tick: 2, kind: "action", mode: "M2", text: "ASK_OPERATOR_REPHRASE" },
    ]);
  });

  it("ignores recovery-issued skills in the plan pane", () => {
    const view = emptyView("s");
    applyEvents(view, [PLAN_EVENT], 1, "executing");
    applyEvents(
      view,
      [{ tick: 4, type: "skill_result", function: "ask_location", status: "success", origin: -1, args: {} }],
      2,
      "executing",
    );
    expect(view.planStatuses).toEqual(["pending", "pending", "pending"]);
  });

  it("tracks verdicts, score, and terminal status", () => {
    const view = emptyView("s");
    applyEvents(
      view,
      [
        { tick: 9, type: "verdict", completed: false, feedback: "wrong fruit" },
        { tick: 9, type: "verdict", completed: true, feedback: "thanks" },
        { tick: 9, type: "terminal", status: "success" },
        { tick: 9, type: "score", total: 60 },
      ],
      4,
      "finished",
    );
    expect(view.transcript.map((l) => l.kind)).toEqual(["verdict", "verdict"]);
    expect(view.terminal).toBe("success");
    expect(view.score).toBe(60);
  });

  it("formats calls compactly", () => {
    expect(formatCall({ function: "pick", args: { object: "apple", location: "shelf" } })).toBe(
      "pick(apple, shelf)",
    );
  });
});
