/** Pure view model: folds delivered trace events into the panes the console
 * renders.  The rendered lists are a function of the delivered prefix only,
 * so replaying the same events always rebuilds the same view. */

import type {
  CallStatus,
  PlanCall,
  RecoveryLine,
  SessionState,
  TraceEvent,
  TranscriptLine,
} from "./types.js";

export interface SessionView {
  sessionId: string;
  state: SessionState;
  cursor: number;
  transcript: TranscriptLine[];
  planCalls: PlanCall[];
  planStatuses: CallStatus[];
  planReason: string;
  recoveries: RecoveryLine[];
  ledgerVersion: number;
  score: number | null;
  terminal: string | null;
  eventCount: number;
}

export function emptyView(sessionId: string): SessionView {
  return {
    sessionId,
    state: "awaiting_command",
    cursor: 0,
    transcript: [],
    planCalls: [],
    planStatuses: [],
    planReason: "",
    recoveries: [],
    ledgerVersion: 0,
    score: null,
    terminal: null,
    eventCount: 0,
  };
}

export function formatCall(call: PlanCall): string {
  const args = Object.values(call.args).join(", ");
  return `${call.function}(${args})`;
}

function firstActiveIndex(view: SessionView): number {
  for (let i = 0; i < view.planStatuses.length; i++) {
    const status = view.planStatuses[i];
    if (status !== "ok") return i;
  }
  return -1;
}

function applyOne(view: SessionView, event: TraceEvent): void {
  switch (event.type) {
    case "transcript": {
      view.transcript.push({
        tick: event.tick,
        speaker: "robot hears",
        text: String(event.transcript ?? ""),
        kind: "transcript",
      });
      break;
    }
    case "dialogue_turn": {
      const silent = event.no_response === true;
      view.transcript.push({
        tick: event.tick,
        speaker: String(event.speaker ?? "?"),
        text: silent ? "(no response)" : String(event.text ?? ""),
        kind: silent ? "silence" : "speech",
      });
      break;
    }
    case "plan": {
      view.planCalls = (event.calls as PlanCall[]) ?? [];
      view.planStatuses = view.planCalls.map(() => "pending");
      view.planReason = String(event.reason ?? "");
      view.ledgerVersion = Number(event.ledger_version ?? view.ledgerVersion);
      break;
    }
    case "skill_result": {
      if ((event.origin as number) < 0) break; // recovery-issued, not a plan call
      const index = firstActiveIndex(view);
      if (index < 0) break;
      if (event.status === "success") {
        view.planStatuses[index] = "ok";
      } else {
        view.planStatuses[index] = "failed";
      }
      break;
    }
    case "recovery_action": {
      const action = String(event.action ?? "");
      view.recoveries.push({
        tick: event.tick,
        kind: "action",
        mode: String(event.mode ?? ""),
        text: action,
      });
      if (action === "RETRY_SKILL") {
        const index = firstActiveIndex(view);
        if (index >= 0) view.planStatuses[index] = "retrying";
      }
      view.ledgerVersion = Number(event.ledger_version_after ?? view.ledgerVersion);
      break;
    }
    case "failure_event": {
      const detail = (event.detail ?? {}) as Record<string, unknown>;
      const summary =
        (detail.reason as string) ?? (detail.function as string) ?? String(event.evidence_kind);
      view.recoveries.push({
        tick: event.tick,
        kind: "failure",
        mode: String(event.mode ?? ""),
        text: summary,
      });
      break;
    }
    case "ledger_update": {
      view.ledgerVersion = Number(event.version ?? view.ledgerVersion);
      break;
    }
    case "verdict": {
      view.transcript.push({
        tick: event.tick,
        speaker: "verdict",
        text: event.completed ? "completed" : `not completed: ${event.feedback ?? ""}`,
        kind: "verdict",
      });
      break;
    }
    case "score": {
      view.score = Number(event.total ?? 0);
      break;
    }
    case "terminal": {
      view.terminal = String(event.status ?? "");
      break;
    }
    default:
      break;
  }
  view.eventCount += 1;
}

/** Fold newly delivered events into the view; events must be the contiguous
 * slice starting at the view's cursor. */
export function applyEvents(
  view: SessionView,
  events: TraceEvent[],
  nextCursor: number,
  state: SessionState,
): SessionView {
  for (const event of events) {
    applyOne(view, event);
  }
  view.cursor = nextCursor;
  view.state = state;
  return view;
}
