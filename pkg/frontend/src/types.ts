/** Wire types mirroring the session service's trace records. */

export interface TraceEvent {
  tick: number;
  type: string;
  [key: string]: unknown;
}

export interface EventsResponse {
  events: TraceEvent[];
  next_cursor: number;
  state: SessionState;
  question: string | null;
  question_kind: "turn" | "verdict" | null;
}

export type SessionState =
  | "awaiting_command"
  | "planning"
  | "executing"
  | "awaiting_operator"
  | "finished";

export interface PlanCall {
  function: string;
  args: Record<string, string>;
}

export type CallStatus = "pending" | "running" | "ok" | "failed" | "retrying";

export interface TranscriptLine {
  tick: number;
  speaker: string;
  text: string;
  kind: "speech" | "silence" | "verdict" | "transcript";
}

export interface RecoveryLine {
  tick: number;
  kind: "failure" | "action";
  mode: string;
  text: string;
}
