/** Poll loop: keeps a SessionView current and surfaces the outstanding
 * operator question.  One loop per open session view; user input is
 * serialized through the outstanding-question state. */

import { SessionApi } from "./api.js";
import { applyEvents, emptyView, type SessionView } from "./model.js";

export interface Prompt {
  kind: "turn" | "verdict";
  question: string;
}

export interface ControllerHooks {
  onUpdate(view: SessionView): void;
  onPrompt(prompt: Prompt | null): void;
  onConnectionChange?(connected: boolean): void;
}

export class SessionController {
  readonly view: SessionView;
  private stopped = false;
  private lastPromptKey = "";

  constructor(
    private api: SessionApi,
    sessionId: string,
    private hooks: ControllerHooks,
  ) {
    this.view = emptyView(sessionId);
  }

  stop(): void {
    this.stopped = true;
  }

  async sendUtterance(text: string): Promise<void> {
    await this.api.postUtterance(this.view.sessionId, text);
    this.hooks.onPrompt(null);
    this.lastPromptKey = "";
  }

  async sendVerdict(completed: boolean, feedback: string): Promise<void> {
    await this.api.postVerdict(this.view.sessionId, completed, feedback);
    this.hooks.onPrompt(null);
    this.lastPromptKey = "";
  }

  /** Run until the session finishes; resumes from the cursor after errors. */
  async run(pollWaitMs = 8000): Promise<SessionView> {
    while (!this.stopped) {
      let body;
      try {
        body = await this.api.pollEvents(this.view.sessionId, this.view.cursor, pollWaitMs);
        this.hooks.onConnectionChange?.(true);
      } catch (error) {
        this.hooks.onConnectionChange?.(false);
        await new Promise((resolve) => setTimeout(resolve, 500));
        continue;
      }
      applyEvents(this.view, body.events, body.next_cursor, body.state);
      this.hooks.onUpdate(this.view);

      if (body.state === "awaiting_operator" && body.question && body.question_kind) {
        const key = `${body.question_kind}:${body.question}:${this.view.cursor}`;
        if (key !== this.lastPromptKey) {
          this.lastPromptKey = key;
          this.hooks.onPrompt({ kind: body.question_kind, question: body.question });
        }
      }
      if (body.state === "finished") {
        this.hooks.onPrompt(null);
        return this.view;
      }
    }
    return this.view;
  }
}
