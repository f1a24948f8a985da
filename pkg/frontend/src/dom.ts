/** DOM rendering: a thin layer over the view model. */

import { formatCall, type SessionView } from "./model.js";
import type { Prompt } from "./controller.js";

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderView(root: HTMLElement, view: SessionView): void {
  const badge = root.querySelector("#state-badge") as HTMLElement;
  badge.textContent = view.terminal ? `finished: ${view.terminal}` : view.state;
  badge.dataset.state = view.terminal ?? view.state;

  const ledger = root.querySelector("#ledger-version") as HTMLElement;
  ledger.textContent = `prompt ledger v${view.ledgerVersion}`;

  const score = root.querySelector("#score") as HTMLElement;
  score.textContent = view.score === null ? "" : `score ${view.score}`;

  const transcript = root.querySelector("#transcript") as HTMLElement;
  transcript.replaceChildren(
    ...view.transcript.map((line) => {
      const row = el("div", `line ${line.kind}`);
      row.appendChild(el("span", "who", line.speaker));
      row.appendChild(el("span", "what", line.text));
      return row;
    }),
  );
  transcript.scrollTop = transcript.scrollHeight;

  const plan = root.querySelector("#plan") as HTMLElement;
  const title = view.planReason ? `plan (${view.planReason})` : "plan";
  (root.querySelector("#plan-title") as HTMLElement).textContent = title;
  plan.replaceChildren(
    ...view.planCalls.map((call, i) => {
      const row = el("div", `call ${view.planStatuses[i]}`);
      row.appendChild(el("span", "status", view.planStatuses[i]));
      row.appendChild(el("span", "text", formatCall(call)));
      return row;
    }),
  );

  const recoveries = root.querySelector("#recovery") as HTMLElement;
  recoveries.replaceChildren(
    ...view.recoveries.map((line) => {
      const row = el("div", `rec ${line.kind}`);
      row.appendChild(el("span", "mode", line.mode));
      row.appendChild(el("span", "text", line.text));
      return row;
    }),
  );
}

export function renderPrompt(
  root: HTMLElement,
  prompt: Prompt | null,
  submitTurn: (text: string) => void,
  submitVerdict: (completed: boolean, feedback: string) => void,
): void {
  const box = root.querySelector("#prompt-box") as HTMLElement;
  box.replaceChildren();
  if (prompt === null) {
    box.classList.add("hidden");
    return;
  }
  box.classList.remove("hidden");
  box.appendChild(el("div", "question", prompt.question));

  const input = document.createElement("input");
  input.type = "text";
  input.id = "prompt-input";
  input.placeholder = prompt.kind === "turn" ? "answer the robot" : "optional feedback";
  box.appendChild(input);

  if (prompt.kind === "turn") {
    const send = el("button", "send", "Send") as HTMLButtonElement;
    send.onclick = () => submitTurn(input.value);
    input.onkeydown = (event) => {
      if (event.key === "Enter") submitTurn(input.value);
    };
    box.appendChild(send);
  } else {
    const yes = el("button", "yes", "Completed") as HTMLButtonElement;
    yes.onclick = () => submitVerdict(true, input.value);
    const no = el("button", "no", "Not completed") as HTMLButtonElement;
    no.onclick = () => submitVerdict(false, input.value);
    box.appendChild(yes);
    box.appendChild(no);
  }
  input.focus();
}

export function renderConnection(root: HTMLElement, connected: boolean): void {
  const badge = root.querySelector("#connection") as HTMLElement;
  badge.textContent = connected ? "live" : "stale, reconnecting";
  badge.classList.toggle("stale", !connected);
}
