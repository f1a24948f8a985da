/** Page bootstrap: create a session for the chosen scenario and run the
 * poll loop.  Base URL and scenario come from query parameters so the bundle
 * itself stays configuration-free. */

import { SessionApi } from "./api.js";
import { SessionController, type Prompt } from "./controller.js";
import { renderConnection, renderPrompt, renderView } from "./dom.js";
import type { SessionView } from "./model.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("base") ?? "";
  const scenario = params.get("scenario") ?? "tablev_6";
  const root = document.body;

  const api = new SessionApi(base);
  const sessionId = await api.createSession(scenario);
  (root.querySelector("#session-id") as HTMLElement).textContent = sessionId;

  let controller: SessionController;
  const hooks = {
    onUpdate: (view: SessionView) => renderView(root, view),
    onPrompt: (prompt: Prompt | null) =>
      renderPrompt(
        root,
        prompt,
        (text) => void controller.sendUtterance(text),
        (completed, feedback) => void controller.sendVerdict(completed, feedback),
      ),
    onConnectionChange: (connected: boolean) => renderConnection(root, connected),
  };
  controller = new SessionController(api, sessionId, hooks);

  const commandForm = root.querySelector("#command-form") as HTMLFormElement;
  commandForm.onsubmit = (event) => {
    event.preventDefault();
    const input = root.querySelector("#command-input") as HTMLInputElement;
    if (input.value.trim()) {
      void api.postUtterance(sessionId, input.value.trim());
      input.disabled = true;
      (commandForm.querySelector("button") as HTMLButtonElement).disabled = true;
    }
  };

  await controller.run();
}

window.addEventListener("DOMContentLoaded", () => {
  void boot().catch((error) => {
    const badge = document.querySelector("#connection");
    if (badge) badge.textContent = `error: ${error}`;
  });
});
