import type { ApiClient } from "../api.js";
import type { SessionInfo } from "../types.js";
import { el, clear, errorBox } from "../dom.js";

/** Token sign-in pane; calls onLogin once the session is accepted. */
export function renderLogin(
  root: HTMLElement,
  api: ApiClient,
  onLogin: (session: SessionInfo, token: string) => void,
): void {
  clear(root);
  const errors = errorBox();
  const tokenInput = el("input", {
    type: "password",
    placeholder: "session token",
    class: "login-token",
    autofocus: true,
  }) as HTMLInputElement;

  async function submit(): Promise<void> {
    errors.hide();
    const token = tokenInput.value.trim();
    if (!token) {
      errors.show("enter a session token");
      return;
    }
    try {
      api.setToken(token);
      const session = await api.openSession(token);
      onLogin(session, token);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  const form = el(
    "form",
    {
      class: "login-form",
      onsubmit: (ev: Event) => {
        ev.preventDefault();
        void submit();
      },
    },
    el("h2", {}, "Sign in"),
    el("p", { class: "hint" }, "Paste the access token issued for your group."),
    tokenInput,
    el("button", { type: "submit" }, "Sign in"),
    errors.node,
  );
  root.appendChild(el("section", { class: "login" }, form));
}
