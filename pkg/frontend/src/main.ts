// Console boot: sign in, mount the panels the session's grants allow,
// poll the gateway, and reconcile by sequence number.

import { GatewayClient } from "./api.js";
import type { Session } from "./api.js";
import { dashboardPanel } from "./panels/dashboard.js";
import { overridePanel } from "./panels/override.js";
import { adminQueuePanel } from "./panels/adminQueue.js";
import { recommendationsPanel } from "./panels/recommendations.js";
import { clear, el, verdictBanner } from "./render.js";

const POLL_MS = 1000;

export function mountConsole(rootEl: HTMLElement, base = ""): void {
  const client = new GatewayClient(base);
  const loginUser = el("input", { placeholder: "user", "data-testid": "login-user" });
  const loginSecret = el("input", {
    placeholder: "secret",
    type: "password",
    "data-testid": "login-secret",
  });
  const loginButton = el("button", { "data-testid": "login-submit" }, ["Sign in"]);
  const loginStatus = el("div", { class: "login-status", "data-testid": "login-status" });
  const loginForm = el("section", { class: "panel panel-login" }, [
    el("h2", {}, ["Sign in"]),
    el("div", { class: "row" }, [loginUser, loginSecret, loginButton]),
    loginStatus,
  ]);
  rootEl.append(loginForm);

  loginButton.addEventListener("click", () => {
    void (async () => {
      clear(loginStatus);
      const result = await client.login(
        (loginUser as HTMLInputElement).value,
        (loginSecret as HTMLInputElement).value,
      );
      if (!result.ok) {
        loginStatus.append(
          verdictBanner("deny", `${result.error.code}: ${result.error.detail}`),
        );
        return;
      }
      loginForm.classList.add("hidden");
      start(rootEl, client, result.body);
    })();
  });
}

function start(rootEl: HTMLElement, client: GatewayClient, session: Session): void {
  const dashboard = dashboardPanel(client, session);
  const queue = adminQueuePanel(client, session, () => void dashboard.refresh());
  const recs = recommendationsPanel(client, session);
  rootEl.append(
    el("header", { class: "session-bar" }, [
      `${session.subject} · ${session.role ?? "?"} · grants: ` +
        session.grants.map((g) => g.state).join(", "),
    ]),
    dashboard.root,
    el("div", { class: "placeholder-rooms" }),
    queue.root,
    recs.root,
  );

  void (async () => {
    const state = await client.state(session.ticket);
    const rooms = state.ok ? Object.keys(state.body.rooms) : [];
    const override = overridePanel(client, session, rooms, () => void dashboard.refresh());
    rootEl.querySelector(".placeholder-rooms")?.replaceWith(override.root);
    await Promise.all([dashboard.refresh(), queue.refresh(), recs.refresh()]);
  })();

  setInterval(() => {
    void dashboard.refresh();
    void queue.refresh();
    void recs.refresh();
  }, POLL_MS);
}

declare global {
  interface Window {
    hearthConsole?: typeof mountConsole;
  }
}

if (typeof document !== "undefined" && document.getElementById("console-root")) {
  mountConsole(document.getElementById("console-root")!);
}
if (typeof window !== "undefined") {
  window.hearthConsole = mountConsole;
}
