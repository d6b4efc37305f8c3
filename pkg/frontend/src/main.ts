import { ApiClient } from "./api.js";
import type { SessionInfo } from "./types.js";
import { el, clear } from "./dom.js";
import { renderLogin } from "./views/login.js";
import { renderImport } from "./views/import.js";
import { renderMonitor } from "./views/monitor.js";
import { renderAnalyze } from "./views/analyze.js";
import { renderStatus } from "./views/status.js";
import { renderSearch } from "./views/search.js";
import { renderAdmin } from "./views/admin.js";

export interface Route {
  name: string;
  q: string;
}

const ROUTE_NAMES = ["import", "monitor", "analyze", "status", "search", "admin"];

/** "#/search?q=abc" -> {name: "search", q: "abc"}; unknown -> monitor. */
export function parseRoute(hash: string): Route {
  const stripped = hash.replace(/^#\/?/, "");
  const [pathPart = "", queryPart = ""] = stripped.split("?", 2);
  const name = ROUTE_NAMES.includes(pathPart) ? pathPart : "monitor";
  const q = new URLSearchParams(queryPart).get("q") ?? "";
  return { name, q };
}

interface ViewHandle {
  destroy?: () => void;
}

const TOKEN_KEY = "fairflow.token";

export function boot(root: HTMLElement, api = new ApiClient("")): void {
  let session: SessionInfo | null = null;
  let current: ViewHandle | null = null;

  const viewHost = el("main", { class: "view-host", id: "view" });
  const userLabel = el("span", { class: "session-user" });
  const adminLink = el("a", { href: "#/admin", class: "nav-admin", hidden: true }, "Admin");
  const signOut = el(
    "button",
    {
      type: "button",
      class: "sign-out",
      hidden: true,
      onclick: () => {
        window.sessionStorage.removeItem(TOKEN_KEY);
        session = null;
        api.setToken("");
        window.location.hash = "";
        showLogin();
      },
    },
    "Sign out",
  );

  const nav = el(
    "nav",
    { class: "top-nav" },
    el("a", { href: "#/import" }, "Import"),
    el("a", { href: "#/monitor" }, "Monitor"),
    el("a", { href: "#/analyze" }, "Analyze"),
    el("a", { href: "#/status" }, "Status"),
    el("a", { href: "#/search" }, "Search"),
    adminLink,
  );

  clear(root);
  root.appendChild(
    el(
      "header",
      { class: "top-bar" },
      el("h1", {}, "FairFlow"),
      nav,
      el("div", { class: "session-box" }, userLabel, " ", signOut),
    ),
  );
  root.appendChild(viewHost);

  function teardown(): void {
    if (current && current.destroy) current.destroy();
    current = null;
  }

  function route(): void {
    if (!session) return;
    teardown();
    const parsed = parseRoute(window.location.hash);
    for (const link of nav.querySelectorAll("a")) {
      link.classList.toggle("active", link.getAttribute("href") === `#/${parsed.name}`);
    }
    if (parsed.name === "import") current = renderImport(viewHost, api, session);
    else if (parsed.name === "analyze") current = renderAnalyze(viewHost, api, session);
    else if (parsed.name === "status") current = renderStatus(viewHost, api, session);
    else if (parsed.name === "search") current = renderSearch(viewHost, api, session, parsed.q);
    else if (parsed.name === "admin") current = renderAdmin(viewHost, api, session);
    else current = renderMonitor(viewHost, api, session);
  }

  function showShell(info: SessionInfo): void {
    session = info;
    userLabel.textContent = `${info.display_name} (${info.group})`;
    adminLink.hidden = !info.is_admin;
    signOut.hidden = false;
    if (!window.location.hash) window.location.hash = "#/monitor";
    route();
  }

  function showLogin(): void {
    teardown();
    userLabel.textContent = "";
    adminLink.hidden = true;
    signOut.hidden = true;
    renderLogin(viewHost, api, (info, token) => {
      window.sessionStorage.setItem(TOKEN_KEY, token);
      showShell(info);
    });
  }

  window.addEventListener("hashchange", () => route());

  const saved = window.sessionStorage.getItem(TOKEN_KEY);
  if (saved) {
    api.setToken(saved);
    api
      .openSession(saved)
      .then((info) => showShell(info))
      .catch(() => {
        window.sessionStorage.removeItem(TOKEN_KEY);
        showLogin();
      });
  } else {
    showLogin();
  }
}

const appRoot = document.getElementById("app");
if (appRoot) boot(appRoot);
