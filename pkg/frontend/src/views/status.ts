import type { ApiClient } from "../api.js";
import type { RunRow, SessionInfo } from "../types.js";
import { el, clear, errorBox, statusClass, textCell } from "../dom.js";
import { Poller } from "../poll.js";
import { progressText, todayString } from "../format.js";

export interface StatusHandle {
  poller: Poller;
  destroy(): void;
}

export interface StatusOptions {
  intervalMs?: number;
  doc?: Document;
  navigate?: (hash: string) => void;
  now?: () => Date;
}

const COLUMNS = [
  "User",
  "Group",
  "Name",
  "Task",
  "Status",
  "Progress",
  "Start Time",
  "Workflow ID",
  "Main Task Name",
] as const;

/** Live run dashboard with workflow/group/date filters; the workflow id
 * links to provenance search for that run. */
export function renderStatus(
  root: HTMLElement,
  api: ApiClient,
  session: SessionInfo,
  options: StatusOptions = {},
): StatusHandle {
  clear(root);
  const doc = options.doc ?? document;
  const navigate =
    options.navigate ?? ((hash: string) => (window.location.hash = hash));
  const errors = errorBox();

  const workflowInput = el("input", {
    type: "text",
    class: "status-workflow",
    placeholder: "workflow name",
  }) as HTMLInputElement;
  const groupInput = el("input", {
    type: "text",
    class: "status-group",
    placeholder: "group name",
  }) as HTMLInputElement;
  const dateInput = el("input", { type: "date", class: "status-date" }) as HTMLInputElement;

  const body = el("tbody", {});
  const table = el(
    "table",
    { class: "status-table" },
    el("thead", {}, el("tr", {}, ...COLUMNS.map((name) => el("th", {}, name)))),
    body,
  );

  function renderRows(rows: RunRow[]): void {
    clear(body as HTMLElement);
    for (const row of rows) {
      const idLink = el(
        "a",
        {
          href: `#/search?q=${encodeURIComponent(row.run_uuid)}`,
          class: "run-link",
          onclick: (ev: Event) => {
            ev.preventDefault();
            navigate(`#/search?q=${encodeURIComponent(row.run_uuid)}`);
          },
        },
        row.run_uuid,
      );
      body.appendChild(
        el(
          "tr",
          { class: statusClass(row.status) },
          textCell(row.user),
          textCell(row.group),
          textCell(row.name),
          textCell(row.task),
          textCell(row.status, "cell-status"),
          textCell(progressText(row.progress), "cell-progress"),
          textCell(row.start_time),
          el("td", { class: "cell-run-uuid" }, idLink),
          textCell(row.main_task_name),
        ),
      );
    }
    if (rows.length === 0) {
      body.appendChild(
        el(
          "tr",
          {},
          el("td", { colspan: String(COLUMNS.length), class: "empty" }, "no runs"),
        ),
      );
    }
  }

  async function refresh(): Promise<void> {
    try {
      const rows = await api.listRuns({
        workflow: workflowInput.value.trim() || undefined,
        group: groupInput.value.trim() || undefined,
        date: dateInput.value || undefined,
      });
      errors.hide();
      renderRows(rows);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  const poller = new Poller(() => refresh(), {
    intervalMs: options.intervalMs ?? 2000,
    doc,
  });

  workflowInput.addEventListener("change", () => void refresh());
  groupInput.addEventListener("change", () => void refresh());
  dateInput.addEventListener("change", () => void refresh());

  const filters = el(
    "div",
    { class: "filters" },
    el("label", {}, "Workflow ", workflowInput),
    el("label", {}, "Date ", dateInput),
    el(
      "button",
      {
        type: "button",
        class: "today-btn",
        onclick: () => {
          dateInput.value = todayString(options.now ? options.now() : new Date());
          void refresh();
        },
      },
      "Today",
    ),
    el(
      "button",
      {
        type: "button",
        class: "clear-date",
        onclick: () => {
          dateInput.value = "";
          void refresh();
        },
      },
      "All dates",
    ),
  );
  if (session.is_admin) {
    filters.appendChild(el("label", {}, "Group ", groupInput));
  }

  root.appendChild(
    el(
      "section",
      { class: "status" },
      el("h2", {}, "Workflow status"),
      filters,
      errors.node,
      el("div", { class: "table-scroll" }, table),
    ),
  );

  poller.start();
  return { poller, destroy: () => poller.stop() };
}
