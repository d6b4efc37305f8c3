import type { ApiClient } from "../api.js";
import type { MonitorRow, SessionInfo } from "../types.js";
import { el, clear, errorBox, statusClass, textCell } from "../dom.js";
import { Poller } from "../poll.js";
import { elapsedText, todayString } from "../format.js";

export interface MonitorHandle {
  poller: Poller;
  destroy(): void;
}

export interface MonitorOptions {
  intervalMs?: number;
  doc?: Document;
  navigate?: (hash: string) => void;
  now?: () => Date;
}

const COLUMNS = [
  "file_names",
  "stage",
  "Dataset/Screen",
  "uuid",
  "timestamp",
  "elapsed_time",
  "group_name",
] as const;

/** Live import-order table with date and (for admins) group filters. */
export function renderMonitor(
  root: HTMLElement,
  api: ApiClient,
  session: SessionInfo,
  options: MonitorOptions = {},
): MonitorHandle {
  clear(root);
  const doc = options.doc ?? document;
  const navigate =
    options.navigate ?? ((hash: string) => (window.location.hash = hash));
  const errors = errorBox();

  const dateInput = el("input", {
    type: "date",
    class: "monitor-date",
    value: todayString(options.now ? options.now() : new Date()),
  }) as HTMLInputElement;
  const groupInput = el("input", {
    type: "text",
    class: "monitor-group",
    placeholder: "group name",
  }) as HTMLInputElement;

  const body = el("tbody", {});
  const table = el(
    "table",
    { class: "monitor-table" },
    el(
      "thead",
      {},
      el("tr", {}, ...COLUMNS.map((name) => el("th", {}, name))),
    ),
    body,
  );

  function renderRows(rows: MonitorRow[]): void {
    clear(body as HTMLElement);
    for (const row of rows) {
      const uuidLink = el(
        "a",
        {
          href: `#/search?q=${encodeURIComponent(row.uuid)}`,
          class: "uuid-link",
          onclick: (ev: Event) => {
            ev.preventDefault();
            navigate(`#/search?q=${encodeURIComponent(row.uuid)}`);
          },
        },
        row.uuid,
      );
      body.appendChild(
        el(
          "tr",
          {},
          textCell(row.file_names.join(", "), "cell-files"),
          textCell(row.stage, `cell-stage ${statusClass(row.stage)}`),
          textCell(`${row.destination_type} ${row.destination_id}`),
          el("td", { class: "cell-uuid" }, uuidLink),
          textCell(row.timestamp),
          textCell(elapsedText(row.elapsed_time)),
          textCell(row.group_name),
        ),
      );
    }
    if (rows.length === 0) {
      body.appendChild(
        el(
          "tr",
          {},
          el("td", { colspan: String(COLUMNS.length), class: "empty" }, "no orders"),
        ),
      );
    }
  }

  async function refresh(): Promise<void> {
    try {
      const rows = await api.monitor({
        date: dateInput.value || undefined,
        group: groupInput.value.trim() || undefined,
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

  dateInput.addEventListener("change", () => void refresh());
  groupInput.addEventListener("change", () => void refresh());

  const filters = el(
    "div",
    { class: "filters" },
    el("label", {}, "Date ", dateInput),
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
      { class: "monitor" },
      el("h2", {}, "Import monitor"),
      filters,
      errors.node,
      el("div", { class: "table-scroll" }, table),
    ),
  );

  poller.start();
  return { poller, destroy: () => poller.stop() };
}
