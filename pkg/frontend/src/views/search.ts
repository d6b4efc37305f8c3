import type { ApiClient } from "../api.js";
import type { RepoObjectJson, SessionInfo } from "../types.js";
import { el, clear, errorBox, textCell } from "../dom.js";

export interface SearchHandle {
  ready: Promise<void>;
  destroy(): void;
}

/** Provenance search: any recorded key or value (order uuid, run uuid,
 * filename, form answer) finds the objects annotated with it. Clicking a
 * hit expands its annotation blocks. */
export function renderSearch(
  root: HTMLElement,
  api: ApiClient,
  _session: SessionInfo,
  initialQuery = "",
): SearchHandle {
  clear(root);
  const errors = errorBox();
  const queryInput = el("input", {
    type: "search",
    class: "search-query",
    value: initialQuery,
    placeholder: "uuid, filename, form value...",
  }) as HTMLInputElement;

  const resultsBody = el("tbody", {});
  const resultsTable = el(
    "table",
    { class: "search-results" },
    el(
      "thead",
      {},
      el("tr", {}, ...["id", "kind", "name", "group", "created_at"].map((h) => el("th", {}, h))),
    ),
    resultsBody,
  );
  const detail = el("div", { class: "search-detail" });

  async function showAnnotations(obj: RepoObjectJson): Promise<void> {
    clear(detail);
    detail.appendChild(el("h3", {}, `${obj.kind} ${obj.name} (id ${obj.id})`));
    try {
      const blocks = await api.repoAnnotations(obj.id);
      if (blocks.length === 0) {
        detail.appendChild(el("p", { class: "empty" }, "no annotations"));
        return;
      }
      for (const block of blocks) {
        const rows = el("tbody", {});
        for (const [key, value] of block.pairs) {
          rows.appendChild(el("tr", {}, textCell(key, "ann-key"), textCell(value, "ann-value")));
        }
        detail.appendChild(
          el(
            "div",
            { class: "annotation-block" },
            el("h4", {}, block.namespace, " ", el("span", { class: "ts" }, block.created_at)),
            el("table", { class: "annotation-pairs" }, rows),
          ),
        );
      }
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  function renderResults(objects: RepoObjectJson[]): void {
    clear(resultsBody as HTMLElement);
    clear(detail);
    for (const obj of objects) {
      resultsBody.appendChild(
        el(
          "tr",
          {
            class: "search-hit",
            "data-object": String(obj.id),
            onclick: () => void showAnnotations(obj),
          },
          textCell(String(obj.id)),
          textCell(obj.kind),
          textCell(obj.name),
          textCell(obj.group),
          textCell(obj.created_at),
        ),
      );
    }
    if (objects.length === 0) {
      resultsBody.appendChild(
        el("tr", {}, el("td", { colspan: "5", class: "empty" }, "no matches")),
      );
    }
  }

  async function run(): Promise<void> {
    const q = queryInput.value.trim();
    if (!q) {
      clear(resultsBody as HTMLElement);
      clear(detail);
      return;
    }
    try {
      const objects = await api.search(q);
      errors.hide();
      renderResults(objects);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  root.appendChild(
    el(
      "section",
      { class: "search" },
      el("h2", {}, "Search"),
      el(
        "form",
        {
          class: "search-form",
          onsubmit: (ev: Event) => {
            ev.preventDefault();
            void run();
          },
        },
        queryInput,
        el("button", { type: "submit" }, "Search"),
      ),
      errors.node,
      el("div", { class: "table-scroll" }, resultsTable),
      detail,
    ),
  );

  const ready = initialQuery ? run() : Promise.resolve();
  return { ready, destroy: () => undefined };
}
