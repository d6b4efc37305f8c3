import type { ApiClient } from "../api.js";
import type {
  FormFieldSpec,
  RemoteListing,
  SessionInfo,
  TemplateJson,
} from "../types.js";
import { el, clear, errorBox } from "../dom.js";
import { fileGlyph } from "../format.js";

interface Destination {
  id: number;
  type: string;
  label: string;
}

export interface ImportHandle {
  ready: Promise<void>;
  destroy(): void;
}

/** Order-driven import screen: pick a destination, stage remote files,
 * queue the order, and optionally file a metadata form against the same
 * destination. Files never leave the remote store; the order carries
 * paths only. */
export function renderImport(
  root: HTMLElement,
  api: ApiClient,
  _session: SessionInfo,
): ImportHandle {
  clear(root);
  const errors = errorBox();
  const queueBanner = el("div", { class: "banner queue-banner", hidden: true });
  const metaBanner = el("div", { class: "banner meta-banner", hidden: true });
  const metaErrors = errorBox();

  let destKind: "Dataset" | "Screen" = "Dataset";
  let datasets: Destination[] = [];
  let screens: Destination[] = [];
  let selected: Destination | null = null;
  let remotePath = "";
  const staged: string[] = [];
  let templates: TemplateJson[] = [];
  let activeTemplate: TemplateJson | null = null;

  // destination pane
  const destList = el("div", { class: "dest-list" });
  const tabImages = el(
    "button",
    { type: "button", class: "dest-tab dest-tab-images active", onclick: () => switchKind("Dataset") },
    "Images",
  );
  const tabScreens = el(
    "button",
    { type: "button", class: "dest-tab dest-tab-screens", onclick: () => switchKind("Screen") },
    "Screens",
  );

  function switchKind(kind: "Dataset" | "Screen"): void {
    destKind = kind;
    selected = null;
    tabImages.classList.toggle("active", kind === "Dataset");
    tabScreens.classList.toggle("active", kind === "Screen");
    renderDestinations();
    renderSelection();
  }

  function renderDestinations(): void {
    clear(destList);
    const choices = destKind === "Dataset" ? datasets : screens;
    if (choices.length === 0) {
      destList.appendChild(el("p", { class: "empty" }, `no ${destKind.toLowerCase()}s`));
      return;
    }
    for (const choice of choices) {
      const radio = el("input", {
        type: "radio",
        name: "dest",
        value: String(choice.id),
        onchange: () => {
          selected = choice;
          renderSelection();
        },
      }) as HTMLInputElement;
      if (selected && selected.id === choice.id && selected.type === choice.type) {
        radio.checked = true;
      }
      destList.appendChild(el("label", { class: "dest-choice" }, radio, ` ${choice.label}`));
    }
  }

  // remote browser pane
  const pathLabel = el("span", { class: "remote-path" }, "/");
  const entryList = el("ul", { class: "remote-entries" });

  function renderRemote(listing: RemoteListing): void {
    remotePath = listing.path;
    pathLabel.textContent = "/" + listing.path;
    clear(entryList);
    for (const entry of listing.entries) {
      if (entry.is_dir) {
        // browse requests take subfolder-relative paths; entry.path is
        // relative to the remote root (it carries the group prefix) and is
        // only correct for order files
        const childPath = listing.path ? `${listing.path}/${entry.name}` : entry.name;
        entryList.appendChild(
          el(
            "li",
            { class: "remote-entry remote-dir" },
            el(
              "button",
              { type: "button", class: "descend", onclick: () => void browse(childPath) },
              `${fileGlyph(entry.name, true)} ${entry.name}`,
            ),
          ),
        );
      } else {
        const already = staged.includes(entry.path);
        entryList.appendChild(
          el(
            "li",
            { class: "remote-entry remote-file" },
            el("span", {}, `${fileGlyph(entry.name, false)} ${entry.name} (${entry.size ?? 0} B) `),
            el(
              "button",
              {
                type: "button",
                class: "add-file",
                "data-path": entry.path,
                disabled: already,
                onclick: () => addFile(entry.path),
              },
              already ? "Added" : "Add",
            ),
          ),
        );
      }
    }
    if (listing.entries.length === 0) {
      entryList.appendChild(el("li", { class: "empty" }, "empty folder"));
    }
  }

  async function browse(path: string): Promise<void> {
    try {
      const listing = await api.browseRemote(path);
      errors.hide();
      renderRemote(listing);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  function goUp(): void {
    if (!remotePath) return;
    const parts = remotePath.split("/").slice(0, -1);
    void browse(parts.join("/"));
  }

  function addFile(path: string): void {
    if (!staged.includes(path)) staged.push(path);
    renderSelection();
    void browse(remotePath);
  }

  // staged selection + queue
  const selectionCount = el("span", { class: "selection-count" }, "0");
  const selectionList = el("ul", { class: "selection-list" });
  const prepInput = el("input", {
    type: "text",
    class: "prep-ref",
    placeholder: "converter image ref (optional)",
  }) as HTMLInputElement;
  const queueButton = el(
    "button",
    { type: "button", class: "queue-btn", disabled: true, onclick: () => void queue() },
    "Queue imports",
  ) as HTMLButtonElement;

  function renderSelection(): void {
    selectionCount.textContent = String(staged.length);
    clear(selectionList);
    for (const path of staged) {
      selectionList.appendChild(
        el(
          "li",
          {},
          el("span", {}, path + " "),
          el(
            "button",
            {
              type: "button",
              class: "remove-file",
              onclick: () => {
                staged.splice(staged.indexOf(path), 1);
                renderSelection();
                void browse(remotePath);
              },
            },
            "Remove",
          ),
        ),
      );
    }
    queueButton.disabled = staged.length === 0 || selected === null;
    metaSubmit.disabled = selected === null || activeTemplate === null;
  }

  async function queue(): Promise<void> {
    if (!selected) return;
    const body = {
      destination_id: selected.id,
      destination_type: selected.type,
      files: [...staged],
      preprocessing: prepInput.value.trim()
        ? { container_ref: prepInput.value.trim() }
        : null,
    };
    try {
      const order = await api.createOrder(body);
      errors.hide();
      queueBanner.textContent = `queued order ${order.uuid} (${order.files.length} files)`;
      queueBanner.hidden = false;
      staged.length = 0;
      renderSelection();
      void browse(remotePath);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  // metadata form
  const templateSelect = el("select", { class: "template-select" }) as HTMLSelectElement;
  const fieldsHost = el("div", { class: "form-fields" });
  const metaSubmit = el(
    "button",
    { type: "button", class: "meta-submit", disabled: true, onclick: () => void submitMetadata() },
    "Submit metadata",
  ) as HTMLButtonElement;

  function inputFor(spec: FormFieldSpec, path: string): HTMLElement {
    if (spec.type === "boolean") {
      return el("input", { type: "checkbox", "data-path": path });
    }
    if (spec.type === "enum") {
      const select = el("select", { "data-path": path }) as HTMLSelectElement;
      select.appendChild(el("option", { value: "" }, "(choose)"));
      for (const option of spec.options ?? []) {
        select.appendChild(el("option", { value: option }, option));
      }
      return select;
    }
    return el("input", {
      type: spec.type === "number" ? "number" : "text",
      "data-path": path,
    });
  }

  function renderFields(schema: Record<string, FormFieldSpec>, host: HTMLElement, prefix: string): void {
    for (const [name, spec] of Object.entries(schema)) {
      const path = prefix ? `${prefix}.${name}` : name;
      if (spec.type === "group") {
        const fieldset = el("fieldset", { class: "form-group" }, el("legend", {}, name));
        renderFields(spec.fields ?? {}, fieldset, path);
        host.appendChild(fieldset);
      } else {
        host.appendChild(
          el(
            "label",
            { class: "form-field" },
            `${name}${spec.required ? " *" : ""} `,
            inputFor(spec, path),
          ),
        );
      }
    }
  }

  function collectValues(schema: Record<string, FormFieldSpec>, prefix: string): Record<string, unknown> {
    const out: Record<string, unknown> = {};
    for (const [name, spec] of Object.entries(schema)) {
      const path = prefix ? `${prefix}.${name}` : name;
      if (spec.type === "group") {
        const inner = collectValues(spec.fields ?? {}, path);
        if (Object.keys(inner).length > 0 || spec.required) out[name] = inner;
        continue;
      }
      const input = fieldsHost.querySelector(`[data-path="${path}"]`) as
        | HTMLInputElement
        | HTMLSelectElement
        | null;
      if (!input) continue;
      if (spec.type === "boolean") {
        out[name] = (input as HTMLInputElement).checked;
      } else {
        const raw = input.value;
        if (raw === "" && !spec.required) continue;
        out[name] = spec.type === "number" ? Number(raw) : raw;
      }
    }
    return out;
  }

  function renderTemplate(): void {
    clear(fieldsHost);
    metaBanner.hidden = true;
    metaErrors.hide();
    if (!activeTemplate) return;
    renderFields(activeTemplate.schema, fieldsHost, "");
    metaSubmit.disabled = selected === null;
  }

  async function submitMetadata(): Promise<void> {
    if (!activeTemplate || !selected) return;
    try {
      const submission = await api.submitForm({
        form_id: activeTemplate.form_id,
        object_id: selected.id,
        values: collectValues(activeTemplate.schema, ""),
        form_version: activeTemplate.version,
      });
      metaErrors.hide();
      metaBanner.textContent = `saved ${submission.form_id} v${submission.form_version} on ${selected.label}`;
      metaBanner.hidden = false;
    } catch (exc) {
      metaErrors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  templateSelect.addEventListener("change", () => {
    activeTemplate = templates.find((t) => t.form_id === templateSelect.value) ?? null;
    renderTemplate();
  });

  // initial loads
  async function loadDestinations(): Promise<void> {
    const top = await api.repoChildren();
    datasets = top
      .filter((o) => o.kind === "Dataset")
      .map((o) => ({ id: o.id, type: "Dataset", label: o.name }));
    screens = top
      .filter((o) => o.kind === "Screen")
      .map((o) => ({ id: o.id, type: "Screen", label: o.name }));
    for (const project of top.filter((o) => o.kind === "Project")) {
      const kids = await api.repoChildren(project.id);
      for (const child of kids.filter((k) => k.kind === "Dataset")) {
        datasets.push({ id: child.id, type: "Dataset", label: `${project.name} / ${child.name}` });
      }
    }
    renderDestinations();
  }

  async function loadTemplates(): Promise<void> {
    templates = await api.listTemplates();
    clear(templateSelect);
    templateSelect.appendChild(el("option", { value: "" }, "(no form)"));
    for (const template of templates) {
      templateSelect.appendChild(
        el("option", { value: template.form_id }, `${template.form_id} v${template.version}`),
      );
    }
  }

  root.appendChild(
    el(
      "section",
      { class: "import" },
      el("h2", {}, "Import"),
      errors.node,
      queueBanner,
      el(
        "div",
        { class: "import-panes" },
        el(
          "div",
          { class: "pane dest-pane" },
          el("h3", {}, "Destination"),
          el("div", { class: "dest-tabs" }, tabImages, tabScreens),
          destList,
        ),
        el(
          "div",
          { class: "pane remote-pane" },
          el("h3", {}, "Remote files"),
          el(
            "div",
            { class: "path-bar" },
            el("button", { type: "button", class: "go-up", onclick: () => goUp() }, "Up"),
            " ",
            pathLabel,
          ),
          entryList,
        ),
      ),
      el(
        "div",
        { class: "selection" },
        el("h3", {}, "Selected files (", selectionCount, ")"),
        selectionList,
        el("label", {}, "Preprocessing ", prepInput),
        queueButton,
      ),
      el(
        "div",
        { class: "metadata" },
        el("h3", {}, "Metadata form"),
        el("label", {}, "Template ", templateSelect),
        fieldsHost,
        metaSubmit,
        metaBanner,
        metaErrors.node,
      ),
    ),
  );

  const ready = (async () => {
    try {
      await Promise.all([loadDestinations(), loadTemplates(), browse("")]);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  })();

  return { ready, destroy: () => undefined };
}
