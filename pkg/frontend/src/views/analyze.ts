import type { ApiClient } from "../api.js";
import type {
  ParamFieldJson,
  RepoObjectJson,
  SessionInfo,
  WorkflowJson,
} from "../types.js";
import { el, clear, errorBox } from "../dom.js";

export interface AnalyzeHandle {
  ready: Promise<void>;
  destroy(): void;
}

/** Workflow gallery plus a three-step launch dialog: pick input images,
 * fill the parameter form, choose output handling, then start the run. */
export function renderAnalyze(
  root: HTMLElement,
  api: ApiClient,
  _session: SessionInfo,
): AnalyzeHandle {
  clear(root);
  const errors = errorBox();
  const banner = el("div", { class: "banner run-banner", hidden: true });
  const cards = el("div", { class: "workflow-cards" });
  const dialogHost = el("div", { class: "dialog-host" });

  const searchInput = el("input", {
    type: "search",
    class: "workflow-search",
    placeholder: "search workflows",
  }) as HTMLInputElement;

  function renderCards(workflows: WorkflowJson[]): void {
    clear(cards);
    for (const wf of workflows) {
      cards.appendChild(
        el(
          "div",
          { class: "card workflow-card", "data-workflow": wf.name },
          el("h3", {}, `${wf.name} `, el("span", { class: "version" }, wf.version)),
          el("p", { class: "description" }, wf.description),
          el("p", { class: "links" },
            el("a", { href: wf.github_repo, target: "_blank", rel: "noreferrer" }, "source"),
            " ",
            el("code", {}, wf.container_image),
          ),
          el(
            "button",
            { type: "button", class: "run-open", onclick: () => void openDialog(wf) },
            "Run",
          ),
        ),
      );
    }
    if (workflows.length === 0) {
      cards.appendChild(el("p", { class: "empty" }, "no workflows match"));
    }
  }

  async function refreshCards(): Promise<void> {
    try {
      const workflows = await api.listWorkflows(searchInput.value.trim() || undefined);
      errors.hide();
      renderCards(workflows);
    } catch (exc) {
      errors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  searchInput.addEventListener("input", () => void refreshCards());

  async function openDialog(workflow: WorkflowJson): Promise<void> {
    clear(dialogHost);
    const dialogErrors = errorBox();
    let step = 1;

    // step 1 state
    let datasets: RepoObjectJson[] = [];
    let images: RepoObjectJson[] = [];
    let containerId: number | null = null;
    const checkedImages = new Set<number>();

    // step 2 state
    const form = await api.workflowForm(workflow.name);
    const paramInputs = new Map<string, HTMLInputElement | HTMLSelectElement>();

    // step 3 state
    let targetDatasetId: number | null = null;

    const stepLabel = el("span", { class: "step-label" });
    const body = el("div", { class: "dialog-body" });
    const backBtn = el(
      "button",
      { type: "button", class: "dialog-back", onclick: () => go(step - 1) },
      "Back",
    ) as HTMLButtonElement;
    const nextBtn = el(
      "button",
      { type: "button", class: "dialog-next", onclick: () => void next() },
      "Next",
    ) as HTMLButtonElement;

    function paramInput(field: ParamFieldJson): HTMLInputElement | HTMLSelectElement {
      if (field.type === "bool") {
        const box = el("input", { type: "checkbox", "data-param": field.name }) as HTMLInputElement;
        box.checked = field.default === true;
        return box;
      }
      if (field.type === "enum") {
        const select = el("select", { "data-param": field.name }) as HTMLSelectElement;
        for (const option of field.options ?? []) {
          select.appendChild(el("option", { value: option }, option));
        }
        if (field.default !== null && field.default !== undefined) {
          select.value = String(field.default);
        }
        return select;
      }
      const input = el("input", {
        type: field.type === "int" || field.type === "float" ? "number" : "text",
        "data-param": field.name,
      }) as HTMLInputElement;
      if (field.type === "float") input.setAttribute("step", "any");
      if (field.default !== null && field.default !== undefined) {
        input.value = String(field.default);
      }
      return input;
    }

    function renderStep(): void {
      stepLabel.textContent = `Step ${step} of 3`;
      backBtn.disabled = step === 1;
      nextBtn.textContent = step === 3 ? "Run" : "Next";
      clear(body);
      if (step === 1) {
        const datasetSelect = el("select", { class: "input-dataset" }) as HTMLSelectElement;
        datasetSelect.appendChild(el("option", { value: "" }, "(choose dataset)"));
        for (const ds of datasets) {
          datasetSelect.appendChild(el("option", { value: String(ds.id) }, ds.name));
        }
        if (containerId !== null) datasetSelect.value = String(containerId);
        const imageList = el("div", { class: "image-list" });

        function renderImages(): void {
          clear(imageList);
          for (const image of images) {
            const box = el("input", {
              type: "checkbox",
              "data-image": String(image.id),
              onchange: (ev: Event) => {
                const target = ev.target as HTMLInputElement;
                if (target.checked) checkedImages.add(image.id);
                else checkedImages.delete(image.id);
                nextBtn.disabled = checkedImages.size === 0;
              },
            }) as HTMLInputElement;
            box.checked = checkedImages.has(image.id);
            imageList.appendChild(el("label", { class: "image-choice" }, box, ` ${image.name}`));
          }
          if (containerId !== null && images.length === 0) {
            imageList.appendChild(el("p", { class: "empty" }, "dataset has no images"));
          }
          nextBtn.disabled = checkedImages.size === 0;
        }

        datasetSelect.addEventListener("change", () => {
          void (async () => {
            containerId = datasetSelect.value ? Number(datasetSelect.value) : null;
            checkedImages.clear();
            images = [];
            if (containerId !== null) {
              images = (await api.repoChildren(containerId)).filter((o) => o.kind === "Image");
              // everything selected by default; untick to narrow
              for (const image of images) checkedImages.add(image.id);
              if (targetDatasetId === null) targetDatasetId = containerId;
            }
            renderImages();
          })();
        });

        body.appendChild(el("h4", {}, "Input Data"));
        body.appendChild(el("label", {}, "Dataset ", datasetSelect));
        body.appendChild(imageList);
        renderImages();
      } else if (step === 2) {
        body.appendChild(el("h4", {}, "Workflow Parameters"));
        for (const field of form.fields) {
          let input = paramInputs.get(field.name);
          if (!input) {
            input = paramInput(field);
            paramInputs.set(field.name, input);
          }
          body.appendChild(
            el(
              "label",
              { class: "param-field", title: field.description },
              `${field.name} (${field.type}) `,
              input,
            ),
          );
        }
        nextBtn.disabled = false;
      } else {
        body.appendChild(el("h4", {}, "Output Data"));
        const targetSelect = el("select", { class: "target-dataset" }) as HTMLSelectElement;
        for (const ds of datasets) {
          targetSelect.appendChild(el("option", { value: String(ds.id) }, ds.name));
        }
        if (targetDatasetId !== null) targetSelect.value = String(targetDatasetId);
        targetSelect.addEventListener("change", () => {
          targetDatasetId = Number(targetSelect.value);
        });
        const zipBox = el("input", { type: "checkbox", class: "attach-zip" }) as HTMLInputElement;
        const tableBox = el("input", { type: "checkbox", class: "attach-tables" }) as HTMLInputElement;
        const emailBox = el("input", { type: "checkbox", class: "email-on-done" }) as HTMLInputElement;
        const renameInput = el("input", {
          type: "text",
          class: "rename-pattern",
          placeholder: "{name}",
        }) as HTMLInputElement;
        body.appendChild(el("label", {}, "Target dataset ", targetSelect));
        body.appendChild(el("label", {}, zipBox, " attach results zip"));
        body.appendChild(el("label", {}, tableBox, " attach measurement tables"));
        body.appendChild(el("label", {}, emailBox, " email on completion"));
        body.appendChild(el("label", {}, "Rename imports ", renameInput));
        nextBtn.disabled = false;
      }
    }

    function go(target: number): void {
      step = Math.min(3, Math.max(1, target));
      renderStep();
    }

    function collectParams(): Record<string, unknown> {
      const params: Record<string, unknown> = {};
      for (const field of form.fields) {
        const input = paramInputs.get(field.name);
        if (!input) continue;
        if (field.type === "bool") {
          params[field.name] = (input as HTMLInputElement).checked;
        } else if (field.type === "int") {
          params[field.name] = parseInt(input.value, 10);
        } else if (field.type === "float") {
          params[field.name] = parseFloat(input.value);
        } else {
          params[field.name] = input.value;
        }
      }
      return params;
    }

    async function next(): Promise<void> {
      dialogErrors.hide();
      if (step < 3) {
        go(step + 1);
        return;
      }
      if (containerId === null || checkedImages.size === 0) {
        dialogErrors.show("select a dataset and at least one image");
        return;
      }
      const dialogRoot = dialogHost.querySelector(".dialog");
      const payload = {
        input_selection: {
          container_id: containerId,
          image_ids: [...checkedImages].sort((a, b) => a - b),
        },
        output_options: {
          target_dataset_id: targetDatasetId ?? containerId,
          attach_zip: (dialogRoot?.querySelector(".attach-zip") as HTMLInputElement | null)?.checked ?? false,
          attach_tables: (dialogRoot?.querySelector(".attach-tables") as HTMLInputElement | null)?.checked ?? false,
          email_on_done: (dialogRoot?.querySelector(".email-on-done") as HTMLInputElement | null)?.checked ?? false,
          rename_pattern:
            (dialogRoot?.querySelector(".rename-pattern") as HTMLInputElement | null)?.value || null,
        },
        params: collectParams(),
      };
      try {
        const started = await api.startRun(workflow.name, payload);
        banner.textContent = `${started.message} (run ${started.run_uuid})`;
        banner.hidden = false;
        closeDialog();
      } catch (exc) {
        dialogErrors.show(exc instanceof Error ? exc.message : String(exc));
      }
    }

    function closeDialog(): void {
      clear(dialogHost);
    }

    datasets = (await api.repoChildren()).filter((o) => o.kind === "Dataset");
    for (const project of (await api.repoChildren()).filter((o) => o.kind === "Project")) {
      datasets = datasets.concat(
        (await api.repoChildren(project.id)).filter((o) => o.kind === "Dataset"),
      );
    }

    dialogHost.appendChild(
      el(
        "div",
        { class: "dialog", "data-workflow": workflow.name },
        el(
          "div",
          { class: "dialog-head" },
          el("h3", {}, `Run ${workflow.name}`),
          stepLabel,
          el(
            "button",
            { type: "button", class: "dialog-close", onclick: () => closeDialog() },
            "Close",
          ),
        ),
        dialogErrors.node,
        body,
        el("div", { class: "dialog-actions" }, backBtn, nextBtn),
      ),
    );
    renderStep();
  }

  root.appendChild(
    el(
      "section",
      { class: "analyze" },
      el("h2", {}, "Analyze"),
      el("div", { class: "filters" }, el("label", {}, "Search ", searchInput)),
      errors.node,
      banner,
      cards,
      dialogHost,
    ),
  );

  const ready = refreshCards();
  return { ready, destroy: () => undefined };
}
