import type { ApiClient } from "../api.js";
import type { SessionInfo, WorkflowJson } from "../types.js";
import { el, clear, errorBox } from "../dom.js";

export interface AdminHandle {
  ready: Promise<void>;
  destroy(): void;
}

// mirror of the server's pin policy so mistakes surface before saving
const REPO_URL_RE = /^https:\/\/github\.com\/[^/]+\/[^/]+\/(tree|releases\/tag)\/[^/]+$/;

export function repoUrlWarning(url: string): string | null {
  if (REPO_URL_RE.test(url)) return null;
  return "repository URL must pin a released version (.../tree/<tag> or .../releases/tag/<tag>)";
}

export function imageWarning(image: string): string | null {
  const tail = image.split("/").pop() ?? "";
  const colon = tail.lastIndexOf(":");
  if (colon > 0 && colon < tail.length - 1) return null;
  return "container image needs an explicit version tag";
}

interface ModelSection {
  root: HTMLElement;
  read(): WorkflowJson;
}

/** Admin screen: group-to-subfolder mappings and the analyzer model
 * catalog. Edits stage locally; Save Settings pushes the whole catalog. */
export function renderAdmin(
  root: HTMLElement,
  api: ApiClient,
  session: SessionInfo,
): AdminHandle {
  clear(root);

  if (!session.is_admin) {
    root.appendChild(
      el(
        "section",
        { class: "admin admin-forbidden" },
        el("h2", {}, "Admin"),
        el("p", { class: "error-box" }, "an admin session is required for this page"),
      ),
    );
    return { ready: Promise.resolve(), destroy: () => undefined };
  }

  const mapErrors = errorBox();
  const cfgErrors = errorBox();
  const cfgBanner = el("div", { class: "banner cfg-banner", hidden: true });

  // -- mappings ------------------------------------------------------------
  const mappingBody = el("tbody", {});
  const groupInput = el("input", {
    type: "text",
    class: "map-group",
    placeholder: "group",
  }) as HTMLInputElement;
  const subfolderInput = el("input", {
    type: "text",
    class: "map-subfolder",
    placeholder: "remote subfolder",
  }) as HTMLInputElement;

  async function refreshMappings(): Promise<void> {
    try {
      const mappings = await api.listMappings();
      mapErrors.hide();
      clear(mappingBody as HTMLElement);
      for (const mapping of mappings) {
        mappingBody.appendChild(
          el(
            "tr",
            { "data-group": mapping.group },
            el("td", {}, mapping.group),
            el("td", {}, mapping.subfolder),
            el(
              "td",
              {},
              el(
                "button",
                {
                  type: "button",
                  class: "map-delete",
                  onclick: () => {
                    void api
                      .removeMapping(mapping.group)
                      .then(refreshMappings)
                      .catch((exc: unknown) =>
                        mapErrors.show(exc instanceof Error ? exc.message : String(exc)),
                      );
                  },
                },
                "Delete",
              ),
            ),
          ),
        );
      }
      if (mappings.length === 0) {
        mappingBody.appendChild(
          el("tr", {}, el("td", { colspan: "3", class: "empty" }, "no mappings")),
        );
      }
    } catch (exc) {
      mapErrors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  async function addMapping(): Promise<void> {
    try {
      await api.addMapping(groupInput.value.trim(), subfolderInput.value.trim());
      groupInput.value = "";
      subfolderInput.value = "";
      await refreshMappings();
    } catch (exc) {
      mapErrors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  // -- analyzer catalog ------------------------------------------------------
  const modelsHost = el("div", { class: "models" });
  const iniView = el("pre", { class: "ini-view" });
  const sections: ModelSection[] = [];

  function modelSection(wf: WorkflowJson): ModelSection {
    const nameInput = el("input", { type: "text", class: "wf-name", value: wf.name }) as HTMLInputElement;
    const versionInput = el("input", { type: "text", class: "wf-version", value: wf.version }) as HTMLInputElement;
    const descInput = el("input", { type: "text", class: "wf-desc", value: wf.description }) as HTMLInputElement;
    const repoInput = el("input", { type: "text", class: "wf-repo", value: wf.github_repo }) as HTMLInputElement;
    const imageInput = el("input", { type: "text", class: "wf-image", value: wf.container_image }) as HTMLInputElement;
    const scriptInput = el("input", { type: "text", class: "wf-script", value: wf.job_script }) as HTMLInputElement;
    const sbatchArea = el("textarea", { class: "wf-sbatch", rows: "3" }) as HTMLTextAreaElement;
    sbatchArea.value = Object.entries(wf.sbatch_params)
      .map(([k, v]) => `${k}=${v}`)
      .join("\n");
    const schemaArea = el("textarea", { class: "wf-schema", rows: "6" }) as HTMLTextAreaElement;
    schemaArea.value = JSON.stringify(wf.param_schema, null, 2);

    const repoWarn = el("p", { class: "field-warn repo-warn", hidden: true });
    const imageWarn = el("p", { class: "field-warn image-warn", hidden: true });

    function checkPins(): void {
      const repoProblem = repoUrlWarning(repoInput.value.trim());
      repoWarn.textContent = repoProblem ?? "";
      repoWarn.hidden = repoProblem === null;
      const imageProblem = imageWarning(imageInput.value.trim());
      imageWarn.textContent = imageProblem ?? "";
      imageWarn.hidden = imageProblem === null;
    }
    repoInput.addEventListener("input", checkPins);
    imageInput.addEventListener("input", checkPins);
    checkPins();

    // renaming a model keeps its job script in step until hand-edited
    let scriptTracksName = wf.job_script === `jobs/${wf.name}.sh`;
    nameInput.addEventListener("input", () => {
      if (scriptTracksName) scriptInput.value = `jobs/${nameInput.value}.sh`;
    });
    scriptInput.addEventListener("input", () => {
      scriptTracksName = false;
    });

    const section = el(
      "fieldset",
      { class: "model-section" },
      el("legend", {}, wf.name || "new model"),
      el("label", {}, "Name ", nameInput),
      el("label", {}, "Version ", versionInput),
      el("label", {}, "Description ", descInput),
      el("label", {}, "Repository ", repoInput),
      repoWarn,
      el("label", {}, "Container image ", imageInput),
      imageWarn,
      el("label", {}, "Job script ", scriptInput),
      el("label", {}, "Sbatch params (key=value per line) ", sbatchArea),
      el("label", {}, "Parameter schema (JSON) ", schemaArea),
      el(
        "button",
        {
          type: "button",
          class: "model-remove",
          onclick: () => {
            const at = sections.findIndex((s) => s.root === section);
            if (at >= 0) sections.splice(at, 1);
            section.remove();
          },
        },
        "Remove model",
      ),
    );

    return {
      root: section,
      read(): WorkflowJson {
        const sbatch: Record<string, string> = {};
        for (const line of sbatchArea.value.split("\n")) {
          const trimmed = line.trim();
          if (!trimmed) continue;
          const eq = trimmed.indexOf("=");
          if (eq < 0) continue;
          sbatch[trimmed.slice(0, eq)] = trimmed.slice(eq + 1);
        }
        return {
          name: nameInput.value.trim(),
          version: versionInput.value.trim(),
          description: descInput.value,
          github_repo: repoInput.value.trim(),
          container_image: imageInput.value.trim(),
          job_script: scriptInput.value.trim(),
          sbatch_params: sbatch,
          param_schema: JSON.parse(schemaArea.value || "[]") as WorkflowJson["param_schema"],
        };
      },
    };
  }

  function mountModels(workflows: WorkflowJson[], ini: string): void {
    clear(modelsHost);
    sections.length = 0;
    for (const wf of workflows) {
      const section = modelSection(wf);
      sections.push(section);
      modelsHost.appendChild(section.root);
    }
    iniView.textContent = ini;
  }

  async function refreshConfig(): Promise<void> {
    try {
      const config = await api.getAnalyzerConfig();
      cfgErrors.hide();
      mountModels(config.workflows, config.ini);
    } catch (exc) {
      cfgErrors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  function addModel(): void {
    const blank: WorkflowJson = {
      name: "new-model",
      version: "v0.0.1",
      description: "",
      github_repo: "",
      container_image: "",
      job_script: "jobs/new-model.sh",
      sbatch_params: {},
      param_schema: [],
    };
    const section = modelSection(blank);
    sections.push(section);
    modelsHost.appendChild(section.root);
  }

  async function saveSettings(): Promise<void> {
    cfgBanner.hidden = true;
    let workflows: WorkflowJson[];
    try {
      workflows = sections.map((s) => s.read());
    } catch (exc) {
      cfgErrors.show(`parameter schema is not valid JSON: ${exc instanceof Error ? exc.message : exc}`);
      return;
    }
    try {
      await api.putAnalyzerConfig(workflows);
      cfgErrors.hide();
      cfgBanner.textContent = "settings saved";
      cfgBanner.hidden = false;
      await refreshConfig();
    } catch (exc) {
      cfgErrors.show(exc instanceof Error ? exc.message : String(exc));
    }
  }

  root.appendChild(
    el(
      "section",
      { class: "admin" },
      el("h2", {}, "Admin"),
      el(
        "div",
        { class: "admin-mappings" },
        el("h3", {}, "Group folder mappings"),
        mapErrors.node,
        el(
          "table",
          { class: "mapping-table" },
          el("thead", {}, el("tr", {}, el("th", {}, "group"), el("th", {}, "subfolder"), el("th", {}, ""))),
          mappingBody,
        ),
        el(
          "form",
          {
            class: "mapping-add",
            onsubmit: (ev: Event) => {
              ev.preventDefault();
              void addMapping();
            },
          },
          groupInput,
          subfolderInput,
          el("button", { type: "submit", class: "map-add" }, "Add mapping"),
        ),
      ),
      el(
        "div",
        { class: "admin-analyzer" },
        el("h3", {}, "Analyzer models"),
        cfgErrors.node,
        cfgBanner,
        modelsHost,
        el(
          "div",
          { class: "model-actions" },
          el("button", { type: "button", class: "model-add", onclick: () => addModel() }, "Add Model"),
          el("button", { type: "button", class: "cfg-save", onclick: () => void saveSettings() }, "Save Settings"),
          el(
            "button",
            { type: "button", class: "cfg-undo", onclick: () => void refreshConfig() },
            "Undo All Changes",
          ),
        ),
        el("details", {}, el("summary", {}, "Rendered settings file"), iniView),
      ),
    ),
  );

  const ready = Promise.all([refreshMappings(), refreshConfig()]).then(() => undefined);
  return { ready, destroy: () => undefined };
}
