import { afterEach, describe, expect, it } from "vitest";
import { renderSearch } from "../src/views/search.js";
import { FakeServer, flush, mount } from "./helpers.js";
import { IMAGES, IMPORT_BLOCK, SESSION_USER } from "./fixtures.js";

describe("search view", () => {
  afterEach(() => {
    document.body.innerHTML = "";
  });

  function setup(initialQuery = "") {
    const server = new FakeServer();
    server.on("GET", "/api/search", (req) =>
      req.query.get("q") === "0a1b2c3d-0000-4000-8000-000000000001" ? IMAGES : [],
    );
    server.on("GET", "/api/repo/annotations", (req) =>
      req.query.get("object") === "11" ? [IMPORT_BLOCK] : [],
    );
    const root = mount();
    const view = renderSearch(root, server.client(), SESSION_USER, initialQuery);
    return { server, root, view };
  }

  it("runs the query passed in the route immediately", async () => {
    const { server, root, view } = setup("0a1b2c3d-0000-4000-8000-000000000001");
    await view.ready;
    await flush();

    expect(server.last("GET", "/api/search").query.get("q")).toBe(
      "0a1b2c3d-0000-4000-8000-000000000001",
    );
    const rows = [...root.querySelectorAll(".search-hit")];
    expect(rows.length).toBe(2);
    expect(rows[0]?.textContent).toContain("nuclei_01.tif");
  });

  it("expands a hit into its annotation blocks", async () => {
    const { root, view } = setup("0a1b2c3d-0000-4000-8000-000000000001");
    await view.ready;
    await flush();

    (root.querySelector(".search-hit") as HTMLTableRowElement).click();
    await flush();

    const block = root.querySelector(".annotation-block") as HTMLElement;
    expect(block.querySelector("h4")?.textContent).toContain("omeroadi.import");
    const keys = [...block.querySelectorAll(".ann-key")].map((n) => n.textContent);
    const values = [...block.querySelectorAll(".ann-value")].map((n) => n.textContent);
    expect(keys).toEqual(["Added by", "UUID", "Filepath"]);
    expect(values[1]).toBe("0a1b2c3d-0000-4000-8000-000000000001");
  });

  it("reports no matches without erroring", async () => {
    const { root, view } = setup("nothing-here");
    await view.ready;
    await flush();

    expect(root.querySelector("tbody .empty")?.textContent).toBe("no matches");
    expect((root.querySelector(".error-box") as HTMLElement).hidden).toBe(true);
  });

  it("searches again when the form is submitted", async () => {
    const { server, root, view } = setup();
    await view.ready;

    const input = root.querySelector(".search-query") as HTMLInputElement;
    input.value = "0a1b2c3d-0000-4000-8000-000000000001";
    (root.querySelector(".search-form") as HTMLFormElement).dispatchEvent(
      new Event("submit", { cancelable: true }),
    );
    await flush();

    expect(server.sent("GET", "/api/search").length).toBe(1);
    expect([...root.querySelectorAll(".search-hit")].length).toBe(2);
  });
});
