import { describe, expect, it } from "vitest";
import { parseRoute } from "../src/main.js";

describe("hash routing", () => {
  it("maps known hashes to their views", () => {
    expect(parseRoute("#/import")).toEqual({ name: "import", q: "" });
    expect(parseRoute("#/monitor")).toEqual({ name: "monitor", q: "" });
    expect(parseRoute("#/analyze")).toEqual({ name: "analyze", q: "" });
    expect(parseRoute("#/status")).toEqual({ name: "status", q: "" });
    expect(parseRoute("#/admin")).toEqual({ name: "admin", q: "" });
  });

  it("extracts the search query", () => {
    expect(parseRoute("#/search?q=abc")).toEqual({ name: "search", q: "abc" });
    expect(parseRoute("#/search?q=a%20b")).toEqual({ name: "search", q: "a b" });
    expect(parseRoute("#/search")).toEqual({ name: "search", q: "" });
  });

  it("falls back to the monitor for unknown or empty hashes", () => {
    expect(parseRoute("")).toEqual({ name: "monitor", q: "" });
    expect(parseRoute("#/")).toEqual({ name: "monitor", q: "" });
    expect(parseRoute("#/nope")).toEqual({ name: "monitor", q: "" });
  });
});
