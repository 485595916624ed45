import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it, vi } from "vitest";

import { main } from "../src/cli.js";

const FIXTURES = join(__dirname, "fixtures");

describe("cli", () => {
  it("renders a comparison figure to a file", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const out = join(dir, "speed.svg");
    const code = main([
      "--kind", "speed_profile",
      "--log", join(FIXTURES, "intersection_hl_on.jsonl"),
      "--compare", join(FIXTURES, "intersection_hl_off.jsonl"),
      "--out", out,
    ]);
    expect(code).toBe(0);
    expect(existsSync(out)).toBe(true);
    expect(readFileSync(out, "utf8")).toContain("<svg");
  });

  it("exits 1 on missing flags", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(main(["--kind", "speed_profile"])).toBe(1);
    expect(err.mock.calls[0]![0]).toContain("usage:");
    err.mockRestore();
  });

  it("exits 1 on an unknown figure kind", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(main(["--kind", "pie", "--log", "x", "--out", "y"])).toBe(1);
    err.mockRestore();
  });

  it("exits 2 with a line-numbered message on a corrupt log", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const bad = join(dir, "bad.jsonl");
    const full = readFileSync(join(FIXTURES, "pedestrian_hl_on.jsonl"), "utf8");
    writeFileSync(bad, full.split("\n").slice(0, 10).join("\n"));
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const code = main([
      "--kind", "speed_profile", "--log", bad, "--out", join(dir, "o.svg"),
    ]);
    expect(code).toBe(2);
    expect(err.mock.calls[0]![0]).toMatch(/parse error: line 10/);
    err.mockRestore();
  });
});
